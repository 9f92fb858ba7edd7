#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "se3diff/lie_so3.hpp"
#include "se3diff/stats.hpp"

using namespace se3diff;

namespace {

Vec3 random_vector(Rng& rng, double norm) {
  return sample_unit_vector(rng) * norm;
}

double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Hat, ZeroAndBasis) {
  EXPECT_EQ(hat(Vec3::Zero()).matrix(), Mat3::Zero());
  Mat3 expected;
  expected << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  EXPECT_EQ(hat(Vec3(1, 2, 3)).matrix(), expected);
}

TEST(Hat, AlwaysSkewAndVeeInverts) {
  Rng rng(1);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 100; ++i) {
    const Vec3 v(normal(rng), normal(rng), normal(rng));
    const Mat3 a = hat(v).matrix();
    EXPECT_EQ(a + a.transpose(), Mat3::Zero());
    EXPECT_EQ(vee(hat(v)), v);
  }
  EXPECT_EQ(vee(hat(Vec3(1, 2, 3))), Vec3(1, 2, 3));
  EXPECT_EQ(vee(Mat3(Mat3::Zero())), Vec3::Zero());
}

TEST(Vee, RejectsNonSkew) {
  Mat3 m = hat(Vec3(1, 2, 3)).matrix();
  m(0, 1) += 1e-6;
  EXPECT_THROW(vee(m), InvalidArgument);
}

TEST(ExpSo3, ClosedFormCases) {
  EXPECT_LT(max_abs(exp_so3(hat(Vec3::Zero())).matrix() - Mat3::Identity()), 1e-15);
  Mat3 quarter;
  quarter << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_LT(max_abs(exp_so3(hat(Vec3(kPi / 2, 0, 0))).matrix() - quarter), 1e-15);
  const Mat3 half = Eigen::Vector3d(1, -1, -1).asDiagonal();
  EXPECT_LT(max_abs(exp_so3(hat(Vec3(kPi, 0, 0))).matrix() - half), 1e-15);
}

TEST(ExpSo3, TaylorBranchIsContinuous) {
  const Vec3 v(3e-9, -2e-9, 1e-9);
  const Mat3 taylor = exp_so3(hat(v)).matrix();
  const Mat3 a = hat(v).matrix();
  EXPECT_LT(max_abs(taylor - (Mat3::Identity() + a)), 1e-16);
  EXPECT_TRUE(is_rotation_matrix(taylor, 1e-15));
}

TEST(LogSo3, IdentityAndHalfTurn) {
  EXPECT_EQ(log_so3(Rotation::identity()).matrix(), Mat3::Zero());
  const Rotation half = Rotation::from_matrix(Eigen::Vector3d(1, -1, -1).asDiagonal());
  const Vec3 v = vee(log_so3(half));
  EXPECT_NEAR(std::abs(v.x()), kPi, 1e-12);
  EXPECT_NEAR(v.y(), 0.0, 1e-12);
  EXPECT_NEAR(v.z(), 0.0, 1e-12);
  // Either axis sign is acceptable; the rotation must come back.
  EXPECT_LT(max_abs(exp_so3(log_so3(half)).matrix() - half.matrix()), 1e-12);
}

TEST(LogSo3, RoundTripAtNormTwoPointFive) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v = random_vector(rng, 2.5);
    EXPECT_LT(max_abs(log_so3(exp_so3(hat(v))).matrix() - hat(v).matrix()), 1e-10);
  }
}

TEST(LogSo3, RoundTripNearZeroAndPi) {
  Rng rng(3);
  for (double norm : {1e-12, 1e-9, 1e-7, 5e-7, 2e-6, 1e-3, kPi - 1e-3, kPi - 1e-6}) {
    for (int i = 0; i < 20; ++i) {
      const Vec3 v = random_vector(rng, norm);
      const Vec3 back = vee(log_so3(exp_so3(hat(v))));
      EXPECT_LT((back - v).norm(), 1e-9) << "norm " << norm;
    }
  }
  for (int i = 0; i < 20; ++i) {
    const Vec3 v = random_vector(rng, kPi);
    const Rotation r = exp_so3(hat(v));
    EXPECT_LT(max_abs(exp_so3(log_so3(r)).matrix() - r.matrix()), 1e-9);
    EXPECT_NEAR(vee(log_so3(r)).norm(), kPi, 1e-7);
  }
}

TEST(RotationAngle, Basics) {
  EXPECT_EQ(rotation_angle(Rotation::identity()), 0.0);
  EXPECT_NEAR(rotation_angle(Rotation::from_matrix(Eigen::Vector3d(1, -1, -1).asDiagonal())), kPi, 1e-15);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Rotation g = sample_uniform_so3(rng);
    const Rotation r = sample_uniform_so3(rng);
    const double w = rotation_angle(r);
    EXPECT_NEAR(rotation_angle(g * r * g.inverse()), w, 1e-12);
    EXPECT_NEAR(rotation_angle(r.inverse()), w, 1e-14);
    EXPECT_NEAR(w, std::acos(std::clamp((r.matrix().trace() - 1) / 2, -1.0, 1.0)), 1e-7);
  }
}

TEST(Expmap, DefinitionUnrolled) {
  Rng rng(5);
  const Vec3 v0(0.3, -0.2, 0.9);
  EXPECT_LT(max_abs(expmap(Rotation::identity(), hat(v0).matrix()).matrix() - exp_so3(hat(v0)).matrix()), 1e-15);
  for (int i = 0; i < 100; ++i) {
    const Rotation r0 = sample_uniform_so3(rng);
    EXPECT_EQ(expmap(r0, Tangent::Zero()).matrix(), r0.matrix());
    const Vec3 v = random_vector(rng, 1.7);
    const Rotation a = expmap(r0, r0.matrix() * hat(v).matrix());
    EXPECT_LT(max_abs(a.matrix() - (r0 * exp_so3(hat(v))).matrix()), 1e-14);
  }
}

TEST(Expmap, RejectsNonTangent) {
  const Rotation r0 = exp_so3(hat(Vec3(0.1, 0.2, 0.3)));
  EXPECT_THROW(expmap(r0, Mat3::Identity()), InvalidArgument);
}

TEST(TangentGaussian, InTangentSpace) {
  Rng rng(6);
  const Rotation r0 = sample_uniform_so3(rng);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = r0.matrix().transpose() * sample_tangent_gaussian(r0, rng);
    EXPECT_LT(max_abs(a + a.transpose()), 1e-12);
  }
}

TEST(TangentGaussian, ZeroMeanIdentityCovariance) {
  Rng rng(7);
  const Rotation r0 = exp_so3(hat(Vec3(0.4, -1.1, 0.5)));
  const int n = 100000;
  Mat3 cov = Mat3::Zero();
  Mat3 mean_out = Mat3::Zero();
  for (int i = 0; i < n; ++i) {
    const Tangent z = sample_tangent_gaussian(r0, rng);
    const Vec3 d = vee(SkewMat::from_matrix(r0.matrix().transpose() * z));
    cov += d * d.transpose();
    mean_out += z;
  }
  cov /= n;
  mean_out /= n;
  EXPECT_LT(max_abs(cov - Mat3::Identity()), 0.02);
  EXPECT_LT(max_abs(mean_out), 0.02);
}

TEST(TangentGaussian, LeftTransportedLawMatches) {
  // g * Z(r0) and Z(g r0) have the same coefficients in {g r0 Y_i}.
  Rng rng_a(8), rng_b(9);
  const Rotation r0 = exp_so3(hat(Vec3(0.2, 0.1, -0.3)));
  const Rotation g = exp_so3(hat(Vec3(-1.0, 0.7, 0.4)));
  const Rotation gr0 = g * r0;
  const int n = 100000;
  Mat3 cov_a = Mat3::Zero(), cov_b = Mat3::Zero();
  Vec3 mean_a = Vec3::Zero(), mean_b = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3 a = vee(SkewMat::from_matrix(gr0.matrix().transpose() * (g.matrix() * sample_tangent_gaussian(r0, rng_a))));
    const Vec3 b = vee(SkewMat::from_matrix(gr0.matrix().transpose() * sample_tangent_gaussian(gr0, rng_b)));
    cov_a += a * a.transpose();
    cov_b += b * b.transpose();
    mean_a += a;
    mean_b += b;
  }
  EXPECT_LT(max_abs((cov_a - cov_b) / n), 0.02);
  EXPECT_LT(((mean_a - mean_b) / n).cwiseAbs().maxCoeff(), 0.02);
}

TEST(UniformSO3, MeanAngleAndColumns) {
  Rng rng(10);
  const int n = 100000;
  double angle_sum = 0.0;
  Vec3 col_sum[3] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  for (int i = 0; i < n; ++i) {
    const Rotation r = sample_uniform_so3(rng);
    angle_sum += rotation_angle(r);
    for (int c = 0; c < 3; ++c) col_sum[c] += r.matrix().col(c);
  }
  // int_0^pi w (1 - cos w) / pi dw = pi/2 + 2/pi
  EXPECT_NEAR(angle_sum / n, kPi / 2 + 2 / kPi, 0.01);
  for (int c = 0; c < 3; ++c) EXPECT_LT((col_sum[c] / n).norm(), 0.01);
}

TEST(UniformSO3, AngleLawInvariantUnderLeftShift) {
  Rng rng_a(11), rng_b(12);
  const Rotation g = exp_so3(hat(Vec3(0.5, 2.0, -0.3)));
  std::vector<double> a, b;
  for (int i = 0; i < 100000; ++i) {
    a.push_back(rotation_angle(g * sample_uniform_so3(rng_a)));
    b.push_back(rotation_angle(sample_uniform_so3(rng_b)));
  }
  EXPECT_LT(ks_two_sample(a, b), 0.02);
}

TEST(UniformSO3, NonDefaultGrid) {
  Rng rng(13);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(is_rotation_matrix(sample_uniform_so3(rng, 50).matrix()));
}

TEST(Quaternion, IdentityAndDoubleCover) {
  const UnitQuaternion q = quat_from_rotation(Rotation::identity());
  EXPECT_EQ(q.a, 1.0);
  EXPECT_EQ(q.b, 0.0);
  EXPECT_EQ(q.c, 0.0);
  EXPECT_EQ(q.d, 0.0);
  EXPECT_EQ(rotation_from_quat({1, 0, 0, 0}).matrix(), Mat3::Identity());

  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    const Rotation r = sample_uniform_so3(rng);
    const UnitQuaternion p = quat_from_rotation(r);
    EXPECT_NEAR(p.a * p.a + p.b * p.b + p.c * p.c + p.d * p.d, 1.0, 1e-12);
    EXPECT_LT(max_abs(rotation_from_quat(p).matrix() - r.matrix()), 1e-12);
    EXPECT_LT(max_abs(rotation_from_quat(-p).matrix() - rotation_from_quat(p).matrix()), 1e-15);
  }
}

TEST(Quaternion, HalfTurnSignConvention) {
  // Exact half-turn about y, so the scalar part is exactly zero.
  Mat3 m = Mat3::Zero();
  m(0, 0) = -1.0;
  m(1, 1) = 1.0;
  m(2, 2) = -1.0;
  const UnitQuaternion q = quat_from_rotation(Rotation::from_matrix(m));
  EXPECT_EQ(q.a, 0.0);
  EXPECT_GT(q.c, 0.0);
}

TEST(AxisAngle, RoundTrip) {
  const AxisAngle aa{Vec3(0, 0, 1), 1.2};
  const AxisAngle back = axis_angle_from_rotation(rotation_from_axis_angle(aa));
  EXPECT_NEAR(back.angle, 1.2, 1e-14);
  EXPECT_LT((back.axis - aa.axis).norm(), 1e-14);
  EXPECT_EQ(axis_angle_from_rotation(Rotation::identity()).angle, 0.0);
}

TEST(Rotation, ValidatingConstructor) {
  EXPECT_THROW(Rotation::from_matrix(2.0 * Mat3::Identity()), InvalidArgument);
  EXPECT_THROW(Rotation::from_matrix(Eigen::Vector3d(1, 1, -1).asDiagonal()), InvalidArgument);
}

TEST(Rotation, ChainedCompositionDrift) {
  Rng rng(15);
  std::vector<Rotation> steps;
  for (int i = 0; i < 64; ++i) steps.push_back(exp_so3(hat(random_vector(rng, 0.3))));
  Rotation raw, renorm;
  for (int i = 0; i < 10000; ++i) {
    raw = raw * steps[i % steps.size()];
    renorm = renorm * steps[i % steps.size()];
    if ((i + 1) % 100 == 0) renorm = renormalize(renorm);
  }
  EXPECT_TRUE(is_rotation_matrix(raw.matrix(), 1e-10));
  EXPECT_TRUE(is_rotation_matrix(renorm.matrix(), 1e-12));
}

TEST(Renormalize, ProjectsPerturbedMatrix) {
  const Rotation r = exp_so3(hat(Vec3(0.3, -0.4, 1.0)));
  Mat3 noisy = r.matrix();
  noisy(0, 0) += 1e-6;
  noisy(2, 1) -= 2e-6;
  const Rotation fixed = renormalize(noisy);
  EXPECT_TRUE(is_rotation_matrix(fixed.matrix(), 1e-14));
  EXPECT_LT(max_abs(fixed.matrix() - r.matrix()), 3e-6);
}
