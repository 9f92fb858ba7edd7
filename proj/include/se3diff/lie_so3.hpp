#pragma once

// Rotation-group primitives. The Lie algebra so(3) carries the inner product
// <u, v> = tr(u v^T) / 2, under which the hat-basis Y1, Y2, Y3 is orthonormal;
// every norm, Gaussian and gradient in this library is taken in that metric.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "se3diff/errors.hpp"
#include "se3diff/random.hpp"

namespace se3diff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// A matrix in the tangent space at some rotation r, i.e. r * (skew).
using Tangent = Mat3;

inline constexpr double kPi = std::numbers::pi;

inline bool is_rotation_matrix(const Mat3& m, double tol = 1e-10) {
  if (!m.allFinite()) return false;
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  // Validating constructor.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-10) {
    if (!is_rotation_matrix(m, tol)) throw InvalidArgument("matrix is not a rotation");
    return Rotation(m);
  }

  // Trusted constructor for matrices produced by group operations.
  static Rotation unchecked(const Mat3& m) { return Rotation(m); }

  const Mat3& matrix() const noexcept { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  bool operator==(const Rotation& o) const { return m_ == o.m_; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

// Element of so(3).
class SkewMat {
 public:
  SkewMat() : m_(Mat3::Zero()) {}

  static SkewMat from_matrix(const Mat3& m, double tol = 1e-8) {
    if (!m.allFinite() || (m + m.transpose()).cwiseAbs().maxCoeff() > tol)
      throw InvalidArgument("matrix is not skew-symmetric");
    return SkewMat(0.5 * (m - m.transpose()));
  }

  const Mat3& matrix() const noexcept { return m_; }

  SkewMat operator*(double s) const { return SkewMat(m_ * s); }
  SkewMat operator+(const SkewMat& o) const { return SkewMat(m_ + o.m_); }

 private:
  friend SkewMat hat(const Vec3&);
  explicit SkewMat(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

struct AxisAngle {
  Vec3 axis = Vec3::UnitX();
  double angle = 0.0;
};

struct UnitQuaternion {
  double a = 1.0, b = 0.0, c = 0.0, d = 0.0;

  static UnitQuaternion normalized(double a, double b, double c, double d) {
    const double n = std::sqrt(a * a + b * b + c * c + d * d);
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("quaternion has zero norm");
    return {a / n, b / n, c / n, d / n};
  }

  UnitQuaternion operator-() const { return {-a, -b, -c, -d}; }
};

inline SkewMat hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return SkewMat(m);
}

inline Vec3 vee(const SkewMat& a) {
  const Mat3& m = a.matrix();
  return {m(2, 1), m(0, 2), m(1, 0)};
}

// Checked variant for raw matrices.
inline Vec3 vee(const Mat3& m) { return vee(SkewMat::from_matrix(m)); }

// Rodrigues' formula.
inline Rotation exp_so3(const SkewMat& a) {
  const Vec3 v = vee(a);
  const double theta = v.norm();
  const Mat3& A = a.matrix();
  if (theta < 1e-8) return Rotation::unchecked(Mat3::Identity() + A + 0.5 * A * A);
  const Mat3 K = A / theta;
  return Rotation::unchecked(Mat3::Identity() + std::sin(theta) * K +
                             (1.0 - std::cos(theta)) * K * K);
}

// Shepperd's method, canonicalized to a >= 0; when a == 0 the first nonzero of
// (b, c, d) is made positive.
inline UnitQuaternion quat_from_rotation(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double tr = m.trace();
  double a, b, c, d;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    a = 0.25 * s;
    b = (m(2, 1) - m(1, 2)) / s;
    c = (m(0, 2) - m(2, 0)) / s;
    d = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    a = (m(2, 1) - m(1, 2)) / s;
    b = 0.25 * s;
    c = (m(0, 1) + m(1, 0)) / s;
    d = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 - m(0, 0) + m(1, 1) - m(2, 2));
    a = (m(0, 2) - m(2, 0)) / s;
    b = (m(0, 1) + m(1, 0)) / s;
    c = 0.25 * s;
    d = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 - m(0, 0) - m(1, 1) + m(2, 2));
    a = (m(1, 0) - m(0, 1)) / s;
    b = (m(0, 2) + m(2, 0)) / s;
    c = (m(1, 2) + m(2, 1)) / s;
    d = 0.25 * s;
  }
  UnitQuaternion q = UnitQuaternion::normalized(a, b, c, d);
  bool flip = q.a < 0.0;
  if (q.a == 0.0) {
    flip = q.b < 0.0 || (q.b == 0.0 && (q.c < 0.0 || (q.c == 0.0 && q.d < 0.0)));
  }
  return flip ? -q : q;
}

inline Rotation rotation_from_quat(const UnitQuaternion& q) {
  const double a = q.a, b = q.b, c = q.c, d = q.d;
  Mat3 m;
  m << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
       2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b),
       2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d;
  return Rotation::unchecked(m);
}

// Rotation vector (axis * angle) with angle in [0, pi], through the
// quaternion so the half-turn axis stays well conditioned.
inline Vec3 log_vector(const Rotation& r) {
  const UnitQuaternion q = quat_from_rotation(r);
  const Vec3 u(q.b, q.c, q.d);
  const double s = u.norm();
  // s = sin(theta/2), q.a = cos(theta/2) >= 0
  if (s < 0.5e-6) {
    const double ratio = s / q.a;
    return u * (2.0 / q.a) * (1.0 - ratio * ratio / 3.0);
  }
  return u * (2.0 * std::atan2(s, q.a) / s);
}

inline SkewMat log_so3(const Rotation& r) { return hat(log_vector(r)); }

// Same value as arccos((tr r - 1) / 2) but via atan2, which keeps full
// precision near 0 and pi.
inline double rotation_angle(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double s = 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)).norm();
  return std::atan2(s, c);
}

inline AxisAngle axis_angle_from_rotation(const Rotation& r) {
  const Vec3 v = log_vector(r);
  const double angle = v.norm();
  if (angle == 0.0) return {};
  return {v / angle, angle};
}

inline Rotation rotation_from_axis_angle(const AxisAngle& aa) {
  return exp_so3(hat(aa.axis.normalized() * aa.angle));
}

// Left-transport of a tangent at r back to the algebra, validated.
inline SkewMat to_algebra(const Rotation& r, const Tangent& tangent, double tol = 1e-8) {
  const Mat3 a = r.matrix().transpose() * tangent;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!a.allFinite() || (a + a.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw InvalidArgument("matrix is not in the tangent space at the base rotation");
  return SkewMat::from_matrix(0.5 * (a - a.transpose()), tol * scale);
}

inline Rotation expmap(const Rotation& r0, const Tangent& tangent) {
  return r0 * exp_so3(to_algebra(r0, tangent));
}

// Norm in the tr(u v^T)/2 metric; left-invariant, so valid at any base point.
inline double tangent_norm_sq(const Tangent& t) { return 0.5 * t.squaredNorm(); }

// Projection onto the nearest rotation (polar factor via SVD).
inline Rotation renormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation::unchecked(u * v.transpose());
}

inline Rotation renormalize(const Rotation& r) { return renormalize(r.matrix()); }

inline Vec3 sample_standard_normal3(Rng& rng) {
  std::normal_distribution<double> normal;
  const double x = normal(rng);
  const double y = normal(rng);
  const double z = normal(rng);
  return {x, y, z};
}

inline Vec3 sample_unit_vector(Rng& rng) {
  for (;;) {
    const Vec3 v = sample_standard_normal3(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// Zero-mean, identity-covariance Gaussian in the basis {r0 Y1, r0 Y2, r0 Y3}.
inline Tangent sample_tangent_gaussian(const Rotation& r0, Rng& rng) {
  return r0.matrix() * hat(sample_standard_normal3(rng)).matrix();
}

// Inverse-CDF sampler for an angle density tabulated on a uniform grid over
// [0, pi]. The CDF is the normalized trapezoidal integral; inversion is by
// linear interpolation.
class AngleInverseCdf {
 public:
  AngleInverseCdf() = default;

  AngleInverseCdf(std::vector<double> grid, std::vector<double> cdf)
      : grid_(std::move(grid)), cdf_(std::move(cdf)) {
    if (grid_.size() < 2 || grid_.size() != cdf_.size())
      throw InvalidArgument("inverse CDF needs at least two matching grid points");
  }

  // Builds the trapezoidal CDF of `pdf` (values on `grid`), normalized to end at 1.
  static AngleInverseCdf from_pdf(std::vector<double> grid, const std::vector<double>& pdf) {
    if (grid.size() < 2 || grid.size() != pdf.size())
      throw InvalidArgument("inverse CDF needs at least two matching grid points");
    std::vector<double> cdf(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i)
      cdf[i] = cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (grid[i] - grid[i - 1]);
    const double total = cdf.back();
    if (!(total > 0.0)) throw DomainError("angle density integrates to zero");
    for (double& c : cdf) c /= total;
    cdf.back() = 1.0;
    return AngleInverseCdf(std::move(grid), std::move(cdf));
  }

  double operator()(double u) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return grid_.front();
    if (it == cdf_.end()) return grid_.back();
    const std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
    const std::size_t lo = hi - 1;
    const double span = cdf_[hi] - cdf_[lo];
    const double w = span > 0.0 ? (u - cdf_[lo]) / span : 0.0;
    return grid_[lo] + w * (grid_[hi] - grid_[lo]);
  }

  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return (*this)(unif(rng));
  }

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& cdf() const noexcept { return cdf_; }

 private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
};

inline std::vector<double> uniform_angle_grid(std::size_t m) {
  if (m < 2) throw InvalidArgument("angle grid needs at least 2 points");
  std::vector<double> grid(m);
  for (std::size_t i = 0; i < m; ++i)
    grid[i] = kPi * static_cast<double>(i) / static_cast<double>(m - 1);
  return grid;
}

// Haar-uniform rotations: uniform axis, angle with density (1 - cos w) / pi.
class UniformSO3Sampler {
 public:
  explicit UniformSO3Sampler(std::size_t grid_size = 1000) {
    std::vector<double> grid = uniform_angle_grid(grid_size);
    std::vector<double> pdf(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) pdf[i] = (1.0 - std::cos(grid[i])) / kPi;
    angle_ = AngleInverseCdf::from_pdf(std::move(grid), pdf);
  }

  Rotation operator()(Rng& rng) const {
    const double omega = angle_.sample(rng);
    return exp_so3(hat(sample_unit_vector(rng) * omega));
  }

 private:
  AngleInverseCdf angle_;
};

inline Rotation sample_uniform_so3(Rng& rng, std::size_t grid_size = 1000) {
  if (grid_size == 1000) {
    static const UniformSO3Sampler sampler(1000);
    return sampler(rng);
  }
  return UniformSO3Sampler(grid_size)(rng);
}

}  // namespace se3diff
