#pragma once

// Protein backbone geometry: residue frames from N, CA, C atoms, atoms from
// frames plus the psi torsion, and the training losses as pure functions.
// Coordinates are in nanometers.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"
#include "se3diff/schedules.hpp"
#include "se3diff/se3_process.hpp"

namespace se3diff {

struct ResidueAtoms {
  Vec3 N = Vec3::Zero();
  Vec3 CA = Vec3::Zero();
  Vec3 C = Vec3::Zero();
  Vec3 O = Vec3::Zero();

  std::array<Vec3, 4> as_array() const { return {N, CA, C, O}; }
};

// Local coordinates of one residue in its own frame, CA at the origin.
// Defaults are standard idealized values (C along +x, N in the upper xy-plane).
struct IdealGeometry {
  Vec3 N_star{-0.0525, 0.1363, 0.0};
  Vec3 CA_star{0.0, 0.0, 0.0};
  Vec3 C_star{0.1526, 0.0, 0.0};
  Vec3 O_star{0.2153, -0.1062, 0.0};

  void validate() const {
    if (CA_star != Vec3::Zero()) throw InvalidArgument("CA_star must be the origin");
    if (!(N_star.norm() > 0.0) || !(C_star.norm() > 0.0) || !((O_star - C_star).norm() > 0.0))
      throw InvalidArgument("ideal bond lengths must be positive");
  }
};

// Torsion stored as the unit pair (cos psi, sin psi).
class Psi {
 public:
  Psi() = default;
  static Psi from_angle(double psi) { return Psi(std::cos(psi), std::sin(psi)); }
  static Psi from_pair(double c, double s) {
    const double n = std::hypot(c, s);
    if (!(n > 0.0)) throw InvalidArgument("psi pair has zero norm");
    return Psi(c / n, s / n);
  }
  double cos() const noexcept { return c_; }
  double sin() const noexcept { return s_; }
  double angle() const { return std::atan2(s_, c_); }

 private:
  Psi(double c, double s) : c_(c), s_(s) {}
  double c_ = 1.0, s_ = 0.0;
};

inline Frame atom2frame(const ResidueAtoms& res) {
  const Vec3 v1 = res.C - res.CA;
  const Vec3 v2 = res.N - res.CA;
  if (!(v1.cross(v2).norm() > 1e-9)) throw InvalidArgument("N, CA, C are collinear");
  const Vec3 e1 = v1.normalized();
  const Vec3 e2 = (v2 - e1.dot(v2) * e1).normalized();
  const Vec3 e3 = e1.cross(e2);
  Mat3 m;
  m.col(0) = e1;
  m.col(1) = e2;
  m.col(2) = e3;
  return {Rotation::unchecked(m), res.CA};
}

inline ResidueAtoms frame_to_atoms(const Frame& f, const Psi& psi, const IdealGeometry& geom = {}) {
  // O* turned by psi about the CA* -> C* bond (a line through the origin).
  const Vec3 k = (geom.C_star - geom.CA_star).normalized();
  const Vec3& o = geom.O_star;
  const Vec3 o_rot = o * psi.cos() + k.cross(o) * psi.sin() + k * k.dot(o) * (1.0 - psi.cos());
  return {f.apply(geom.N_star), f.apply(geom.CA_star), f.apply(geom.C_star), f.apply(o_rot)};
}

inline std::vector<ResidueAtoms> frames_to_atoms(const FrameSet& fs, const std::vector<Psi>& psi,
                                                 const IdealGeometry& geom = {}) {
  if (psi.size() != fs.size()) throw InvalidArgument("need one psi per frame");
  std::vector<ResidueAtoms> out;
  out.reserve(fs.size());
  for (std::size_t n = 0; n < fs.size(); ++n) out.push_back(frame_to_atoms(fs.frames[n], psi[n], geom));
  return out;
}

// Frames from atoms, centered for diffusion.
inline FrameSet atoms_to_frames(const std::vector<ResidueAtoms>& atoms) {
  FrameSet fs;
  for (const auto& a : atoms) fs.frames.push_back(atom2frame(a));
  return center(fs);
}

inline double l_bb(const std::vector<ResidueAtoms>& pred, const std::vector<ResidueAtoms>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw InvalidArgument("backbone lengths differ or are empty");
  double s = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const auto p = pred[n].as_array(), q = truth[n].as_array();
    for (int a = 0; a < 4; ++a) s += (p[a] - q[a]).squaredNorm();
  }
  return s / (4.0 * static_cast<double>(pred.size()));
}

inline constexpr double kNeighborCutoffNm = 0.6;

// Pairwise-distance loss over atom pairs whose true distance is under the
// cutoff, normalized by (number of such pairs) - N.
inline double l_2d(const std::vector<ResidueAtoms>& pred, const std::vector<ResidueAtoms>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw InvalidArgument("backbone lengths differ or are empty");
  const std::size_t n_res = pred.size();
  std::vector<Vec3> p, q;
  for (std::size_t n = 0; n < n_res; ++n)
    for (const auto& v : pred[n].as_array()) p.push_back(v);
  for (std::size_t n = 0; n < n_res; ++n)
    for (const auto& v : truth[n].as_array()) q.push_back(v);
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double d = (q[i] - q[j]).norm();
      if (!(d < kNeighborCutoffNm)) continue;
      const double dh = (p[i] - p[j]).norm();
      sum += (d - dh) * (d - dh);
      count += 1.0;
    }
  }
  const double z = count - static_cast<double>(n_res);
  if (!(z > 0.0)) throw DomainError("no neighbor pairs beyond self-pairs within the cutoff");
  return sum / z;
}

struct DsmLoss {
  double rot = 0.0;
  double trans = 0.0;
};

// Rotation term: lambda_r * mean ||pred - exact conditional score||^2.
// Translation term in the denoised parameterization: mean ||X0 - X0_hat||^2,
// with X0_hat recovered from the predicted translation score.
inline DsmLoss dsm_loss(const std::vector<TangentSE3>& score_pred, const FrameSet& fs0, const FrameSet& fs_t,
                        double t, const Schedules& sch, double lambda_r, const TruncationConfig& cfg = {}) {
  if (score_pred.size() != fs0.size() || fs0.size() != fs_t.size() || fs0.size() == 0)
    throw InvalidArgument("dsm_loss inputs differ in length");
  const double rot_t = rot_variance(t, sch.rot);
  DsmLoss loss;
  for (std::size_t n = 0; n < fs0.size(); ++n) {
    const Tangent exact = conditional_score(fs0.frames[n].rotation, fs_t.frames[n].rotation, rot_t, cfg);
    loss.rot += tangent_norm_sq(score_pred[n].rot_part - exact);
    const Vec3 x0_hat =
        denoised_from_trans_score(score_pred[n].trans_part, fs_t.frames[n].translation, t, sch.trans);
    loss.trans += (fs0.frames[n].translation - x0_hat).squaredNorm();
  }
  const double n = static_cast<double>(fs0.size());
  loss.rot *= lambda_r / n;
  loss.trans /= n;
  return loss;
}

inline DsmLoss dsm_loss(const std::vector<TangentSE3>& score_pred, const FrameSet& fs0, const FrameSet& fs_t,
                        double t, const Schedules& sch = {}, const TruncationConfig& cfg = {}) {
  return dsm_loss(score_pred, fs0, fs_t, t, sch, dsm_weights(t, sch, cfg).lambda_r, cfg);
}

struct LossComponents {
  DsmLoss dsm;
  double bb = 0.0;
  double two_d = 0.0;
};

inline constexpr double kAuxLossWeight = 0.25;

// L_dsm + w * 1{t < T_F / 4} (L_bb + L_2D).
inline double total_loss(const LossComponents& c, double t, double w = kAuxLossWeight, double t_final = 1.0) {
  if (!(t > 0.0 && t <= t_final)) throw InvalidArgument("t outside (0, T_F]");
  if (!(w >= 0.0)) throw InvalidArgument("auxiliary weight must be nonnegative");
  const double aux = t < t_final / 4.0 ? w * (c.bb + c.two_d) : 0.0;
  return c.dsm.rot + c.dsm.trans + aux;
}

}  // namespace se3diff
