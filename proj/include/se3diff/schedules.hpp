#pragma once

// Noise schedules on the unit time interval [0, 1].
//
// Translations follow a variance-preserving OU process with linear rate
//   dX = -beta(s)/2 X ds + sqrt(beta(s)) dB,
// rotations a time-changed Brownian motion whose marginal at s is
// IGSO3(R0, sigma_r(s)^2).

#include <cmath>
#include <string>
#include <utility>

#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"

namespace se3diff {

struct TranslationSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  void validate() const {
    if (!(beta_min > 0.0 && beta_min < beta_max)) throw InvalidArgument("need 0 < beta_min < beta_max");
  }
};

enum class SigmaKind { logarithmic, linear };

inline SigmaKind parse_sigma_kind(const std::string& s) {
  if (s == "logarithmic" || s == "log") return SigmaKind::logarithmic;
  if (s == "linear") return SigmaKind::linear;
  throw InvalidArgument("unknown rotation schedule kind '" + s + "'");
}

inline std::string to_string(SigmaKind k) {
  return k == SigmaKind::logarithmic ? "logarithmic" : "linear";
}

struct RotationSchedule {
  double sigma_min = 0.1;
  double sigma_max = 1.5;
  SigmaKind kind = SigmaKind::logarithmic;

  void validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw InvalidArgument("need 0 < sigma_min < sigma_max");
  }
};

struct Schedules {
  TranslationSchedule trans;
  RotationSchedule rot;
};

struct TransMarginal {
  Vec3 mean = Vec3::Zero();
  double variance = 0.0;
};

namespace detail {
inline void check_unit_time(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("schedule time outside [0, 1]");
}
inline void check_positive_unit_time(double s) {
  if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("schedule time outside (0, 1]");
}
}  // namespace detail

inline double beta(double s, const TranslationSchedule& ts = {}) {
  detail::check_unit_time(s);
  return ts.beta_min + s * (ts.beta_max - ts.beta_min);
}

// Drift and diffusion coefficients of the translation SDE.
inline double f_x(double s, const TranslationSchedule& ts = {}) { return -0.5 * beta(s, ts); }
inline double g_x(double s, const TranslationSchedule& ts = {}) { return std::sqrt(beta(s, ts)); }

// Integrated rate: int_0^s beta(u) du.
inline double G_x(double s, const TranslationSchedule& ts = {}) {
  detail::check_unit_time(s);
  return s * ts.beta_min + 0.5 * s * s * (ts.beta_max - ts.beta_min);
}

inline TransMarginal trans_marginal(const Vec3& x0, double s, const TranslationSchedule& ts = {}) {
  detail::check_positive_unit_time(s);
  const double g = G_x(s, ts);
  return {std::exp(-0.5 * g) * x0, -std::expm1(-g)};
}

// Gradient in xt of log N(xt; e^{-G/2} x0, (1 - e^{-G}) I).
inline Vec3 trans_conditional_score(const Vec3& x0, const Vec3& xt, double s,
                                    const TranslationSchedule& ts = {}) {
  const TransMarginal m = trans_marginal(x0, s, ts);
  return -(xt - m.mean) / m.variance;
}

// Inverse of trans_conditional_score in x0.
inline Vec3 denoised_from_trans_score(const Vec3& score, const Vec3& xt, double s,
                                      const TranslationSchedule& ts = {}) {
  detail::check_positive_unit_time(s);
  const double g = G_x(s, ts);
  return (xt + (-std::expm1(-g)) * score) / std::exp(-0.5 * g);
}

inline double sigma_r(double s, const RotationSchedule& rs = {}) {
  detail::check_unit_time(s);
  if (rs.kind == SigmaKind::linear) return rs.sigma_min + s * (rs.sigma_max - rs.sigma_min);
  // log(s e^{smax} + (1 - s) e^{smin}), written to be exact at s = 0
  return rs.sigma_min + std::log1p(s * std::expm1(rs.sigma_max - rs.sigma_min));
}

inline double sigma_r_derivative(double s, const RotationSchedule& rs = {}) {
  detail::check_unit_time(s);
  if (rs.kind == SigmaKind::linear) return rs.sigma_max - rs.sigma_min;
  const double hi = std::exp(rs.sigma_max), lo = std::exp(rs.sigma_min);
  return (hi - lo) / (s * hi + (1.0 - s) * lo);
}

// Rotation marginal variance, the IGSO3 time at schedule time s.
inline double rot_variance(double s, const RotationSchedule& rs = {}) {
  const double sig = sigma_r(s, rs);
  return sig * sig;
}

inline double g_r(double s, const RotationSchedule& rs = {}) {
  return std::sqrt(2.0 * sigma_r(s, rs) * sigma_r_derivative(s, rs));
}

struct DsmWeights {
  double lambda_r = 0.0;
  double lambda_x = 0.0;
};

inline DsmWeights dsm_weights(double t, const Schedules& sch = {}, const TruncationConfig& cfg = {}) {
  detail::check_positive_unit_time(t);
  const double g = G_x(t, sch.trans);
  return {1.0 / expected_score_norm_sq(rot_variance(t, sch.rot), cfg),
          -std::expm1(-g) / std::exp(-0.5 * g)};
}

}  // namespace se3diff
