#pragma once

// The isotropic Gaussian on SO(3): the Brownian-motion transition density,
// written as a truncated character series in the rotation angle, its angular
// derivative, the conditional score, and inverse-transform sampling.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "se3diff/errors.hpp"
#include "se3diff/lie_so3.hpp"

namespace se3diff {

struct TruncationConfig {
  int series_terms = 2000;         // L: terms l = 0 .. L-1
  std::size_t angle_grid = 1000;   // M: table points on [0, pi]
  double omega_eps = 1e-6;         // below this angle the analytic limit is used
  double t_min = 0.01;             // below this the truncated series is not trusted

  void validate() const {
    if (series_terms < 1) throw InvalidArgument("series_terms must be >= 1");
    if (angle_grid < 2) throw InvalidArgument("angle_grid must be >= 2");
    if (!(omega_eps > 0.0 && omega_eps < 1e-3)) throw InvalidArgument("omega_eps must lie in (0, 1e-3)");
    if (!(t_min > 0.0)) throw InvalidArgument("t_min must be positive");
  }
};

namespace detail {

inline void check_time(double t, const TruncationConfig& cfg) {
  if (!std::isfinite(t) || t < cfg.t_min * (1.0 - 1e-12))
    throw DomainError("diffusion time " + std::to_string(t) + " is below t_min " +
                      std::to_string(cfg.t_min));
}

inline double check_angle(double omega) {
  if (!(omega >= -1e-12 && omega <= kPi + 1e-12))
    throw InvalidArgument("rotation angle outside [0, pi]");
  return std::clamp(omega, 0.0, kPi);
}

// Below this angle the derivative of each character is taken from its Taylor
// expansion; the closed form cancels catastrophically there.
inline constexpr double kSmallAngle = 1e-3;

// Relative size below which series terms no longer change the partial sum.
inline constexpr double kTailTolerance = 1e-18;

}  // namespace detail

struct SeriesValue {
  double f = 0.0;
  double df = 0.0;  // d/d omega
};

// Truncated series and its termwise omega-derivative, evaluated together.
// Terms whose magnitude bound falls below the double resolution of the partial
// sum are skipped; the result equals the L-term sum to rounding.
inline SeriesValue igso3_series(double omega, double t, const TruncationConfig& cfg) {
  cfg.validate();
  detail::check_time(t, cfg);
  omega = detail::check_angle(omega);

  SeriesValue out;
  const bool at_zero = omega < cfg.omega_eps;
  const bool small = omega < detail::kSmallAngle;
  const double half = 0.5 * omega;
  const double sh = std::sin(half), ch = std::cos(half);
  const double step_c = std::cos(omega), step_s = std::sin(omega);
  double ca = ch, sa = sh;  // cos, sin of (l + 1/2) omega
  double bound_sum = 0.0;

  for (int l = 0; l < cfg.series_terms; ++l) {
    const double dl = static_cast<double>(l);
    const double w = std::exp(-dl * (dl + 1.0) * t / 2.0);
    const double mult = 2.0 * dl + 1.0;
    const double bound = mult * w * (mult + dl * (dl + 1.0));
    if (bound == 0.0) break;
    bound_sum += bound;

    double chi, dchi;
    if (at_zero) {
      chi = mult;
      dchi = 0.0;
    } else {
      chi = sa / sh;
      if (small) {
        const double s2 = dl * (dl + 1.0) * mult / 6.0;
        const double s4 = dl * (dl + 1.0) * mult * (3.0 * dl * dl + 3.0 * dl - 1.0) / 30.0;
        dchi = -2.0 * omega * s2 + omega * omega * omega * s4 / 3.0;
      } else {
        const double a = dl + 0.5;
        dchi = (a * ca * sh - 0.5 * ch * sa) / (sh * sh);
      }
    }
    out.f += mult * w * chi;
    out.df += mult * w * dchi;

    const double nc = ca * step_c - sa * step_s;
    const double ns = sa * step_c + ca * step_s;
    ca = nc;
    sa = ns;

    if (dl * dl * t > 4.0 && bound < detail::kTailTolerance * bound_sum) break;
  }
  return out;
}

inline double f_igso3(double omega, double t, const TruncationConfig& cfg = {}) {
  return igso3_series(omega, t, cfg).f;
}

inline double df_igso3_domega(double omega, double t, const TruncationConfig& cfg = {}) {
  return igso3_series(omega, t, cfg).df;
}

// Density of IGSO3(rt; r0, t) with respect to the Haar probability measure.
inline double igso3_density(const Rotation& r0, const Rotation& rt, double t,
                            const TruncationConfig& cfg = {}) {
  return f_igso3(rotation_angle(r0.inverse() * rt), t, cfg);
}

// Gradient at rt of log IGSO3(rt; r0, t); a tangent at rt.
inline Tangent conditional_score(const Rotation& r0, const Rotation& rt, double t,
                                 const TruncationConfig& cfg = {}) {
  cfg.validate();
  detail::check_time(t, cfg);
  const Vec3 v = log_vector(r0.inverse() * rt);
  const double omega = v.norm();
  if (omega < cfg.omega_eps) return Tangent::Zero();
  const SeriesValue s = igso3_series(omega, t, cfg);
  if (!(s.f > 0.0))
    throw DomainError("truncated IGSO3 density is not positive at omega=" + std::to_string(omega) +
                      ", t=" + std::to_string(t));
  return rt.matrix() * hat(v).matrix() * (s.df / (s.f * omega));
}

// Tabulated density, derivative and angle CDF for one diffusion time.
class IGSO3Table {
 public:
  IGSO3Table() = default;

  IGSO3Table(double t, int series_terms, std::vector<double> omega_grid, std::vector<double> f_vals,
             std::vector<double> df_vals, std::vector<double> cdf_vals)
      : t_(t),
        series_terms_(series_terms),
        f_(std::move(f_vals)),
        df_(std::move(df_vals)),
        inverse_cdf_(std::move(omega_grid), std::move(cdf_vals)) {
    const auto& grid = inverse_cdf_.grid();
    const auto& cdf = inverse_cdf_.cdf();
    if (f_.size() != grid.size() || df_.size() != grid.size())
      throw InvalidArgument("table columns differ in length");
    for (std::size_t i = 1; i < cdf.size(); ++i)
      if (cdf[i] < cdf[i - 1]) throw DomainError("table CDF is not monotone");
    if (cdf.front() != 0.0 || std::abs(cdf.back() - 1.0) > 1e-6)
      throw DomainError("table CDF does not span [0, 1]");
  }

  double t() const noexcept { return t_; }
  int series_terms() const noexcept { return series_terms_; }
  std::size_t size() const noexcept { return f_.size(); }
  const std::vector<double>& omega_grid() const noexcept { return inverse_cdf_.grid(); }
  const std::vector<double>& f_vals() const noexcept { return f_; }
  const std::vector<double>& df_vals() const noexcept { return df_; }
  const std::vector<double>& cdf_vals() const noexcept { return inverse_cdf_.cdf(); }

  double sample_angle(Rng& rng) const { return inverse_cdf_.sample(rng); }
  double angle_quantile(double u) const { return inverse_cdf_(u); }

  // Angle CDF at omega, linear between grid points.
  double angle_cdf(double omega) const {
    const auto& grid = omega_grid();
    const auto& cdf = cdf_vals();
    if (omega <= grid.front()) return 0.0;
    if (omega >= grid.back()) return 1.0;
    const auto [i, w] = locate(omega);
    return cdf[i] + w * (cdf[i + 1] - cdf[i]);
  }

  // f at an off-grid angle by cubic Hermite interpolation of (f, df).
  double density(double omega) const {
    omega = detail::check_angle(omega);
    const auto& grid = omega_grid();
    if (omega >= grid.back()) return f_.back();
    const auto [i, w] = locate(omega);
    const double h = grid[i + 1] - grid[i];
    const double w2 = w * w, w3 = w2 * w;
    const double h00 = 2 * w3 - 3 * w2 + 1, h10 = w3 - 2 * w2 + w;
    const double h01 = -2 * w3 + 3 * w2, h11 = w3 - w2;
    return h00 * f_[i] + h10 * h * df_[i] + h01 * f_[i + 1] + h11 * h * df_[i + 1];
  }

 private:
  std::pair<std::size_t, double> locate(double omega) const {
    const auto& grid = omega_grid();
    const double h = grid[1] - grid[0];
    std::size_t i = static_cast<std::size_t>(omega / h);
    if (i >= grid.size() - 1) i = grid.size() - 2;
    return {i, (omega - grid[i]) / (grid[i + 1] - grid[i])};
  }

  double t_ = 0.0;
  int series_terms_ = 0;
  std::vector<double> f_;
  std::vector<double> df_;
  AngleInverseCdf inverse_cdf_;
};

inline IGSO3Table build_table(double t, const TruncationConfig& cfg = {}) {
  cfg.validate();
  detail::check_time(t, cfg);
  std::vector<double> grid = uniform_angle_grid(cfg.angle_grid);
  const std::size_t m = grid.size();
  std::vector<double> f(m), df(m), pdf(m);
  double negative_mass = 0.0, total_mass = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const SeriesValue s = igso3_series(grid[i], t, cfg);
    f[i] = s.f;
    df[i] = s.df;
    const double weight = (1.0 - std::cos(grid[i])) / kPi;
    pdf[i] = std::max(s.f, 0.0) * weight;
    if (i > 0) {
      const double h = grid[i] - grid[i - 1];
      const double prev = f[i - 1] * (1.0 - std::cos(grid[i - 1])) / kPi;
      negative_mass += 0.5 * h * (std::max(-prev, 0.0) + std::max(-s.f * weight, 0.0));
      total_mass += 0.5 * h * (pdf[i] + pdf[i - 1]);
    }
  }
  if (!(total_mass > 0.0) || negative_mass > 1e-6 * total_mass)
    throw DomainError("truncated IGSO3 series has significant negative mass at t=" +
                      std::to_string(t) + "; increase series_terms or t");
  std::vector<double> cdf(m, 0.0);
  for (std::size_t i = 1; i < m; ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (grid[i] - grid[i - 1]);
  for (double& c : cdf) c /= total_mass;
  cdf.back() = 1.0;
  return IGSO3Table(t, cfg.series_terms, std::move(grid), std::move(f), std::move(df), std::move(cdf));
}

inline Rotation sample_igso3(const Rotation& r0, const IGSO3Table& table, Rng& rng) {
  const double omega = table.sample_angle(rng);
  return r0 * exp_so3(hat(sample_unit_vector(rng) * omega));
}

// Central finite-difference Riemannian gradient of a scalar function on SO(3),
// in the orthonormal frame {r Y1, r Y2, r Y3}.
template <typename Fn>
Tangent riemannian_gradient_fd(Fn&& fn, const Rotation& r, double h = 1e-4) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  Vec3 coeff;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i) * h;
    const double plus = fn(r * exp_so3(hat(e)));
    const double minus = fn(r * exp_so3(hat(-e)));
    coeff[i] = (plus - minus) / (2.0 * h);
  }
  return r.matrix() * hat(coeff).matrix();
}

// E ||grad log p_{t|0}||^2 under IGSO3(., r0, t); the norm of the conditional
// score at angle omega is |df/f|. Trapezoid on the table grid.
inline double expected_score_norm_sq(const IGSO3Table& table) {
  const auto& grid = table.omega_grid();
  const auto& f = table.f_vals();
  const auto& df = table.df_vals();
  double f_max = 0.0;
  for (double v : f) f_max = std::max(f_max, v);
  const double floor = 1e-12 * f_max;
  double num = 0.0, den = 0.0;
  auto num_at = [&](std::size_t i) {
    if (f[i] <= floor) return 0.0;
    return df[i] * df[i] / f[i] * (1.0 - std::cos(grid[i])) / kPi;
  };
  auto den_at = [&](std::size_t i) { return std::max(f[i], 0.0) * (1.0 - std::cos(grid[i])) / kPi; };
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double h = grid[i] - grid[i - 1];
    num += 0.5 * h * (num_at(i) + num_at(i - 1));
    den += 0.5 * h * (den_at(i) + den_at(i - 1));
  }
  return num / den;
}

inline double expected_score_norm_sq(double t, const TruncationConfig& cfg = {}) {
  return expected_score_norm_sq(build_table(t, cfg));
}

// SU(2) analogue: sum_{l>=1} l^2 exp(-(l^2-1) t / 8) sin(l w) / sin(w).
inline double igsu2_density(double omega, double t, const TruncationConfig& cfg = {}) {
  cfg.validate();
  detail::check_time(t, cfg);
  omega = detail::check_angle(omega);
  const bool near_zero = omega < cfg.omega_eps;
  const bool near_pi = kPi - omega < cfg.omega_eps;
  const double s1 = std::sin(omega);
  double sum = 0.0, bound_sum = 0.0;
  for (int l = 1; l <= cfg.series_terms; ++l) {
    const double dl = static_cast<double>(l);
    const double w = std::exp(-(dl * dl - 1.0) * t / 8.0);
    const double bound = dl * dl * dl * w;
    if (bound == 0.0) break;
    bound_sum += bound;
    double ratio;
    if (near_zero) {
      ratio = dl;
    } else if (near_pi) {
      ratio = (l % 2 == 1) ? dl : -dl;
    } else {
      ratio = std::sin(dl * omega) / s1;
    }
    sum += dl * dl * w * ratio;
    if (dl * dl * t > 32.0 && bound < detail::kTailTolerance * bound_sum) break;
  }
  return sum;
}

}  // namespace se3diff
