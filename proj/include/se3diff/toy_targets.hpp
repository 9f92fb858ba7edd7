#pragma once

// A discrete target measure on SO(3) noised by unit-rate Brownian motion:
// its mixture density, exact Stein score, and forward / reverse geodesic
// random walks whose marginals can be compared time by time.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"
#include "se3diff/parallel.hpp"
#include "se3diff/random.hpp"
#include "se3diff/stats.hpp"

namespace se3diff {

struct DiscreteTarget {
  std::vector<Rotation> atoms;
  std::vector<double> weights;

  void validate() const {
    if (atoms.empty() || atoms.size() != weights.size())
      throw InvalidArgument("target needs matching, nonempty atoms and weights");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvalidArgument("target weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("target weights must sum to 1");
  }

  std::size_t size() const noexcept { return atoms.size(); }

  static DiscreteTarget uniform(std::vector<Rotation> atoms) {
    const std::size_t k = atoms.size();
    DiscreteTarget t{std::move(atoms), std::vector<double>(k, k ? 1.0 / static_cast<double>(k) : 0.0)};
    t.validate();
    return t;
  }

  // K equal-mass atoms drawn from the uniform law with a fixed seed.
  static DiscreteTarget random_uniform(std::size_t k, std::uint64_t seed) {
    Rng rng = make_stream(seed, 0, /*tag=*/7);
    std::vector<Rotation> atoms;
    for (std::size_t i = 0; i < k; ++i) atoms.push_back(sample_uniform_so3(rng));
    return uniform(std::move(atoms));
  }
};

struct ToyRunConfig {
  std::size_t n_paths = 5000;
  double T = 4.0;
  std::size_t n_steps = 200;  // grid points on [0, T], endpoints included
  double fd_step = 1e-4;
  std::uint64_t seed = 0;
  std::size_t renormalize_every = 100;
  unsigned threads = 0;

  void validate() const {
    if (n_paths < 1) throw InvalidArgument("n_paths must be >= 1");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
    if (n_steps < 2) throw InvalidArgument("n_steps must be >= 2");
    if (!(fd_step > 0.0 && fd_step < 1e-2)) throw InvalidArgument("fd_step must lie in (0, 1e-2)");
  }

  std::vector<double> grid() const {
    std::vector<double> ts(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i)
      ts[i] = T * static_cast<double>(i) / static_cast<double>(n_steps - 1);
    return ts;
  }
};

// samples[j][p]: path p at times[j]; times ascending.
struct Marginals {
  std::vector<double> times;
  std::vector<std::vector<Rotation>> samples;
};

inline Rotation sample_p0(const DiscreteTarget& target, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(target.weights.begin(), target.weights.end());
  return target.atoms[pick(rng)];
}

inline double p_t_density(const DiscreteTarget& target, const Rotation& rt, double t,
                          const TruncationConfig& cfg = {}) {
  double p = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k)
    if (target.weights[k] > 0.0) p += target.weights[k] * igso3_density(target.atoms[k], rt, t, cfg);
  return p;
}

// grad log p_t at rt: the posterior-weighted mixture of conditional scores,
// assembled as sum_k w_k grad f_k / sum_k w_k f_k.
inline Tangent score_t(const DiscreteTarget& target, const Rotation& rt, double t,
                       const TruncationConfig& cfg = {}) {
  cfg.validate();
  detail::check_time(t, cfg);
  Mat3 num = Mat3::Zero();
  double den = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target.weights[k] == 0.0) continue;
    const Vec3 v = log_vector(target.atoms[k].inverse() * rt);
    const double omega = v.norm();
    const SeriesValue s = igso3_series(omega, t, cfg);
    den += target.weights[k] * s.f;
    if (omega >= cfg.omega_eps) num += (target.weights[k] * s.df / omega) * hat(v).matrix();
  }
  if (!(den > 0.0)) throw DomainError("noised target density is not positive; series under-truncated");
  return rt.matrix() * num / den;
}

namespace detail {
inline Rotation walk_step(const Rotation& r, const Tangent& drift_dt, double sqrt_abs_dt, Rng& rng) {
  return expmap(r, drift_dt + sample_tangent_gaussian(r, rng) * sqrt_abs_dt);
}
}  // namespace detail

// Zero-drift geodesic random walk from p0 over the grid of cfg.
inline Marginals run_forward(const DiscreteTarget& target, const ToyRunConfig& cfg) {
  target.validate();
  cfg.validate();
  Marginals m;
  m.times = cfg.grid();
  m.samples.assign(m.times.size(), std::vector<Rotation>(cfg.n_paths));
  parallel_for(
      cfg.n_paths,
      [&](std::size_t p) {
        Rng rng = make_stream(cfg.seed, p, /*tag=*/1);
        Rotation r = sample_p0(target, rng);
        m.samples[0][p] = r;
        for (std::size_t i = 1; i < m.times.size(); ++i) {
          const double dt = m.times[i] - m.times[i - 1];
          r = detail::walk_step(r, Tangent::Zero(), std::sqrt(dt), rng);
          if (cfg.renormalize_every > 0 && i % cfg.renormalize_every == 0) r = renormalize(r);
          m.samples[i][p] = r;
        }
      },
      cfg.threads);
  return m;
}

// Reversed walk from the uniform law with drift -score on the descending grid,
// i.e. score ascent with step |dt|. Marginals are stored on the ascending grid.
inline Marginals run_reverse(const DiscreteTarget& target, const ToyRunConfig& cfg,
                             const TruncationConfig& trunc = {}) {
  target.validate();
  cfg.validate();
  Marginals m;
  m.times = cfg.grid();
  const std::size_t last = m.times.size() - 1;
  m.samples.assign(m.times.size(), std::vector<Rotation>(cfg.n_paths));
  parallel_for(
      cfg.n_paths,
      [&](std::size_t p) {
        Rng rng = make_stream(cfg.seed, p, /*tag=*/2);
        Rotation r = sample_uniform_so3(rng);
        m.samples[last][p] = r;
        for (std::size_t step = 1; step <= last; ++step) {
          const std::size_t from = last - step + 1, to = last - step;
          const double dt = m.times[to] - m.times[from];  // negative
          const Tangent drift = -score_t(target, r, m.times[from], trunc);
          r = detail::walk_step(r, drift * dt, std::sqrt(-dt), rng);
          if (cfg.renormalize_every > 0 && step % cfg.renormalize_every == 0) r = renormalize(r);
          if (!r.matrix().allFinite()) throw SimulationError(step, "non-finite rotation in reverse walk");
          m.samples[to][p] = r;
        }
      },
      cfg.threads);
  return m;
}

inline std::vector<double> angles_to_atom(const std::vector<Rotation>& samples, const Rotation& atom) {
  std::vector<double> out;
  out.reserve(samples.size());
  const Rotation inv = atom.inverse();
  for (const auto& r : samples) out.push_back(rotation_angle(inv * r));
  return out;
}

inline std::vector<double> angles_to_nearest_atom(const std::vector<Rotation>& samples,
                                                  const DiscreteTarget& target) {
  std::vector<double> out(samples.size(), kPi);
  for (const auto& atom : target.atoms) {
    const std::vector<double> a = angles_to_atom(samples, atom);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(out[i], a[i]);
  }
  return out;
}

struct MarginalSummary {
  std::vector<std::vector<double>> angle_hist;  // per atom, normalized bin mass over [0, pi]
  std::vector<double> nearest_freq;             // fraction of samples nearest to each atom
  std::vector<double> nearest_angle;            // angle to the nearest atom, per sample
};

inline MarginalSummary marginal_stats(const std::vector<Rotation>& samples, const DiscreteTarget& target,
                                      std::size_t bins = 36) {
  if (samples.empty()) throw InvalidArgument("marginal_stats needs samples");
  if (bins == 0) throw InvalidArgument("need at least one histogram bin");
  const std::size_t k = target.size();
  MarginalSummary s;
  s.angle_hist.assign(k, std::vector<double>(bins, 0.0));
  s.nearest_freq.assign(k, 0.0);
  s.nearest_angle.assign(samples.size(), kPi);
  std::vector<std::size_t> nearest(samples.size(), 0);
  const double n = static_cast<double>(samples.size());
  for (std::size_t a = 0; a < k; ++a) {
    const std::vector<double> ang = angles_to_atom(samples, target.atoms[a]);
    for (std::size_t i = 0; i < ang.size(); ++i) {
      const auto b = std::min(bins - 1, static_cast<std::size_t>(ang[i] / kPi * static_cast<double>(bins)));
      s.angle_hist[a][b] += 1.0 / n;
      if (ang[i] < s.nearest_angle[i]) {
        s.nearest_angle[i] = ang[i];
        nearest[i] = a;
      }
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) s.nearest_freq[nearest[i]] += 1.0 / n;
  return s;
}

// KS statistic between two sample sets on the angle to the nearest atom.
inline double ks_nearest_atom(const std::vector<Rotation>& a, const std::vector<Rotation>& b,
                              const DiscreteTarget& target) {
  return ks_two_sample(angles_to_nearest_atom(a, target), angles_to_nearest_atom(b, target));
}

}  // namespace se3diff
