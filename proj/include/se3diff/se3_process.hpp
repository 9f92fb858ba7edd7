#pragma once

// Diffusion on SE(3)^N: the forward noising process, its time reversal with a
// noise-scale factor, centering onto the zero center-of-mass subspace and the
// geodesic random walk that simulates the reversal.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"
#include "se3diff/random.hpp"
#include "se3diff/schedules.hpp"

namespace se3diff {

// One residue's rigid transform; translation in nanometers.
struct Frame {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Frame compose(const Frame& o) const { return {rotation * o.rotation, rotation * o.translation + translation}; }
};

struct FrameSet {
  std::vector<Frame> frames;
  bool centered = false;

  std::size_t size() const noexcept { return frames.size(); }
  Vec3 mean_translation() const {
    Vec3 m = Vec3::Zero();
    for (const auto& f : frames) m += f.translation;
    return frames.empty() ? m : Vec3(m / static_cast<double>(frames.size()));
  }
};

struct TangentSE3 {
  Tangent rot_part = Tangent::Zero();
  Vec3 trans_part = Vec3::Zero();
};

// Score model contract: (forward time t, state) -> one tangent per frame.
// Must be safe to call concurrently; the simulators never mutate it.
using ScoreField = std::function<std::vector<TangentSE3>(double, const FrameSet&)>;

struct SimConfig {
  std::size_t n_steps = 500;
  double eps = 0.01;
  double zeta = 1.0;
  std::size_t renormalize_every = 100;
  std::size_t record_every = 1;  // states kept in the trajectory; the last is always kept

  void validate() const {
    if (n_steps < 2) throw InvalidArgument("n_steps must be >= 2");
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
    if (!(zeta >= 0.0 && zeta <= 1.0)) throw InvalidArgument("zeta must lie in [0, 1]");
    if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
  }
};

struct Trajectory {
  std::vector<double> times;  // forward time of each recorded state
  std::vector<FrameSet> states;
};

inline FrameSet center(const FrameSet& fs) {
  if (fs.frames.empty()) throw InvalidArgument("cannot center an empty frame set");
  FrameSet out = fs;
  const Vec3 mean = fs.mean_translation();
  for (auto& f : out.frames) f.translation -= mean;
  out.centered = true;
  return out;
}

// Exponential map of the product metric on SO(3) x R^3.
inline Frame se3_expmap(const Frame& f0, const TangentSE3& v) {
  return {expmap(f0.rotation, v.rot_part), f0.translation + v.trans_part};
}

// Reference law at t = 1: uniform rotations, standard-normal translations, centered.
inline FrameSet sample_reference(std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("need at least one frame");
  FrameSet fs;
  fs.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Frame f;
    f.rotation = sample_uniform_so3(rng);
    f.translation = sample_standard_normal3(rng);
    fs.frames.push_back(f);
  }
  return center(fs);
}

// Draws T(t) | T(0) with a prebuilt IGSO3 table at sigma_r(t)^2.
inline FrameSet forward_sample(const FrameSet& fs0, double t, const Schedules& sch,
                               const IGSO3Table& rot_table, Rng& rng) {
  if (!fs0.centered) throw InvalidArgument("forward_sample expects a centered frame set");
  const double scale = std::exp(-0.5 * G_x(t, sch.trans));
  const double sd = std::sqrt(trans_marginal(Vec3::Zero(), t, sch.trans).variance);
  FrameSet out;
  out.frames.reserve(fs0.size());
  for (const auto& f : fs0.frames) {
    Frame g;
    g.rotation = sample_igso3(f.rotation, rot_table, rng);
    g.translation = scale * f.translation + sd * sample_standard_normal3(rng);
    out.frames.push_back(g);
  }
  return center(out);
}

inline FrameSet forward_sample(const FrameSet& fs0, double t, const Schedules& sch,
                               const TruncationConfig& cfg, Rng& rng) {
  return forward_sample(fs0, t, sch, build_table(rot_variance(t, sch.rot), cfg), rng);
}

// Drift of the time reversal at reverse time s (forward time 1 - s):
// rotations g_r^2 score_r, translations g_x^2 score_x - f_x X.
inline std::vector<TangentSE3> reverse_drift(const FrameSet& fs, double s, const ScoreField& score,
                                             const Schedules& sch) {
  const double t = 1.0 - s;
  const std::vector<TangentSE3> sc = score(t, fs);
  if (sc.size() != fs.size()) throw InvalidArgument("score field returned the wrong number of frames");
  const double gr = g_r(t, sch.rot);
  const double gx2 = beta(t, sch.trans);
  const double fx = f_x(t, sch.trans);
  std::vector<TangentSE3> drift(fs.size());
  for (std::size_t n = 0; n < fs.size(); ++n) {
    drift[n].rot_part = gr * gr * sc[n].rot_part;
    drift[n].trans_part = gx2 * sc[n].trans_part - fx * fs.frames[n].translation;
  }
  return drift;
}

namespace detail {
inline bool finite_state(const FrameSet& fs) {
  for (const auto& f : fs.frames)
    if (!f.rotation.matrix().allFinite() || !f.translation.allFinite()) return false;
  return true;
}
}  // namespace detail

// Euler-Maruyama geodesic random walk of the reversal on the uniform grid
// t_k = 1 - k (1 - eps) / (n_steps - 1).
inline Trajectory reverse_walk(const FrameSet& init, const ScoreField& score, const Schedules& sch,
                               const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!init.centered) throw InvalidArgument("reverse_walk expects a centered initial state");
  const double dt = (1.0 - cfg.eps) / static_cast<double>(cfg.n_steps - 1);
  const double sqrt_dt = std::sqrt(dt);

  Trajectory traj;
  FrameSet state = init;
  traj.times.push_back(1.0);
  traj.states.push_back(state);

  for (std::size_t k = 0; k + 1 < cfg.n_steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) * dt;
    const std::vector<TangentSE3> drift = reverse_drift(state, 1.0 - t, score, sch);
    const double noise_r = cfg.zeta * g_r(t, sch.rot) * sqrt_dt;
    const double noise_x = cfg.zeta * g_x(t, sch.trans) * sqrt_dt;

    FrameSet next;
    next.frames.reserve(state.size());
    for (std::size_t n = 0; n < state.size(); ++n) {
      const Frame& f = state.frames[n];
      TangentSE3 inc;
      inc.rot_part = drift[n].rot_part * dt;
      inc.trans_part = drift[n].trans_part * dt;
      if (cfg.zeta > 0.0) {
        inc.rot_part += noise_r * sample_tangent_gaussian(f.rotation, rng);
        inc.trans_part += noise_x * sample_standard_normal3(rng);
      }
      if (!inc.rot_part.allFinite() || !inc.trans_part.allFinite())
        throw SimulationError(k + 1, "non-finite increment");
      next.frames.push_back(se3_expmap(f, inc));
    }
    state = center(next);
    const std::size_t step = k + 1;
    if (cfg.renormalize_every > 0 && step % cfg.renormalize_every == 0)
      for (auto& f : state.frames) f.rotation = renormalize(f.rotation);
    if (!detail::finite_state(state)) throw SimulationError(step, "non-finite state");

    const bool last = step + 1 == cfg.n_steps;
    if (last || step % cfg.record_every == 0) {
      traj.times.push_back(last ? cfg.eps : 1.0 - static_cast<double>(step) * dt);
      traj.states.push_back(state);
    }
  }
  return traj;
}

// Score of p_{t|0}(. | pred0) evaluated at fs_t, frame by frame.
inline std::vector<TangentSE3> score_from_denoised(const FrameSet& fs_t, const FrameSet& pred0, double t,
                                                   const Schedules& sch, const TruncationConfig& cfg = {}) {
  if (fs_t.size() != pred0.size()) throw InvalidArgument("frame sets differ in length");
  const double rot_t = rot_variance(t, sch.rot);
  std::vector<TangentSE3> out(fs_t.size());
  for (std::size_t n = 0; n < fs_t.size(); ++n) {
    out[n].rot_part = conditional_score(pred0.frames[n].rotation, fs_t.frames[n].rotation, rot_t, cfg);
    out[n].trans_part =
        trans_conditional_score(pred0.frames[n].translation, fs_t.frames[n].translation, t, sch.trans);
  }
  return out;
}

// Score field that always denoises to the same frame set.
inline ScoreField fixed_target_score(FrameSet target, Schedules sch, TruncationConfig cfg = {}) {
  return [target = std::move(target), sch, cfg](double t, const FrameSet& fs) {
    return score_from_denoised(fs, target, t, sch, cfg);
  };
}

// Score of the reference law: zero on rotations, -x on translations.
inline ScoreField prior_score() {
  return [](double, const FrameSet& fs) {
    std::vector<TangentSE3> out(fs.size());
    for (std::size_t n = 0; n < fs.size(); ++n) out[n].trans_part = -fs.frames[n].translation;
    return out;
  };
}

}  // namespace se3diff
