#pragma once

#include <functional>

#include "pvd/point_cloud.hpp"
#include "pvd/schedule.hpp"

namespace pvd {

/// Callable computing eps_hat(x_t, t). Must return a cloud shaped like x_t.
using EpsPredictor = std::function<PointCloud(const PointCloud& xt, int t)>;

/// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
PointCloud q_sample(const PointCloud& x0, int t, const PointCloud& eps, const NoiseSchedule& sched);

/// One forward transition q(x_t | x_{t-1}).
PointCloud q_step(const PointCloud& x_prev, int t, const PointCloud& noise, const NoiseSchedule& sched);

struct Posterior {
  PointCloud mean;
  double variance = 0.0;
};

/// Gaussian posterior q(x_{t-1} | x_t, x_0). Uses abar_0 = 1, so t = 1 gives
/// mean == x0 and zero variance.
Posterior posterior_params(const PointCloud& x0, const PointCloud& xt, int t,
                           const NoiseSchedule& sched);

/// Model mean recovered from a noise prediction.
PointCloud predict_mu_from_eps(const PointCloud& xt, int t, const PointCloud& eps_hat,
                               const NoiseSchedule& sched);

/// Mean squared error over all 3N coordinates.
double eps_loss(const PointCloud& eps, const PointCloud& eps_hat);

struct SamplerOptions {
  /// Add sqrt(beta_1) z on the last step too (literal reading of the
  /// sampling recursion). Off by default: the final step is deterministic.
  bool final_noise = false;
};

/// One ancestral step x_t -> x_{t-1}. `z` is ignored at t = 1 unless
/// `opts.final_noise` is set.
PointCloud p_sample_step(const PointCloud& xt, int t, const PointCloud& eps_hat, const PointCloud& z,
                         const NoiseSchedule& sched, const SamplerOptions& opts = {});

/// Called with (t, x_t) at entry of every reverse step and finally with (0, x_0).
using TrajectoryObserver = std::function<void(int t, const PointCloud& x)>;

/// Reverse process from an explicit x_T. When `fixed` has rows, those rows
/// overwrite the leading rows of the state before every network call and on
/// the returned cloud. The RNG supplies one N x 3 draw of z per step.
PointCloud run_reverse(const EpsPredictor& model, PointCloud xT, const NoiseSchedule& sched, Rng& rng,
                       const PointCloud* fixed = nullptr, const SamplerOptions& opts = {},
                       const TrajectoryObserver& observer = {});

/// Unconditional sampling: x_T ~ N(0, I) drawn from `seed`, then the reverse
/// process. Pure function of (model, n_points, sched, seed, opts).
PointCloud generate(const EpsPredictor& model, int n_points, const NoiseSchedule& sched,
                    std::uint64_t seed, const SamplerOptions& opts = {},
                    const TrajectoryObserver& observer = {});

}  // namespace pvd
