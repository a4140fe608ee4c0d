#pragma once

#include "pvd/diffusion.hpp"

namespace pvd {

/// Fixed partial shape plus the number of points to synthesize. The fixed
/// points occupy rows [0, M) of every state; free points follow.
struct CompletionTask {
  PointCloud z0;
  int n_free = 0;

  Eigen::Index fixed_count() const noexcept { return z0.rows(); }
  Eigen::Index total() const noexcept { return z0.rows() + n_free; }
  void validate() const;
};

/// Samples a completion: free rows start from N(0, I) (drawn from `seed`),
/// z0 is written into rows [0, M) before every network call and on the result.
PointCloud complete(const EpsPredictor& model, const CompletionTask& task, const NoiseSchedule& sched,
                    std::uint64_t seed, const SamplerOptions& opts = {},
                    const TrajectoryObserver& observer = {});

/// Time-T latent of a completed shape: q_sample(x0_hat, T, eps).
PointCloud latent_encode(const PointCloud& x0_hat, const NoiseSchedule& sched, const PointCloud& eps);

/// Reverse process from an explicit latent, re-fixing z0 rows at each step.
PointCloud decode_latent(const EpsPredictor& model, const PointCloud& latent, const PointCloud& z0,
                         const NoiseSchedule& sched, std::uint64_t seed, const SamplerOptions& opts = {});

/// Decodes (1 - lambda) latent_a + lambda latent_b with z0 fixed. The whole
/// latent is interpolated (fixed rows are overwritten anyway).
PointCloud interpolate_complete(const EpsPredictor& model, const PointCloud& latent_a, const PointCloud& latent_b,
                                double lambda, const PointCloud& z0, const NoiseSchedule& sched,
                                std::uint64_t seed, const SamplerOptions& opts = {});

}  // namespace pvd
