#include "pvd/completion.hpp"

#include "pvd/errors.hpp"

namespace pvd {

void CompletionTask::validate() const {
  if (n_free < 1) throw DomainError("completion task needs at least one free point");
  if (z0.rows() < 1) throw DomainError("completion task needs at least one fixed point");
  pvd::validate(z0, "partial shape");
}

PointCloud complete(const EpsPredictor& model, const CompletionTask& task, const NoiseSchedule& sched,
                    std::uint64_t seed, const SamplerOptions& opts, const TrajectoryObserver& observer) {
  if (task.n_free < 1) throw DomainError("completion task needs at least one free point");
  if (task.z0.rows() > 0) validate(task.z0, "partial shape");
  Rng rng(seed);
  PointCloud x(task.total(), 3);
  x.bottomRows(task.n_free) = standard_normal(task.n_free, rng);
  if (task.z0.rows() > 0) x.topRows(task.z0.rows()) = task.z0;
  return run_reverse(model, std::move(x), sched, rng, task.z0.rows() > 0 ? &task.z0 : nullptr, opts, observer);
}

PointCloud latent_encode(const PointCloud& x0_hat, const NoiseSchedule& sched, const PointCloud& eps) {
  return q_sample(x0_hat, sched.steps(), eps, sched);
}

PointCloud decode_latent(const EpsPredictor& model, const PointCloud& latent, const PointCloud& z0,
                         const NoiseSchedule& sched, std::uint64_t seed, const SamplerOptions& opts) {
  if (z0.rows() >= latent.rows()) throw ShapeError("decode_latent: partial shape leaves no free rows");
  Rng rng(seed);
  return run_reverse(model, latent, sched, rng, z0.rows() > 0 ? &z0 : nullptr, opts);
}

PointCloud interpolate_complete(const EpsPredictor& model, const PointCloud& latent_a, const PointCloud& latent_b,
                                double lambda, const PointCloud& z0, const NoiseSchedule& sched,
                                std::uint64_t seed, const SamplerOptions& opts) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("interpolation lambda must lie in [0, 1]");
  require_same_shape(latent_a, latent_b, "interpolate_complete");
  const PointCloud mixed = (1.0 - lambda) * latent_a + lambda * latent_b;
  return decode_latent(model, mixed, z0, sched, seed, opts);
}

}  // namespace pvd
