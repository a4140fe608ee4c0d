#pragma once

#include <cstdint>
#include <vector>

#include "pvd/pvnet.hpp"
#include "pvd/schedule.hpp"

namespace pvd {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 8;
  int total_steps = 1000;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global-norm gradient clipping; 0 disables it.
  double grad_clip = 0.0;

  void validate() const;
};

/// First and second moment estimates, one tensor per parameter.
struct AdamState {
  ParamStore<float> m;
  ParamStore<float> v;
  std::int64_t step = 0;

  static AdamState for_params(const ParamStore<float>& params);
};

/// One bias-corrected Adam step, in place.
void adam_update(ParamStore<float>& params, const ParamStore<float>& grads, AdamState& state,
                 const TrainConfig& config);

/// A training example for completion: fixed rows followed by free rows.
struct CompletionPair {
  PointCloud partial;  // M x 3, never noised
  PointCloud missing;  // n_free x 3
};

struct StepResult {
  double loss = 0.0;
  std::vector<int> timesteps;  // sampled t per batch element
};

/// Mean loss and parameter gradients for one batch without updating.
/// Draw order per element: t, eps (free rows), then dropout masks.
struct BatchGradients {
  double loss = 0.0;
  ParamStore<float> grads;
  std::vector<int> timesteps;
};

BatchGradients conditional_gradients(const PVNet<float>& net, const std::vector<CompletionPair>& batch, Rng& rng,
                                     const NoiseSchedule& sched);

/// Unconditional step: t ~ U{1..T}, eps ~ N(0, I), x_t = q_sample, regress eps.
StepResult train_step(PVNet<float>& net, AdamState& state, const std::vector<PointCloud>& batch, Rng& rng,
                      const NoiseSchedule& sched, const TrainConfig& config);

/// Completion step: only the missing rows are noised and only their
/// predictions enter the loss.
StepResult conditional_train_step(PVNet<float>& net, AdamState& state, const std::vector<CompletionPair>& batch,
                                  Rng& rng, const NoiseSchedule& sched, const TrainConfig& config);

/// Global L2 norm of a gradient store.
double global_norm(const ParamStore<float>& grads);

}  // namespace pvd
