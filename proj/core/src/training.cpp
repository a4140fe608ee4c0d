#include "pvd/training.hpp"

#include <cmath>

#include "pvd/diffusion.hpp"
#include "pvd/errors.hpp"

namespace pvd {

using Eigen::Index;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning_rate must be >= 0");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (total_steps < 0) throw DomainError("total_steps must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw DomainError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw DomainError("Adam epsilon must be positive");
  if (!(grad_clip >= 0.0)) throw DomainError("grad_clip must be >= 0");
}

AdamState AdamState::for_params(const ParamStore<float>& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_update(ParamStore<float>& params, const ParamStore<float>& grads, AdamState& state,
                 const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_update: parameter, gradient and state stores differ in size");
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = config.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || m.rows() != p.rows() || m.cols() != p.cols()) {
      throw ShapeError("adam_update: shape mismatch for '" + params.names()[i] + "'");
    }
    for (Index j = 0; j < p.size(); ++j) {
      const double gj = g.data()[j];
      const double mj = b1 * m.data()[j] + (1.0 - b1) * gj;
      const double vj = b2 * v.data()[j] + (1.0 - b2) * gj * gj;
      m.data()[j] = static_cast<float>(mj);
      v.data()[j] = static_cast<float>(vj);
      const double step = lr * (mj / c1) / (std::sqrt(vj / c2) + config.adam_eps);
      if (step != 0.0) p.data()[j] = static_cast<float>(p.data()[j] - step);
    }
  }
}

double global_norm(const ParamStore<float>& grads) {
  double s = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (Index j = 0; j < grads[i].size(); ++j) {
      const double g = grads[i].data()[j];
      s += g * g;
    }
  }
  return std::sqrt(s);
}

BatchGradients conditional_gradients(const PVNet<float>& net, const std::vector<CompletionPair>& batch, Rng& rng,
                                     const NoiseSchedule& sched) {
  if (batch.empty()) throw DomainError("training batch is empty");
  const Index m = batch.front().partial.rows();
  const Index n_free = batch.front().missing.rows();
  if (n_free < 1) throw DomainError("training example has no free points");
  for (const auto& ex : batch) {
    if (ex.partial.rows() != m || ex.missing.rows() != n_free) {
      throw ShapeError("training batch mixes point counts");
    }
  }
  BatchGradients out;
  out.grads = net.params().zeros_like();
  std::uniform_int_distribution<int> pick_t(1, sched.steps());
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  for (const auto& ex : batch) {
    const int t = pick_t(rng);
    const PointCloud eps = standard_normal(n_free, rng);
    PointCloud xt(m + n_free, 3);
    if (m > 0) xt.topRows(m) = ex.partial;
    xt.bottomRows(n_free) = q_sample(ex.missing, t, eps, sched);

    ad::Tape<float> tape(true);
    const auto fw = net.forward(tape, xt, t, Mode::Train, &rng);
    Matrix<float> target = Matrix<float>::Zero(m + n_free, 3);
    target.bottomRows(n_free) = eps.cast<float>();
    const ad::Var loss = ad::mse_rows(tape, fw.output, target, m);
    const double lv = tape.value(loss)(0, 0);
    if (!std::isfinite(lv)) {
      throw NumericalError("non-finite training loss at t=" + std::to_string(t));
    }
    tape.backward(loss);
    for (std::size_t i = 0; i < fw.parameters.size(); ++i) {
      const auto& g = tape.grad(fw.parameters[i]);
      if (g.size() != 0) out.grads[i] += g * inv_b;
    }
    out.loss += lv / static_cast<double>(batch.size());
    out.timesteps.push_back(t);
  }
  return out;
}

namespace {

StepResult apply_step(PVNet<float>& net, AdamState& state, BatchGradients bg, const TrainConfig& config) {
  if (config.grad_clip > 0.0) {
    const double norm = global_norm(bg.grads);
    if (norm > config.grad_clip) {
      const float scale = static_cast<float>(config.grad_clip / norm);
      for (std::size_t i = 0; i < bg.grads.size(); ++i) bg.grads[i] *= scale;
    }
  }
  adam_update(net.mutable_params(), bg.grads, state, config);
  return StepResult{bg.loss, std::move(bg.timesteps)};
}

}  // namespace

StepResult train_step(PVNet<float>& net, AdamState& state, const std::vector<PointCloud>& batch, Rng& rng,
                      const NoiseSchedule& sched, const TrainConfig& config) {
  std::vector<CompletionPair> pairs;
  pairs.reserve(batch.size());
  for (const auto& x0 : batch) {
    validate(x0, "training shape");
    pairs.push_back({PointCloud(0, 3), x0});
  }
  return apply_step(net, state, conditional_gradients(net, pairs, rng, sched), config);
}

StepResult conditional_train_step(PVNet<float>& net, AdamState& state, const std::vector<CompletionPair>& batch,
                                  Rng& rng, const NoiseSchedule& sched, const TrainConfig& config) {
  for (const auto& ex : batch) {
    if (ex.partial.rows() > 0) validate(ex.partial, "partial shape");
    validate(ex.missing, "missing points");
  }
  return apply_step(net, state, conditional_gradients(net, batch, rng, sched), config);
}

}  // namespace pvd
