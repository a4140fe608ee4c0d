#include "pvd/diffusion.hpp"

#include <cmath>
#include <string>

#include "pvd/errors.hpp"

namespace pvd {

void validate(const PointCloud& pc, const char* what) {
  if (pc.rows() == 0) throw ShapeError(std::string(what) + ": empty");
  if (!pc.allFinite()) throw DataError(std::string(what) + ": non-finite coordinate");
}

void require_same_shape(const PointCloud& a, const PointCloud& b, const char* op) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + " vs " +
                     std::to_string(b.rows()) + " points)");
  }
}

PointCloud standard_normal(Eigen::Index rows, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PointCloud out(rows, 3);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int j = 0; j < 3; ++j) out(i, j) = normal(rng);
  }
  return out;
}

PointCloud q_sample(const PointCloud& x0, int t, const PointCloud& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  if (t < 1) throw DomainError("q_sample: t must be >= 1");
  const double abar = sched.alpha_bar(t);
  return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

PointCloud q_step(const PointCloud& x_prev, int t, const PointCloud& noise,
                  const NoiseSchedule& sched) {
  require_same_shape(x_prev, noise, "q_step");
  const double b = sched.beta(t);
  return std::sqrt(1.0 - b) * x_prev + std::sqrt(b) * noise;
}

Posterior posterior_params(const PointCloud& x0, const PointCloud& xt, int t,
                           const NoiseSchedule& sched) {
  require_same_shape(x0, xt, "posterior_params");
  if (t < 1) throw DomainError("posterior_params: t must be >= 1");
  const double b = sched.beta(t);
  const double a = sched.alpha(t);
  const double abar = sched.alpha_bar(t);
  const double abar_prev = sched.alpha_bar(t - 1);
  const double c0 = std::sqrt(abar_prev) * b / (1.0 - abar);
  const double ct = std::sqrt(a) * (1.0 - abar_prev) / (1.0 - abar);
  Posterior post;
  post.mean = c0 * x0 + ct * xt;
  post.variance = (1.0 - abar_prev) / (1.0 - abar) * b;
  return post;
}

PointCloud predict_mu_from_eps(const PointCloud& xt, int t, const PointCloud& eps_hat,
                               const NoiseSchedule& sched) {
  require_same_shape(xt, eps_hat, "predict_mu_from_eps");
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  return (xt - coef * eps_hat) / std::sqrt(sched.alpha(t));
}

double eps_loss(const PointCloud& eps, const PointCloud& eps_hat) {
  require_same_shape(eps, eps_hat, "eps_loss");
  if (eps.rows() == 0) throw ShapeError("eps_loss: empty input");
  return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.size());
}

PointCloud p_sample_step(const PointCloud& xt, int t, const PointCloud& eps_hat, const PointCloud& z,
                         const NoiseSchedule& sched, const SamplerOptions& opts) {
  require_same_shape(xt, eps_hat, "p_sample_step");
  require_same_shape(xt, z, "p_sample_step");
  const double a = sched.alpha(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(t));
  PointCloud out = (xt - coef * eps_hat) / std::sqrt(a);
  if (t > 1 || opts.final_noise) out += std::sqrt(sched.beta(t)) * z;
  return out;
}

PointCloud run_reverse(const EpsPredictor& model, PointCloud xT, const NoiseSchedule& sched, Rng& rng,
                       const PointCloud* fixed, const SamplerOptions& opts,
                       const TrajectoryObserver& observer) {
  validate(xT, "reverse process state");
  const Eigen::Index m = fixed ? fixed->rows() : 0;
  if (m > xT.rows()) throw ShapeError("reverse process: more fixed rows than points");
  PointCloud x = std::move(xT);
  if (m > 0) x.topRows(m) = *fixed;
  for (int t = sched.steps(); t >= 1; --t) {
    if (observer) observer(t, x);
    const PointCloud eps_hat = model(x, t);
    require_same_shape(x, eps_hat, "denoiser output");
    const PointCloud z = standard_normal(x.rows(), rng);
    x = p_sample_step(x, t, eps_hat, z, sched, opts);
    if (m > 0) x.topRows(m) = *fixed;
    if (!x.allFinite()) {
      throw NumericalError("reverse process: non-finite state at t=" + std::to_string(t));
    }
  }
  if (observer) observer(0, x);
  return x;
}

PointCloud generate(const EpsPredictor& model, int n_points, const NoiseSchedule& sched,
                    std::uint64_t seed, const SamplerOptions& opts,
                    const TrajectoryObserver& observer) {
  if (n_points < 1) throw DomainError("generate: point count must be >= 1");
  Rng rng(seed);
  PointCloud xT = standard_normal(n_points, rng);
  return run_reverse(model, std::move(xT), sched, rng, nullptr, opts, observer);
}

}  // namespace pvd
