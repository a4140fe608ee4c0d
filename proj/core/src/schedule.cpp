#include "pvd/schedule.hpp"

#include <cmath>

#include "pvd/errors.hpp"

namespace pvd {

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (int i = 0; i < n; ++i) {
    out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  out[n - 1] = b;
  return out;
}

void check_bounds(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DomainError("schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw DomainError("schedule: need 0 < beta_start <= beta_end < 1");
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> betas, ScheduleKind kind, double beta_start,
                             double beta_end, double warmup_frac)
    : beta_(std::move(betas)),
      kind_(kind),
      beta_start_(beta_start),
      beta_end_(beta_end),
      warmup_frac_(warmup_frac) {
  if (beta_.empty()) throw DomainError("schedule: empty beta array");
  alpha_.resize(beta_.size());
  alpha_bar_.resize(beta_.size());
  sigma2_.resize(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    const double b = beta_[i];
    if (!(b > 0.0 && b < 1.0)) throw DomainError("schedule: beta outside (0, 1)");
    if (i > 0 && b < beta_[i - 1]) throw DomainError("schedule: beta must be non-decreasing");
    alpha_[i] = 1.0 - b;
    prod *= alpha_[i];
    alpha_bar_[i] = prod;
    sigma2_[i] = b;
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  check_bounds(steps, beta_start, beta_end);
  if (steps == 1 && beta_start != beta_end) {
    throw DomainError("schedule: a single-step schedule needs beta_start == beta_end");
  }
  return NoiseSchedule(linspace(beta_start, beta_end, steps), ScheduleKind::Linear, beta_start,
                       beta_end, 1.0);
}

NoiseSchedule NoiseSchedule::warmup(int steps, double beta_start, double beta_end,
                                    double warmup_frac) {
  check_bounds(steps, beta_start, beta_end);
  if (!(warmup_frac > 0.0 && warmup_frac <= 1.0)) {
    throw DomainError("schedule: warmup_frac must lie in (0, 1]");
  }
  const int ramp = std::min(steps, static_cast<int>(std::ceil(warmup_frac * steps - 1e-9)));
  std::vector<double> betas = linspace(beta_start, beta_end, std::max(ramp, 1));
  betas.resize(static_cast<std::size_t>(steps), beta_end);
  return NoiseSchedule(std::move(betas), ScheduleKind::Warmup, beta_start, beta_end, warmup_frac);
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, ScheduleKind kind,
                                        double beta_start, double beta_end, double warmup_frac) {
  return NoiseSchedule(std::move(betas), kind, beta_start, beta_end, warmup_frac);
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw DomainError("schedule: timestep " + std::to_string(t) + " outside 1.." +
                      std::to_string(steps()));
  }
  return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bar_.at(index(t));
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Linear ? "linear" : "warmup";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "warmup") return ScheduleKind::Warmup;
  throw DomainError("unknown schedule kind '" + s + "'");
}

}  // namespace pvd
