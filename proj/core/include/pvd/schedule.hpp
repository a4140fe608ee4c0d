#pragma once

#include <string>
#include <vector>

namespace pvd {

enum class ScheduleKind { Linear, Warmup };

/// Variance schedule beta_1..beta_T with the derived alpha, alpha-bar and
/// sampling variance arrays. Public accessors take the 1-based step index t;
/// the vectors themselves are 0-based. Immutable once built.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  static NoiseSchedule warmup(int steps, double beta_start, double beta_end, double warmup_frac);
  /// Rebuilds a schedule from an explicit beta array (used by checkpoints).
  static NoiseSchedule from_betas(std::vector<double> betas, ScheduleKind kind, double beta_start,
                                  double beta_end, double warmup_frac);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  /// alpha-bar at step t; alpha_bar(0) == 1 by convention.
  double alpha_bar(int t) const;
  double sigma2(int t) const { return sigma2_.at(index(t)); }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alphas() const noexcept { return alpha_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  const std::vector<double>& sigma2s() const noexcept { return sigma2_; }

  ScheduleKind kind() const noexcept { return kind_; }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }
  double warmup_frac() const noexcept { return warmup_frac_; }

 private:
  NoiseSchedule(std::vector<double> betas, ScheduleKind kind, double beta_start, double beta_end,
                double warmup_frac);
  std::size_t index(int t) const;

  std::vector<double> beta_, alpha_, alpha_bar_, sigma2_;
  ScheduleKind kind_;
  double beta_start_, beta_end_, warmup_frac_;
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

}  // namespace pvd
