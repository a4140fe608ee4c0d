#include "pvd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvd/errors.hpp"

namespace pvd {

using Eigen::Index;

std::string to_string(Distance d) { return d == Distance::Chamfer ? "cd" : "emd"; }

Distance distance_from_string(const std::string& s) {
  if (s == "cd" || s == "CD" || s == "chamfer") return Distance::Chamfer;
  if (s == "emd" || s == "EMD") return Distance::EMD;
  throw DomainError("unknown distance '" + s + "'");
}

namespace {

void require_nonempty(const PointCloud& pc, const char* op) {
  if (pc.rows() == 0) throw ShapeError(std::string(op) + ": empty point set");
}

template <typename Set>
void require_nonempty_set(const Set& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": empty set of clouds");
}

double directed_mean_sq(const PointCloud& a, const PointCloud& b) {
  double total = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    total += best;
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace

double chamfer(const PointCloud& x, const PointCloud& y) {
  require_nonempty(x, "chamfer");
  require_nonempty(y, "chamfer");
  return directed_mean_sq(x, y) + directed_mean_sq(y, x);
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ShapeError("solve_assignment: cost matrix must be square");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based shortest augmenting path formulation; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double matching_cost(const PointCloud& x, const PointCloud& y, const std::vector<int>& assignment) {
  if (static_cast<Index>(assignment.size()) != x.rows()) throw ShapeError("matching_cost: assignment size");
  std::vector<double> d(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    d[i] = (x.row(static_cast<Index>(i)) - y.row(assignment[i])).norm();
  }
  std::sort(d.begin(), d.end());
  double total = 0.0;
  for (double di : d) total += di;
  return total / static_cast<double>(d.size());
}

double emd(const PointCloud& x, const PointCloud& y) {
  require_nonempty(x, "emd");
  if (x.rows() != y.rows()) {
    throw ShapeError("emd: point counts differ (" + std::to_string(x.rows()) + " vs " + std::to_string(y.rows()) + ")");
  }
  const Index n = x.rows();
  Eigen::MatrixXd cost(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) cost(i, j) = (x.row(i) - y.row(j)).norm();
  return matching_cost(x, y, solve_assignment(cost));
}

double distance(const PointCloud& x, const PointCloud& y, Distance d) {
  return d == Distance::Chamfer ? chamfer(x, y) : emd(x, y);
}

Eigen::MatrixXd pairwise_distances(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b, Distance d) {
  Eigen::MatrixXd out(static_cast<Index>(a.size()), static_cast<Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = distance(a[i], b[j], d);
  return out;
}

double one_nn_accuracy(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d) {
  require_nonempty_set(gen, "one_nn_accuracy");
  require_nonempty_set(ref, "one_nn_accuracy");
  std::vector<PointCloud> all;
  all.reserve(gen.size() + ref.size());
  all.insert(all.end(), gen.begin(), gen.end());
  all.insert(all.end(), ref.begin(), ref.end());
  const Index n = static_cast<Index>(all.size());
  Eigen::MatrixXd dist(n, n);
  for (Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) dist(i, j) = dist(j, i) = distance(all[i], all[j], d);
  }
  const Index n_gen = static_cast<Index>(gen.size());
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (dist(i, j) < best_d) {
        best_d = dist(i, j);
        best = j;
      }
    }
    if ((best < n_gen) == (i < n_gen)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d) {
  require_nonempty_set(gen, "coverage");
  require_nonempty_set(ref, "coverage");
  const Eigen::MatrixXd dist = pairwise_distances(gen, ref, d);
  std::vector<char> matched(ref.size(), 0);
  for (Index i = 0; i < dist.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < dist.cols(); ++j)
      if (dist(i, j) < dist(i, best)) best = j;
    matched[best] = 1;
  }
  const auto hits = std::count(matched.begin(), matched.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(ref.size());
}

double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d) {
  require_nonempty_set(gen, "mmd");
  require_nonempty_set(ref, "mmd");
  const Eigen::MatrixXd dist = pairwise_distances(gen, ref, d);
  return dist.colwise().minCoeff().mean();
}

double tmd(const std::vector<PointCloud>& completions, Index free_from) {
  if (completions.size() < 2) throw DomainError("tmd: need at least two completions");
  std::vector<PointCloud> parts;
  parts.reserve(completions.size());
  for (const auto& c : completions) {
    if (free_from >= 0) {
      if (free_from >= c.rows()) throw ShapeError("tmd: no free rows to compare");
      parts.emplace_back(c.bottomRows(c.rows() - free_from));
    } else {
      parts.push_back(c);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t j = i + 1; j < parts.size(); ++j) total += chamfer(parts[i], parts[j]);
  return total;
}

std::string distance_protocol(Distance d) {
  if (d == Distance::Chamfer) {
    return "CD = mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2 (squared Euclidean, unscaled)";
  }
  return "EMD = (1/N) min_pi sum_i |x_i - y_pi(i)| (exact Hungarian assignment, Euclidean, unscaled)";
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["distance"] = distance;
  j["value"] = value;
  j["protocol"] = protocol;
  j["details"] = details;
  return j;
}

}  // namespace pvd
