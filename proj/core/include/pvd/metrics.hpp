#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "pvd/point_cloud.hpp"

namespace pvd {

enum class Distance { Chamfer, EMD };

std::string to_string(Distance d);
Distance distance_from_string(const std::string& s);

/// Mean squared nearest-neighbor distance X->Y plus Y->X.
double chamfer(const PointCloud& x, const PointCloud& y);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns assignment[row] = column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Mean Euclidean distance under the optimal bijection. Requires |X| = |Y|.
/// The matched distances are summed in ascending order so equal-cost
/// matchings give bit-identical results.
double emd(const PointCloud& x, const PointCloud& y);

/// Sum of the matched distances, ascending, divided by N.
double matching_cost(const PointCloud& x, const PointCloud& y, const std::vector<int>& assignment);

double distance(const PointCloud& x, const PointCloud& y, Distance d);

/// rows(a) x rows(b) matrix of pairwise set distances.
Eigen::MatrixXd pairwise_distances(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b, Distance d);

/// Leave-one-out 1-NN two-sample accuracy over gen ∪ ref. Self matches are
/// excluded and ties go to the lowest merged index (gen first).
double one_nn_accuracy(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d);

/// Fraction of reference clouds that are the nearest reference of some
/// generated cloud.
double coverage(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d);

/// Mean over reference clouds of the distance to the nearest generated cloud.
double mmd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, Distance d);

/// Sum of Chamfer distances over all unordered pairs of completions. With
/// `free_from` >= 0 only rows [free_from, N) of each completion are compared.
double tmd(const std::vector<PointCloud>& completions, Eigen::Index free_from = -1);

struct MetricReport {
  std::string metric;
  std::string distance;
  double value = 0.0;
  std::string protocol;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Protocol string describing the distance definitions in use.
std::string distance_protocol(Distance d);

}  // namespace pvd
