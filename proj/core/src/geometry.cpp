#include "pvd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvd/errors.hpp"

namespace pvd {

using Eigen::Index;

NormalizationRecord fit_normalization(const PointCloud& pc) {
  if (pc.rows() == 0) throw ShapeError("fit_normalization: empty cloud");
  NormalizationRecord rec;
  rec.centroid = pc.colwise().mean();
  double r2 = 0.0;
  for (Index i = 0; i < pc.rows(); ++i) r2 = std::max(r2, (pc.row(i) - rec.centroid).squaredNorm());
  rec.scale = r2 > 0.0 ? std::sqrt(r2) : 1.0;
  return rec;
}

Eigen::RowVector3d to_unit_cube(const Eigen::RowVector3d& p, const NormalizationRecord& norm) {
  return (p - norm.centroid) / (2.0 * norm.scale) + Eigen::RowVector3d::Constant(0.5);
}

namespace {

int cell(double u, int D) {
  const int i = static_cast<int>(std::floor(u * D));
  return std::clamp(i, 0, D - 1);
}

void check_resolution(int D) {
  if (D < 1) throw DomainError("voxel resolution must be >= 1");
}

}  // namespace

std::vector<int> voxel_indices(const PointCloud& pc, int D, const NormalizationRecord& norm) {
  check_resolution(D);
  std::vector<int> out(static_cast<std::size_t>(pc.rows()));
  for (Index i = 0; i < pc.rows(); ++i) {
    const Eigen::RowVector3d u = to_unit_cube(pc.row(i), norm);
    out[i] = (cell(u(0), D) * D + cell(u(1), D)) * D + cell(u(2), D);
  }
  return out;
}

template <typename T>
ad::SparseMap<T> voxel_average_operator(const PointCloud& pc, int D, const NormalizationRecord& norm) {
  const std::vector<int> vox = voxel_indices(pc, D, norm);
  const Index V = static_cast<Index>(D) * D * D;
  std::vector<int> count(static_cast<std::size_t>(V), 0);
  for (int v : vox) ++count[v];
  std::vector<Eigen::Triplet<T>> trip;
  trip.reserve(vox.size());
  for (std::size_t i = 0; i < vox.size(); ++i) {
    trip.emplace_back(vox[i], static_cast<int>(i), T(1) / static_cast<T>(count[vox[i]]));
  }
  ad::SparseMap<T> op(V, pc.rows());
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

template <typename T>
ad::SparseMap<T> trilinear_operator(const PointCloud& pc, int D, const NormalizationRecord& norm) {
  check_resolution(D);
  std::vector<Eigen::Triplet<T>> trip;
  trip.reserve(static_cast<std::size_t>(pc.rows()) * 8);
  for (Index i = 0; i < pc.rows(); ++i) {
    const Eigen::RowVector3d u = to_unit_cube(pc.row(i), norm);
    int lo[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double g = std::clamp(u(a) * D - 0.5, 0.0, static_cast<double>(D - 1));
      lo[a] = std::min(static_cast<int>(std::floor(g)), std::max(D - 2, 0));
      frac[a] = D == 1 ? 0.0 : g - lo[a];
    }
    for (int corner = 0; corner < 8; ++corner) {
      double w = 1.0;
      int idx[3];
      for (int a = 0; a < 3; ++a) {
        const int bit = (corner >> (2 - a)) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        idx[a] = std::min(lo[a] + bit, D - 1);
      }
      if (w == 0.0) continue;
      trip.emplace_back(static_cast<int>(i), (idx[0] * D + idx[1]) * D + idx[2], static_cast<T>(w));
    }
  }
  ad::SparseMap<T> op(pc.rows(), static_cast<Index>(D) * D * D);
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

VoxelGrid voxelize(const PointCloud& pc, const Matrix<double>& features, int D) {
  validate(pc, "voxelize");
  if (features.rows() != pc.rows()) throw ShapeError("voxelize: one feature row per point required");
  VoxelGrid grid;
  grid.resolution = D;
  grid.norm = fit_normalization(pc);
  grid.features = voxel_average_operator<double>(pc, D, grid.norm) * features;
  return grid;
}

Matrix<double> devoxelize(const VoxelGrid& grid, const PointCloud& pc) {
  const Index V = static_cast<Index>(grid.resolution) * grid.resolution * grid.resolution;
  if (grid.features.rows() != V) throw ShapeError("devoxelize: grid feature table is not D^3 rows");
  return trilinear_operator<double>(pc, grid.resolution, grid.norm) * grid.features;
}

std::vector<int> farthest_point_sample(const PointCloud& pc, int count) {
  const Index n = pc.rows();
  if (count < 1 || count > n) {
    throw DomainError("farthest_point_sample: need 1 <= K <= N (K=" + std::to_string(count) +
                      ", N=" + std::to_string(n) + ")");
  }
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(count));
  std::vector<double> mind(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  int last = 0;
  picked.push_back(0);
  taken[0] = 1;
  while (static_cast<int>(picked.size()) < count) {
    int best = -1;
    double best_d = -1.0;
    for (Index i = 0; i < n; ++i) {
      const double d = (pc.row(i) - pc.row(last)).squaredNorm();
      if (d < mind[i]) mind[i] = d;
      if (!taken[i] && mind[i] > best_d) {
        best_d = mind[i];
        best = static_cast<int>(i);
      }
    }
    picked.push_back(best);
    taken[best] = 1;
    last = best;
  }
  return picked;
}

std::vector<std::vector<int>> ball_query(const PointCloud& pc, const PointCloud& centers, double radius,
                                         int max_neighbors) {
  if (!(radius > 0.0)) throw DomainError("ball_query: radius must be positive");
  if (max_neighbors < 1) throw DomainError("ball_query: need at least one neighbor slot");
  if (pc.rows() == 0) throw ShapeError("ball_query: empty cloud");
  const double r2 = radius * radius;
  std::vector<std::vector<int>> out(static_cast<std::size_t>(centers.rows()));
  for (Index c = 0; c < centers.rows(); ++c) {
    auto& lst = out[c];
    lst.reserve(static_cast<std::size_t>(max_neighbors));
    int nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < pc.rows(); ++i) {
      const double d = (pc.row(i) - centers.row(c)).squaredNorm();
      if (d < nearest_d) {
        nearest_d = d;
        nearest = static_cast<int>(i);
      }
      if (d <= r2 && static_cast<int>(lst.size()) < max_neighbors) lst.push_back(static_cast<int>(i));
    }
    if (lst.empty()) lst.push_back(nearest);
    lst.resize(static_cast<std::size_t>(max_neighbors), lst.front());
  }
  return out;
}

template <typename T>
ad::SparseMap<T> three_nn_operator(const PointCloud& coarse, const PointCloud& fine) {
  if (coarse.rows() == 0) throw ShapeError("three_nn: empty coarse set");
  const int k = static_cast<int>(std::min<Index>(3, coarse.rows()));
  std::vector<Eigen::Triplet<T>> trip;
  trip.reserve(static_cast<std::size_t>(fine.rows()) * k);
  std::vector<std::pair<double, int>> best;
  for (Index i = 0; i < fine.rows(); ++i) {
    best.clear();
    for (Index j = 0; j < coarse.rows(); ++j) {
      best.emplace_back((fine.row(i) - coarse.row(j)).squaredNorm(), static_cast<int>(j));
    }
    std::partial_sort(best.begin(), best.begin() + k, best.end());
    double total = 0.0;
    for (int a = 0; a < k; ++a) total += 1.0 / (best[a].first + 1e-8);
    // Keep column order ascending within the row.
    std::sort(best.begin(), best.begin() + k,
              [](const auto& l, const auto& r) { return l.second < r.second; });
    for (int a = 0; a < k; ++a) {
      const double wa = 1.0 / (best[a].first + 1e-8);
      trip.emplace_back(static_cast<int>(i), best[a].second, static_cast<T>(wa / total));
    }
  }
  ad::SparseMap<T> op(fine.rows(), coarse.rows());
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

PointCloud gather_points(const PointCloud& pc, const std::vector<int>& idx) {
  PointCloud out(static_cast<Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = pc.row(idx[i]);
  return out;
}

template ad::SparseMap<float> voxel_average_operator(const PointCloud&, int, const NormalizationRecord&);
template ad::SparseMap<double> voxel_average_operator(const PointCloud&, int, const NormalizationRecord&);
template ad::SparseMap<float> trilinear_operator(const PointCloud&, int, const NormalizationRecord&);
template ad::SparseMap<double> trilinear_operator(const PointCloud&, int, const NormalizationRecord&);
template ad::SparseMap<float> three_nn_operator(const PointCloud&, const PointCloud&);
template ad::SparseMap<double> three_nn_operator(const PointCloud&, const PointCloud&);

}  // namespace pvd
