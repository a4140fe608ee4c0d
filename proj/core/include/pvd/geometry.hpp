#pragma once

// Point/voxel geometry used by the denoiser: voxel scatter-average,
// trilinear devoxelization, farthest point sampling, ball query and
// inverse-distance interpolation. Every routine here depends on coordinates
// only, so the returned operators are constants for differentiation.

#include <vector>

#include "pvd/autodiff.hpp"
#include "pvd/point_cloud.hpp"

namespace pvd {

struct VoxelGrid {
  int resolution = 0;
  /// resolution^3 x C, row ((ix * D) + iy) * D + iz.
  Matrix<double> features;
  NormalizationRecord norm;
};

/// Maps a point into the unit cube: (p - centroid) / (2 scale) + 0.5.
Eigen::RowVector3d to_unit_cube(const Eigen::RowVector3d& p, const NormalizationRecord& norm);

/// Flat voxel index of the voxel containing each point (coordinate 1.0 lands
/// in the last voxel).
std::vector<int> voxel_indices(const PointCloud& pc, int resolution, const NormalizationRecord& norm);

/// D^3 x N operator averaging point features into their voxels. Empty voxels
/// get zero rows. Entries of each row are in ascending point order.
template <typename T>
ad::SparseMap<T> voxel_average_operator(const PointCloud& pc, int resolution, const NormalizationRecord& norm);

/// N x D^3 operator sampling a grid at each point by trilinear interpolation
/// between the 8 surrounding voxel centers (clamped at the boundary).
template <typename T>
ad::SparseMap<T> trilinear_operator(const PointCloud& pc, int resolution, const NormalizationRecord& norm);

VoxelGrid voxelize(const PointCloud& pc, const Matrix<double>& features, int resolution);
Matrix<double> devoxelize(const VoxelGrid& grid, const PointCloud& pc);

/// Greedy farthest point sampling from index 0; ties go to the lowest index.
std::vector<int> farthest_point_sample(const PointCloud& pc, int count);

/// Up to `max_neighbors` indices within `radius` of each center in ascending
/// order. An empty ball is filled with the nearest point; short lists repeat
/// their first entry. Every list has exactly `max_neighbors` entries.
std::vector<std::vector<int>> ball_query(const PointCloud& pc, const PointCloud& centers, double radius,
                                         int max_neighbors);

/// fine x coarse operator: inverse squared distance weights over the 3
/// nearest coarse points (fewer if the coarse set is smaller), normalized.
template <typename T>
ad::SparseMap<T> three_nn_operator(const PointCloud& coarse, const PointCloud& fine);

/// Selects rows of `pc`.
PointCloud gather_points(const PointCloud& pc, const std::vector<int>& idx);

}  // namespace pvd
