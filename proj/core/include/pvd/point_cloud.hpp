#pragma once

#include <Eigen/Core>
#include <random>

namespace pvd {

/// N x 3 coordinates, one point per row. Coordinates live in normalized model
/// space; all diffusion arithmetic on clouds is done in double precision.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Row-major dense matrix used for per-point / per-voxel feature tables.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// Centroid and max-radius scale mapping a cloud into the unit ball.
struct NormalizationRecord {
  Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
  double scale = 1.0;
};

/// Centroid plus max distance to it; zero-radius clouds get scale 1.
NormalizationRecord fit_normalization(const PointCloud& pc);

/// Throws ShapeError unless the cloud is nonempty, DataError on NaN/Inf.
void validate(const PointCloud& pc, const char* what = "point cloud");

/// Throws ShapeError when the two clouds differ in point count.
void require_same_shape(const PointCloud& a, const PointCloud& b, const char* op);

/// Standard-normal draw of shape rows x 3, filled row-major from `rng`.
PointCloud standard_normal(Eigen::Index rows, Rng& rng);

}  // namespace pvd
