#pragma once

// Point-cloud files, normalization and the synthetic desk datasets.
//
// XYZ: one "x y z" line per point, '#' starts a comment line.
// PVPC: "PVPC", u32 N, then 3N little-endian f32, row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvd/completion.hpp"
#include "pvd/point_cloud.hpp"

namespace pvd {

PointCloud load_xyz(const std::filesystem::path& path);
/// 17 significant digits, so load_xyz(save_xyz(pc)) == pc exactly.
void save_xyz(const PointCloud& pc, const std::filesystem::path& path);

PointCloud load_pvpc(const std::filesystem::path& path);
void save_pvpc(const PointCloud& pc, const std::filesystem::path& path);

/// Dispatch on extension: ".pvpc" is binary, anything else is XYZ text.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& pc, const std::filesystem::path& path);

struct Normalized {
  PointCloud cloud;
  NormalizationRecord record;
};

/// Subtracts the centroid and divides by the max radius.
Normalized normalize(const PointCloud& pc);
PointCloud denormalize(const PointCloud& pc, const NormalizationRecord& record);

enum class Primitive { Sphere, Cube, Cylinder, Torus };

std::string to_string(Primitive p);
Primitive primitive_from_string(const std::string& s);

/// Uniform surface samples. Sphere: unit radius. Cube: [-1, 1]^3.
/// Cylinder: radius 1, z in [-1, 1], with caps. Torus: R = 1, r = 0.35, axis z.
PointCloud synth_primitive(Primitive kind, int n, std::uint64_t seed);

/// Half-space crop: z0 holds the round(keep_fraction * N) points with the
/// largest projection onto `normal` (ties by lower index), in their original
/// order. The dropped points are returned as the ground truth of the free rows.
struct PartialSplit {
  CompletionTask task;
  PointCloud missing;
};

PartialSplit make_partial(const PointCloud& pc, const Eigen::RowVector3d& normal, double keep_fraction);

/// Uniform subset of `n` rows without replacement (order of selection).
PointCloud resample(const PointCloud& pc, int n, Rng& rng);

struct Dataset {
  std::vector<std::string> names;
  std::vector<PointCloud> shapes;
  std::vector<NormalizationRecord> records;
};

/// Loads every .xyz / .pvpc file of a directory in filename order. With
/// `points` > 0 each shape is resampled to that many points (seeded), then
/// every shape is normalized when `normalize_shapes` is set.
Dataset load_dataset(const std::filesystem::path& dir, int points = 0, std::uint64_t seed = 0,
                     bool normalize_shapes = false);

/// Files of `dir` that load_dataset would read, sorted.
std::vector<std::filesystem::path> list_clouds(const std::filesystem::path& dir);

}  // namespace pvd
