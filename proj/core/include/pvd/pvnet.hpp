#pragma once

// Point-voxel denoiser eps_theta(x_t, t).
//
// Layout: time embedding -> SA 1..4 -> FP 1..4 -> linear head.
//
//   PVConv block   concat(features, temb) ─┬─ voxelize -> conv3 -> GN -> swish -> dropout
//                                          │   -> conv3 -> GN [-> attention] -> devoxelize ─┐
//                                          └─ linear -> GN -> swish ─────────────────────── + ─> out
//   SA level       PVConv x L -> FPS centers -> ball query
//                  -> [neighbor features | neighbor xyz - center xyz] -> linear/GN/swish -> max-pool
//                  (a level with L = 0 and no channels is grouping-only: max-pool of the
//                  concatenated neighbor features, no MLP)
//   FP level       3-NN inverse-distance interpolation of coarse features
//                  -> concat skip features -> PVConv x L -> linear/GN/swish
//
// Input channels of every level follow from the descriptor; nothing but the
// output widths is configured.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvd/autodiff.hpp"
#include "pvd/point_cloud.hpp"

namespace pvd {

struct SetAbstractionConfig {
  int blocks = 0;         // PVConv blocks (L)
  int out_channels = 0;   // 0 with blocks == 0 means grouping-only
  int resolution = 0;     // voxel grid D
  bool attention = false;
  int centers = 0;        // upper bound; clamped to the level's point count
  double radius = 0.0;
  int neighbors = 0;

  bool grouping_only() const noexcept { return blocks == 0 && out_channels == 0; }
};

struct FeaturePropagationConfig {
  int blocks = 0;
  int out_channels = 0;
  int resolution = 0;
  bool attention = false;
};

struct ArchConfig {
  std::string name = "custom";
  int time_dim = 64;
  int groups = 8;
  double dropout = 0.1;
  std::vector<SetAbstractionConfig> sa;
  std::vector<FeaturePropagationConfig> fp;

  /// Throws DomainError when group-norm widths, level counts or sizes are
  /// inconsistent.
  void validate() const;
};

/// Full-size network (2048-point shapes, 64-dim time embedding).
ArchConfig full_preset();
/// CPU-trainable network: half the channels, D in {16, 8, 4}, 32-dim time
/// embedding; intended for 128-point shapes.
ArchConfig desk_preset();
/// Very small network for fast tests.
ArchConfig tiny_preset();
ArchConfig preset_by_name(const std::string& name);

enum class InitKind { FanInUniform, Ones, Zeros };

struct ParamSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  InitKind init = InitKind::FanInUniform;
  Eigen::Index fan_in = 1;
};

/// Every learnable tensor of the architecture, in a fixed canonical order.
std::vector<ParamSpec> describe_parameters(const ArchConfig& arch);

/// Ordered named tensors.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, Matrix<T> value);
  const Matrix<T>& at(const std::string& name) const;
  Matrix<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const Matrix<T>& operator[](std::size_t i) const { return values_[i]; }
  Matrix<T>& operator[](std::size_t i) { return values_[i]; }
  Eigen::Index scalar_count() const;

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<T>> values_;
  std::map<std::string, std::size_t> index_;
};

/// Fan-in uniform weights, unit GN scale, zero GN shift. With
/// `zero_output` the final head is zero so an untrained model predicts 0.
template <typename T>
ParamStore<T> init_parameters(const ArchConfig& arch, std::uint64_t seed, bool zero_output = true);

/// Throws DomainError if the store does not match the descriptor exactly.
template <typename T>
void check_parameters(const ArchConfig& arch, const ParamStore<T>& params);

/// Raw sinusoid (sin w_k t, cos w_k t), k = 1..dim/2, w_k = 10000^(-2k/dim).
Matrix<double> sinusoidal_embedding(double t, int dim);

enum class Mode { Train, Eval };

namespace layers {

/// Parameters bound to a tape plus the evaluation settings shared by every
/// layer of one forward pass.
template <typename T>
class Context {
 public:
  Context(ad::Tape<T>& tape, const ParamStore<T>& params, int groups, double dropout, Mode mode, Rng* rng);

  ad::Tape<T>& tape() const noexcept { return *tape_; }
  ad::Var param(const std::string& name) const;
  /// Tape variables of every parameter, in store order.
  const std::vector<ad::Var>& bound() const noexcept { return bound_; }
  int groups() const noexcept { return groups_; }

  /// Identity in eval mode or with zero rate; otherwise a seeded Bernoulli mask.
  ad::Var maybe_dropout(ad::Var x) const;

 private:
  ad::Tape<T>* tape_;
  const ParamStore<T>* params_;
  std::vector<ad::Var> bound_;
  int groups_;
  double dropout_;
  Mode mode_;
  Rng* rng_;
};

/// Scatter/gather operators of one point set at one grid resolution.
template <typename T>
struct VoxelOps {
  int resolution = 0;
  std::shared_ptr<const ad::SparseMap<T>> scatter;  // D^3 x N
  std::shared_ptr<const ad::SparseMap<T>> gather;   // N x D^3
};

template <typename T>
VoxelOps<T> make_voxel_ops(const PointCloud& pts, int resolution);

/// Parameters of one PVConv block named under `prefix`.
std::vector<ParamSpec> describe_pvconv_block(const std::string& prefix, int in_channels, int time_dim,
                                             int out_channels, bool attention);

/// conv3/GN/swish/dropout/conv3/GN[/attention] voxel branch plus a
/// linear/GN/swish point branch, summed. Returns N x out_channels.
template <typename T>
ad::Var pvconv_block(const Context<T>& ctx, const std::string& prefix, const VoxelOps<T>& ops, ad::Var features,
                     ad::Var temb, int out_channels, bool attention);

/// Attention parameters are `prefix`.{q,k,v,o}.
template <typename T>
ad::Var voxel_attention(const Context<T>& ctx, const std::string& prefix, ad::Var grid);

template <typename T>
struct LevelOutput {
  PointCloud points;
  ad::Var features;
};

std::vector<ParamSpec> describe_set_abstraction(const std::string& prefix, int in_channels, int time_dim,
                                                const SetAbstractionConfig& cfg);
template <typename T>
LevelOutput<T> set_abstraction(const Context<T>& ctx, const std::string& prefix, const PointCloud& points,
                               ad::Var features, ad::Var temb, const SetAbstractionConfig& cfg);

std::vector<ParamSpec> describe_feature_propagation(const std::string& prefix, int in_channels, int time_dim,
                                                    const FeaturePropagationConfig& cfg);
template <typename T>
ad::Var feature_propagation(const Context<T>& ctx, const std::string& prefix, const PointCloud& coarse,
                            ad::Var coarse_features, const PointCloud& fine, ad::Var skip_features,
                            ad::Var temb, const FeaturePropagationConfig& cfg);

/// Output width of a set-abstraction level given its input width.
int set_abstraction_channels(int in_channels, const SetAbstractionConfig& cfg);

}  // namespace layers

/// Initializes a store for an arbitrary spec list (used for the whole
/// network and for single layers in tests).
template <typename T>
ParamStore<T> init_from_specs(const std::vector<ParamSpec>& specs, std::uint64_t seed);

template <typename T>
class PVNet {
 public:
  PVNet(ArchConfig arch, ParamStore<T> params);

  const ArchConfig& arch() const noexcept { return arch_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& mutable_params() noexcept { return params_; }

  struct Forward {
    ad::Var output;                   // N x 3
    std::vector<ad::Var> parameters;  // aligned with params().names()
  };

  /// Records a forward pass. In Train mode dropout masks are drawn from
  /// `dropout_rng` (required).
  Forward forward(ad::Tape<T>& tape, const PointCloud& xt, int t, Mode mode, Rng* dropout_rng = nullptr) const;

  /// Evaluation-mode prediction eps_hat(x_t, t).
  PointCloud denoise(const PointCloud& xt, int t) const;

  /// Time embedding after the two-layer MLP (1 x time_dim).
  Matrix<T> time_embedding(int t) const;

 private:
  ArchConfig arch_;
  ParamStore<T> params_;
};

}  // namespace pvd
