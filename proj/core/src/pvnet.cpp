#include "pvd/pvnet.hpp"

#include <cmath>

#include "pvd/errors.hpp"
#include "pvd/geometry.hpp"

namespace pvd {

using Eigen::Index;
using ad::Var;

// ---------------------------------------------------------------------------
// Architecture descriptors

void ArchConfig::validate() const {
  auto fail = [this](const std::string& what) { throw DomainError("architecture '" + name + "': " + what); };
  if (time_dim < 2 || time_dim % 2 != 0) fail("time_dim must be even and >= 2");
  if (groups < 1) fail("groups must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (sa.empty()) fail("need at least one set-abstraction level");
  if (fp.size() != sa.size()) fail("need one feature-propagation level per set-abstraction level");
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const auto& s = sa[i];
    const std::string tag = "sa" + std::to_string(i + 1);
    if (s.centers < 1 || s.neighbors < 1 || !(s.radius > 0.0)) fail(tag + ": centers, neighbors and radius must be positive");
    if (s.grouping_only()) continue;
    if (s.out_channels < 1 || s.out_channels % groups != 0) fail(tag + ": out_channels must be a positive multiple of groups");
    if (s.blocks > 0 && s.resolution < 1) fail(tag + ": resolution must be >= 1");
    if (s.blocks < 0) fail(tag + ": negative block count");
  }
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const auto& f = fp[i];
    const std::string tag = "fp" + std::to_string(i + 1);
    if (f.out_channels < 1 || f.out_channels % groups != 0) fail(tag + ": out_channels must be a positive multiple of groups");
    if (f.blocks < 0) fail(tag + ": negative block count");
    if (f.blocks > 0 && f.resolution < 1) fail(tag + ": resolution must be >= 1");
  }
}

ArchConfig full_preset() {
  ArchConfig a;
  a.name = "full";
  a.time_dim = 64;
  a.sa = {{2, 32, 32, false, 1024, 0.1, 32},
          {3, 64, 16, true, 256, 0.2, 32},
          {3, 128, 8, false, 64, 0.4, 32},
          {0, 0, 0, false, 16, 0.8, 32}};
  a.fp = {{3, 256, 8, false}, {3, 256, 8, true}, {2, 128, 16, false}, {2, 64, 32, false}};
  return a;
}

ArchConfig desk_preset() {
  ArchConfig a;
  a.name = "desk";
  a.time_dim = 32;
  a.sa = {{2, 16, 16, false, 256, 0.1, 32},
          {3, 32, 8, true, 64, 0.2, 32},
          {3, 64, 4, false, 16, 0.4, 32},
          {0, 0, 0, false, 4, 0.8, 32}};
  a.fp = {{3, 128, 4, false}, {3, 128, 4, true}, {2, 64, 8, false}, {2, 32, 16, false}};
  return a;
}

ArchConfig tiny_preset() {
  ArchConfig a;
  a.name = "tiny";
  a.time_dim = 8;
  a.sa = {{1, 8, 4, false, 16, 0.3, 8}, {1, 16, 2, true, 4, 0.6, 8}, {0, 0, 0, false, 2, 1.0, 4}};
  a.fp = {{1, 16, 2, true}, {1, 8, 2, false}, {1, 8, 4, false}};
  return a;
}

ArchConfig preset_by_name(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  if (name == "tiny") return tiny_preset();
  throw DomainError("unknown model preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
void ParamStore<T>::add(std::string name, Matrix<T> value) {
  if (index_.count(name)) throw DomainError("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

template <typename T>
const Matrix<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DomainError("missing parameter '" + name + "'");
  return values_[it->second];
}

template <typename T>
Matrix<T>& ParamStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DomainError("missing parameter '" + name + "'");
  return values_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DomainError("missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
Index ParamStore<T>::scalar_count() const {
  Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore out;
  for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Matrix<T>::Zero(values_[i].rows(), values_[i].cols()));
  return out;
}

namespace {

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, Index in, Index outc) {
  out.push_back({prefix + ".weight", in, outc, InitKind::FanInUniform, in});
  out.push_back({prefix + ".bias", 1, outc, InitKind::FanInUniform, in});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& prefix, Index c) {
  out.push_back({prefix + ".gamma", 1, c, InitKind::Ones, 1});
  out.push_back({prefix + ".beta", 1, c, InitKind::Zeros, 1});
}

}  // namespace

namespace layers {

std::vector<ParamSpec> describe_pvconv_block(const std::string& prefix, int in_channels, int time_dim,
                                             int out_channels, bool attention) {
  std::vector<ParamSpec> out;
  const Index cin = in_channels + time_dim;
  const Index co = out_channels;
  out.push_back({prefix + ".voxel.conv1.weight", 27 * cin, co, InitKind::FanInUniform, 27 * cin});
  out.push_back({prefix + ".voxel.conv1.bias", 1, co, InitKind::FanInUniform, 27 * cin});
  add_norm(out, prefix + ".voxel.norm1", co);
  out.push_back({prefix + ".voxel.conv2.weight", 27 * co, co, InitKind::FanInUniform, 27 * co});
  out.push_back({prefix + ".voxel.conv2.bias", 1, co, InitKind::FanInUniform, 27 * co});
  add_norm(out, prefix + ".voxel.norm2", co);
  if (attention) {
    for (const char* p : {"q", "k", "v", "o"}) {
      out.push_back({prefix + ".voxel.attn." + p, co, co, InitKind::FanInUniform, co});
    }
  }
  add_linear(out, prefix + ".point.fc", cin, co);
  add_norm(out, prefix + ".point.norm", co);
  return out;
}

int set_abstraction_channels(int in_channels, const SetAbstractionConfig& cfg) {
  return cfg.grouping_only() ? in_channels + 3 : cfg.out_channels;
}

std::vector<ParamSpec> describe_set_abstraction(const std::string& prefix, int in_channels, int time_dim,
                                                const SetAbstractionConfig& cfg) {
  std::vector<ParamSpec> out;
  if (cfg.grouping_only()) return out;
  int c = in_channels;
  for (int b = 0; b < cfg.blocks; ++b) {
    auto blk = describe_pvconv_block(prefix + ".block" + std::to_string(b), c, time_dim, cfg.out_channels, cfg.attention);
    out.insert(out.end(), blk.begin(), blk.end());
    c = cfg.out_channels;
  }
  add_linear(out, prefix + ".mlp.fc", c + 3, cfg.out_channels);
  add_norm(out, prefix + ".mlp.norm", cfg.out_channels);
  return out;
}

std::vector<ParamSpec> describe_feature_propagation(const std::string& prefix, int in_channels, int time_dim,
                                                    const FeaturePropagationConfig& cfg) {
  std::vector<ParamSpec> out;
  int c = in_channels;
  for (int b = 0; b < cfg.blocks; ++b) {
    auto blk = describe_pvconv_block(prefix + ".block" + std::to_string(b), c, time_dim, cfg.out_channels, cfg.attention);
    out.insert(out.end(), blk.begin(), blk.end());
    c = cfg.out_channels;
  }
  add_linear(out, prefix + ".mlp.fc", c, cfg.out_channels);
  add_norm(out, prefix + ".mlp.norm", cfg.out_channels);
  return out;
}

}  // namespace layers

std::vector<ParamSpec> describe_parameters(const ArchConfig& arch) {
  arch.validate();
  std::vector<ParamSpec> out;
  const int E = arch.time_dim;
  add_linear(out, "temb.fc1", E, E);
  add_linear(out, "temb.fc2", E, E);
  std::vector<int> level_channels{3};
  for (std::size_t i = 0; i < arch.sa.size(); ++i) {
    const int cin = level_channels.back();
    auto s = layers::describe_set_abstraction("sa" + std::to_string(i + 1), cin, E, arch.sa[i]);
    out.insert(out.end(), s.begin(), s.end());
    level_channels.push_back(layers::set_abstraction_channels(cin, arch.sa[i]));
  }
  int c = level_channels.back();
  for (std::size_t j = 0; j < arch.fp.size(); ++j) {
    const int skip = level_channels[level_channels.size() - 2 - j];
    auto f = layers::describe_feature_propagation("fp" + std::to_string(j + 1), c + skip, E, arch.fp[j]);
    out.insert(out.end(), f.begin(), f.end());
    c = arch.fp[j].out_channels;
  }
  add_linear(out, "head", c, 3);
  return out;
}

template <typename T>
ParamStore<T> init_from_specs(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<T> store;
  for (const auto& s : specs) {
    Matrix<T> m(s.rows, s.cols);
    switch (s.init) {
      case InitKind::Ones: m.setOnes(); break;
      case InitKind::Zeros: m.setZero(); break;
      case InitKind::FanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
        break;
      }
    }
    store.add(s.name, std::move(m));
  }
  return store;
}

template <typename T>
ParamStore<T> init_parameters(const ArchConfig& arch, std::uint64_t seed, bool zero_output) {
  ParamStore<T> store = init_from_specs<T>(describe_parameters(arch), seed);
  if (zero_output) {
    store.at("head.weight").setZero();
    store.at("head.bias").setZero();
  }
  return store;
}

template <typename T>
void check_parameters(const ArchConfig& arch, const ParamStore<T>& params) {
  const auto specs = describe_parameters(arch);
  if (specs.size() != params.size()) {
    throw DomainError("parameter count " + std::to_string(params.size()) + " does not match architecture (" +
                      std::to_string(specs.size()) + ")");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (params.names()[i] != s.name) throw DomainError("parameter " + std::to_string(i) + " is '" + params.names()[i] + "', expected '" + s.name + "'");
    if (params[i].rows() != s.rows || params[i].cols() != s.cols) throw DomainError("parameter '" + s.name + "' has wrong shape");
  }
}

Matrix<double> sinusoidal_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw DomainError("time embedding dimension must be even and >= 2");
  Matrix<double> out(1, dim);
  for (int k = 1; k <= dim / 2; ++k) {
    const double w = 1.0 / std::pow(10000.0, 2.0 * k / dim);
    out(0, 2 * (k - 1)) = std::sin(w * t);
    out(0, 2 * (k - 1) + 1) = std::cos(w * t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layers

namespace layers {

template <typename T>
Context<T>::Context(ad::Tape<T>& tape, const ParamStore<T>& params, int groups, double dropout, Mode mode, Rng* rng)
    : tape_(&tape), params_(&params), groups_(groups), dropout_(dropout), mode_(mode), rng_(rng) {
  if (mode == Mode::Train && dropout > 0.0 && rng == nullptr) {
    throw DomainError("training-mode forward needs a dropout RNG");
  }
  bound_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) bound_.push_back(tape.parameter(params[i]));
}

template <typename T>
Var Context<T>::param(const std::string& name) const {
  return bound_[params_->index_of(name)];
}

template <typename T>
Var Context<T>::maybe_dropout(Var x) const {
  if (mode_ != Mode::Train || dropout_ <= 0.0) return x;
  const auto& v = tape_->value(x);
  std::bernoulli_distribution keep(1.0 - dropout_);
  const T scale = static_cast<T>(1.0 / (1.0 - dropout_));
  Matrix<T> mask(v.rows(), v.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng_) ? scale : T(0);
  return ad::dropout(*tape_, x, std::move(mask));
}

template <typename T>
VoxelOps<T> make_voxel_ops(const PointCloud& pts, int resolution) {
  const NormalizationRecord norm = fit_normalization(pts);
  VoxelOps<T> ops;
  ops.resolution = resolution;
  ops.scatter = std::make_shared<const ad::SparseMap<T>>(voxel_average_operator<T>(pts, resolution, norm));
  ops.gather = std::make_shared<const ad::SparseMap<T>>(trilinear_operator<T>(pts, resolution, norm));
  return ops;
}

template <typename T>
Var voxel_attention(const Context<T>& ctx, const std::string& prefix, Var grid) {
  return ad::self_attention(ctx.tape(), grid, ctx.param(prefix + ".q"), ctx.param(prefix + ".k"),
                            ctx.param(prefix + ".v"), ctx.param(prefix + ".o"));
}

namespace {

template <typename T>
Var norm_swish(const Context<T>& ctx, const std::string& prefix, Var x) {
  auto& tp = ctx.tape();
  return ad::swish(tp, ad::group_norm(tp, x, ctx.param(prefix + ".gamma"), ctx.param(prefix + ".beta"), ctx.groups()));
}

template <typename T>
Var mlp(const Context<T>& ctx, const std::string& prefix, Var x) {
  auto& tp = ctx.tape();
  const Var h = ad::linear(tp, x, ctx.param(prefix + ".fc.weight"), ctx.param(prefix + ".fc.bias"));
  return norm_swish(ctx, prefix + ".norm", h);
}

}  // namespace

template <typename T>
Var pvconv_block(const Context<T>& ctx, const std::string& prefix, const VoxelOps<T>& ops, Var features, Var temb,
                 int out_channels, bool attention) {
  auto& tp = ctx.tape();
  const Index n = tp.value(features).rows();
  const Var x = ad::concat_cols(tp, features, ad::broadcast_rows(tp, temb, n));

  const std::string vp = prefix + ".voxel";
  Var g = ad::sparse_apply(tp, ops.scatter, x);
  g = ad::conv3d(tp, g, ctx.param(vp + ".conv1.weight"), ctx.param(vp + ".conv1.bias"), ops.resolution);
  g = norm_swish(ctx, vp + ".norm1", g);
  g = ctx.maybe_dropout(g);
  g = ad::conv3d(tp, g, ctx.param(vp + ".conv2.weight"), ctx.param(vp + ".conv2.bias"), ops.resolution);
  g = ad::group_norm(tp, g, ctx.param(vp + ".norm2.gamma"), ctx.param(vp + ".norm2.beta"), ctx.groups());
  if (attention) g = voxel_attention(ctx, vp + ".attn", g);
  const Var voxel_branch = ad::sparse_apply(tp, ops.gather, g);

  const Var point_branch = mlp(ctx, prefix + ".point", x);
  if (tp.value(point_branch).cols() != out_channels) throw ShapeError(prefix + ": channel mismatch");
  return ad::add(tp, voxel_branch, point_branch);
}

template <typename T>
LevelOutput<T> set_abstraction(const Context<T>& ctx, const std::string& prefix, const PointCloud& points,
                               Var features, Var temb, const SetAbstractionConfig& cfg) {
  auto& tp = ctx.tape();
  const Index n = points.rows();
  if (tp.value(features).rows() != n) throw ShapeError(prefix + ": feature rows do not match point count");
  Var f = features;
  if (cfg.blocks > 0) {
    const VoxelOps<T> ops = make_voxel_ops<T>(points, cfg.resolution);
    for (int b = 0; b < cfg.blocks; ++b) {
      f = pvconv_block(ctx, prefix + ".block" + std::to_string(b), ops, f, temb, cfg.out_channels, cfg.attention);
    }
  }

  const int k = static_cast<int>(std::min<Index>(cfg.centers, n));
  const std::vector<int> centers_idx = farthest_point_sample(points, k);
  LevelOutput<T> out;
  out.points = gather_points(points, centers_idx);
  const auto nbrs = ball_query(points, out.points, cfg.radius, cfg.neighbors);

  const Index rows = static_cast<Index>(k) * cfg.neighbors;
  std::vector<Eigen::Triplet<T>> trip;
  trip.reserve(static_cast<std::size_t>(rows));
  Matrix<T> rel(rows, 3);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < cfg.neighbors; ++j) {
      const Index r = static_cast<Index>(c) * cfg.neighbors + j;
      const int src = nbrs[c][j];
      trip.emplace_back(static_cast<int>(r), src, T(1));
      rel.row(r) = (points.row(src) - out.points.row(c)).template cast<T>();
    }
  }
  auto select = std::make_shared<ad::SparseMap<T>>(rows, n);
  select->setFromTriplets(trip.begin(), trip.end());

  Var grouped = ad::sparse_apply(tp, std::shared_ptr<const ad::SparseMap<T>>(select), f);
  grouped = ad::concat_cols(tp, grouped, tp.constant(std::move(rel)));
  if (!cfg.grouping_only()) grouped = mlp(ctx, prefix + ".mlp", grouped);
  out.features = ad::max_pool_rows(tp, grouped, cfg.neighbors);
  return out;
}

template <typename T>
Var feature_propagation(const Context<T>& ctx, const std::string& prefix, const PointCloud& coarse,
                        Var coarse_features, const PointCloud& fine, Var skip_features, Var temb,
                        const FeaturePropagationConfig& cfg) {
  auto& tp = ctx.tape();
  auto interp = std::make_shared<const ad::SparseMap<T>>(three_nn_operator<T>(coarse, fine));
  Var f = ad::sparse_apply(tp, interp, coarse_features);
  f = ad::concat_cols(tp, f, skip_features);
  if (cfg.blocks > 0) {
    const VoxelOps<T> ops = make_voxel_ops<T>(fine, cfg.resolution);
    for (int b = 0; b < cfg.blocks; ++b) {
      f = pvconv_block(ctx, prefix + ".block" + std::to_string(b), ops, f, temb, cfg.out_channels, cfg.attention);
    }
  }
  return mlp(ctx, prefix + ".mlp", f);
}

}  // namespace layers

// ---------------------------------------------------------------------------
// Network

template <typename T>
PVNet<T>::PVNet(ArchConfig arch, ParamStore<T> params) : arch_(std::move(arch)), params_(std::move(params)) {
  check_parameters(arch_, params_);
}

template <typename T>
typename PVNet<T>::Forward PVNet<T>::forward(ad::Tape<T>& tape, const PointCloud& xt, int t, Mode mode,
                                             Rng* dropout_rng) const {
  validate(xt, "denoiser input");
  layers::Context<T> ctx(tape, params_, arch_.groups, arch_.dropout, mode, dropout_rng);

  Var temb = tape.constant(sinusoidal_embedding(static_cast<double>(t), arch_.time_dim).template cast<T>());
  temb = ad::linear(tape, temb, ctx.param("temb.fc1.weight"), ctx.param("temb.fc1.bias"));
  temb = ad::leaky_relu(tape, temb, T(0.1));
  temb = ad::linear(tape, temb, ctx.param("temb.fc2.weight"), ctx.param("temb.fc2.bias"));

  std::vector<PointCloud> level_points{xt};
  std::vector<Var> level_features{tape.constant(xt.template cast<T>())};
  for (std::size_t i = 0; i < arch_.sa.size(); ++i) {
    auto out = layers::set_abstraction(ctx, "sa" + std::to_string(i + 1), level_points.back(), level_features.back(),
                                       temb, arch_.sa[i]);
    level_points.push_back(std::move(out.points));
    level_features.push_back(out.features);
  }

  Var f = level_features.back();
  for (std::size_t j = 0; j < arch_.fp.size(); ++j) {
    const std::size_t coarse = level_points.size() - 1 - j;
    f = layers::feature_propagation(ctx, "fp" + std::to_string(j + 1), level_points[coarse], f,
                                    level_points[coarse - 1], level_features[coarse - 1], temb, arch_.fp[j]);
  }
  Forward result;
  result.output = ad::linear(tape, f, ctx.param("head.weight"), ctx.param("head.bias"));
  result.parameters = ctx.bound();
  return result;
}

template <typename T>
PointCloud PVNet<T>::denoise(const PointCloud& xt, int t) const {
  ad::Tape<T> tape(false);
  const Forward fw = forward(tape, xt, t, Mode::Eval);
  return tape.value(fw.output).template cast<double>();
}

template <typename T>
Matrix<T> PVNet<T>::time_embedding(int t) const {
  ad::Tape<T> tape(false);
  layers::Context<T> ctx(tape, params_, arch_.groups, 0.0, Mode::Eval, nullptr);
  Var temb = tape.constant(sinusoidal_embedding(static_cast<double>(t), arch_.time_dim).template cast<T>());
  temb = ad::linear(tape, temb, ctx.param("temb.fc1.weight"), ctx.param("temb.fc1.bias"));
  temb = ad::leaky_relu(tape, temb, T(0.1));
  temb = ad::linear(tape, temb, ctx.param("temb.fc2.weight"), ctx.param("temb.fc2.bias"));
  return tape.value(temb);
}

#define PVD_INSTANTIATE(T)                                                                                   \
  template class ParamStore<T>;                                                                              \
  template ParamStore<T> init_from_specs<T>(const std::vector<ParamSpec>&, std::uint64_t);                   \
  template ParamStore<T> init_parameters<T>(const ArchConfig&, std::uint64_t, bool);                         \
  template void check_parameters<T>(const ArchConfig&, const ParamStore<T>&);                                \
  template class layers::Context<T>;                                                                         \
  template layers::VoxelOps<T> layers::make_voxel_ops<T>(const PointCloud&, int);                            \
  template Var layers::pvconv_block<T>(const layers::Context<T>&, const std::string&, const layers::VoxelOps<T>&, \
                                       Var, Var, int, bool);                                                 \
  template Var layers::voxel_attention<T>(const layers::Context<T>&, const std::string&, Var);               \
  template layers::LevelOutput<T> layers::set_abstraction<T>(const layers::Context<T>&, const std::string&,  \
                                                             const PointCloud&, Var, Var,                    \
                                                             const SetAbstractionConfig&);                   \
  template Var layers::feature_propagation<T>(const layers::Context<T>&, const std::string&, const PointCloud&, \
                                              Var, const PointCloud&, Var, Var,                              \
                                              const FeaturePropagationConfig&);                              \
  template class PVNet<T>;

PVD_INSTANTIATE(float)
PVD_INSTANTIATE(double)

#undef PVD_INSTANTIATE

}  // namespace pvd
