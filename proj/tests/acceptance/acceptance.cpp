// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// The overfit experiments dominate the runtime (tens of minutes on one core).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "../../tools/cli.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "pvd/checkpoint.hpp"
#include "pvd/completion.hpp"
#include "pvd/diffusion.hpp"
#include "pvd/geometry.hpp"
#include "pvd/io.hpp"
#include "pvd/metrics.hpp"
#include "pvd/training.hpp"

using namespace pvd;
using namespace pvd::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;
std::vector<std::string> g_only;  // criterion names from argv; empty runs all

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion(const std::string& name, const std::function<Outcome()>& fn) {
  if (!g_only.empty() && std::find(g_only.begin(), g_only.end(), name) == g_only.end()) return;
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), since(t0));
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

bool same(const PointCloud& a, const PointCloud& b) {
  return a.rows() == b.rows() && (a.array() == b.array()).all();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

EpsPredictor predictor(const PVNet<float>& net) {
  return [&net](const PointCloud& x, int t) { return net.denoise(x, t); };
}

Outcome bayes() {
  const auto t0 = Clock::now();
  const BayesResult r = posterior_bayes_check(10, 1e-4, 0.2, 21, -2.0, 2.0);
  // t = 1: the posterior collapses onto x0.
  const NoiseSchedule s = NoiseSchedule::linear(10, 1e-4, 0.2);
  Rng rng(1);
  const PointCloud x0 = random_cloud(5, rng), x1 = random_cloud(5, rng);
  const Posterior p1 = posterior_params(x0, x1, 1, s);
  const double secs = since(t0);
  const double off = (p1.mean - x0).cwiseAbs().maxCoeff();
  const bool point_mass = off <= 1e-12 && p1.variance == 0.0;
  const bool ok = r.max_rel <= 1e-9 && point_mass && secs < 1.0;
  return {ok, fmt("max rel %.3g over %ld densities, t=1 mean off by %.2g with variance %.2g, %.3fs", r.max_rel,
                  r.evaluations, off, p1.variance, secs)};
}

Outcome moments() {
  const auto t0 = Clock::now();
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  PointCloud x0(2, 3);
  x0 << 1.0, -0.5, 0.25, 2.0, 0.0, -1.5;
  const auto res = marginal_moments(s, x0, 10000, {1, 50, 100}, 7);
  const double secs = since(t0);
  bool ok = secs < 10.0;
  std::string d;
  for (const auto& r : res) {
    ok = ok && r.max_mean_se <= 4.0 && r.max_var_rel <= 0.05;
    d += fmt("t=%d mean %.2f SE var %.2f%%; ", r.t, r.max_mean_se, 100.0 * r.max_var_rel);
  }
  return {ok, d + fmt("%.2fs", secs)};
}

Outcome loss_equivalence() {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int T = 2 + static_cast<int>(u(rng) * 200);
    const double b0 = 1e-5 + 1e-3 * u(rng);
    const double b1 = b0 + 0.3 * u(rng);
    const NoiseSchedule s = NoiseSchedule::linear(T, b0, b1);
    const int t = 1 + static_cast<int>(u(rng) * T);
    const int n = 1 + static_cast<int>(u(rng) * 40);
    const PointCloud x0 = random_cloud(n, rng), eps = random_cloud(n, rng), eps_hat = random_cloud(n, rng);
    const PointCloud xt = q_sample(x0, t, eps, s);
    const PointCloud mu_target = posterior_params(x0, xt, t, s).mean;
    const PointCloud mu_model = predict_mu_from_eps(xt, t, eps_hat, s);
    const double lhs = (mu_target - mu_model).squaredNorm();
    const double beta = s.beta(t);
    const double alpha = 1.0 - beta;
    const double rhs = beta * beta / (alpha * (1.0 - s.alpha_bar(t))) * (eps - eps_hat).squaredNorm();
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  return {worst <= 1e-10, fmt("max rel %.3g over 100 instances", worst)};
}

Outcome t1_exactness() {
  Rng rng(4);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const NoiseSchedule s = NoiseSchedule::linear(20 + k, 1e-4 * (1 + k), 0.05);
    const PointCloud x0 = random_cloud(16, rng), eps = random_cloud(16, rng);
    const PointCloud x1 = q_sample(x0, 1, eps, s);
    const PointCloud back = p_sample_step(x1, 1, eps, PointCloud::Zero(16, 3), s);
    worst = std::max(worst, (back - x0).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, fmt("max abs error %.3g over 50 clouds", worst)};
}

Outcome gradients() {
  const NetworkGradReport r = check_network_gradients(desk_preset(), 32, 200, 11);
  const bool ok = r.failures == 0 && r.seconds < 300.0;
  return {ok, fmt("%d/%d above 1e-4, max rel %.3g at %s, %.1fs", r.failures, r.checked, r.max_rel,
                  r.worst_param.c_str(), r.seconds)};
}

Outcome emd_oracle() {
  Rng rng(5);
  std::uniform_int_distribution<int> size(1, 6);
  int mismatches = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = size(rng);
    const PointCloud x = random_cloud(n, rng), y = random_cloud(n, rng);
    if (emd(x, y) != brute_force_emd(x, y)) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/200 pairs differ", mismatches)};
}

Outcome fps_oracle() {
  Rng rng(6);
  std::uniform_int_distribution<int> size(2, 64), coord(-4, 4);
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = size(rng);
    PointCloud pc(n, 3);
    for (Eigen::Index i = 0; i < pc.size(); ++i) pc.data()[i] = coord(rng);
    const int count = std::uniform_int_distribution<int>(1, n)(rng);
    if (farthest_point_sample(pc, count) != brute_force_fps(pc, count)) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/100 clouds differ", mismatches)};
}

// Shared desk-scale setup for the overfit experiments.
const NoiseSchedule kDeskSchedule = NoiseSchedule::linear(100, 1e-4, 0.1);
constexpr int kOverfitSteps = 400;
constexpr int kBatch = 4;
constexpr double kLearningRate = 1e-3;

std::vector<PointCloud> primitives() {
  const Primitive kinds[4] = {Primitive::Sphere, Primitive::Cube, Primitive::Cylinder, Primitive::Torus};
  std::vector<PointCloud> out;
  for (int i = 0; i < 8; ++i) out.push_back(normalize(synth_primitive(kinds[i % 4], 128, i)).cloud);
  return out;
}

double nearest_cd(const PVNet<float>& net, const std::vector<PointCloud>& train, int samples) {
  const EpsPredictor m = predictor(net);
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const PointCloud g = generate(m, 128, kDeskSchedule, 1000 + i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : train) best = std::min(best, chamfer(g, x));
    total += best;
  }
  return total / samples;
}

Outcome overfit_generation(const fs::path& ckpt_out) {
  const ArchConfig arch = desk_preset();
  const std::vector<PointCloud> train = primitives();
  PVNet<float> net(arch, init_parameters<float>(arch, 1));
  const double untrained = nearest_cd(net, train, 16);

  TrainConfig cfg;
  cfg.learning_rate = kLearningRate;
  cfg.batch_size = kBatch;
  AdamState state = AdamState::for_params(net.params());
  Rng rng(2);
  std::uniform_int_distribution<int> pick(0, 7);
  double first = 0.0, last = 0.0;
  for (int step = 1; step <= kOverfitSteps; ++step) {
    std::vector<PointCloud> batch;
    for (int j = 0; j < kBatch; ++j) batch.push_back(train[pick(rng)]);
    const double loss = train_step(net, state, batch, rng, kDeskSchedule, cfg).loss;
    if (step <= 20) first += loss / 20;
    if (step > kOverfitSteps - 20) last += loss / 20;
  }
  save_checkpoint(Checkpoint{arch, net.params(), kDeskSchedule, kOverfitSteps}, ckpt_out);

  const double trained = nearest_cd(net, train, 16);
  const double ratio = trained / untrained;
  return {ratio <= 0.2, fmt("CD %.4g vs untrained %.4g (ratio %.3g) after %d steps, loss %.3f -> %.3f", trained,
                            untrained, ratio, kOverfitSteps, first, last)};
}

Outcome completion(const fs::path& ckpt_out) {
  const ArchConfig arch = desk_preset();
  const PointCloud shape = normalize(synth_primitive(Primitive::Torus, 128, 21)).cloud;
  const PartialSplit split = make_partial(shape, Eigen::RowVector3d(0.0, 0.0, 1.0), 0.5);
  const PointCloud& z0 = split.task.z0;
  if (z0.rows() != 64 || split.task.n_free != 64) return {false, "partial split is not 64 + 64"};

  PVNet<float> net(arch, init_parameters<float>(arch, 1));
  TrainConfig cfg;
  cfg.learning_rate = kLearningRate;
  cfg.batch_size = kBatch;
  AdamState state = AdamState::for_params(net.params());
  Rng rng(3);
  const std::vector<CompletionPair> batch(kBatch, CompletionPair{z0, split.missing});
  for (int step = 1; step <= kOverfitSteps; ++step) conditional_train_step(net, state, batch, rng, kDeskSchedule, cfg);
  save_checkpoint(Checkpoint{arch, net.params(), kDeskSchedule, kOverfitSteps}, ckpt_out);

  const EpsPredictor m = predictor(net);
  std::vector<PointCloud> outs;
  bool fixed = true;
  double cd = 0.0;
  for (int seed = 0; seed < 8; ++seed) {
    outs.push_back(complete(m, split.task, kDeskSchedule, static_cast<std::uint64_t>(seed)));
    fixed = fixed && same(outs.back().topRows(64), z0);
    cd += chamfer(outs.back(), shape) / 8;
  }
  const double spread = tmd(outs, 64);

  Rng erng(9);
  const PointCloud la = latent_encode(outs[0], kDeskSchedule, standard_normal(128, erng));
  const PointCloud lb = latent_encode(outs[1], kDeskSchedule, standard_normal(128, erng));
  const bool ends = same(interpolate_complete(m, la, lb, 0.0, z0, kDeskSchedule, 77),
                         decode_latent(m, la, z0, kDeskSchedule, 77)) &&
                    same(interpolate_complete(m, la, lb, 1.0, z0, kDeskSchedule, 78),
                         decode_latent(m, lb, z0, kDeskSchedule, 78));

  return {fixed && spread > 0.0 && ends,
          fmt("fixed rows %s, TMD over 8 seeds %.4g, lambda endpoints %s, mean CD to truth %.4g",
              fixed ? "bit-exact" : "DIFFER", spread, ends ? "bit-exact" : "DIFFER", cd)};
}

Outcome one_nn_band() {
  const Primitive kinds[4] = {Primitive::Sphere, Primitive::Cube, Primitive::Cylinder, Primitive::Torus};
  auto draw = [&](std::uint64_t base) {
    std::vector<PointCloud> set;
    Rng rng(base);
    std::uniform_int_distribution<int> kind(0, 3);
    for (int i = 0; i < 100; ++i) set.push_back(synth_primitive(kinds[kind(rng)], 64, base + 1 + i));
    return set;
  };
  const std::vector<PointCloud> a = draw(100), b = draw(5000);
  const double iid = one_nn_accuracy(a, b, Distance::Chamfer);
  const double dup = one_nn_accuracy(a, a, Distance::Chamfer);
  return {iid >= 0.40 && iid <= 0.60 && dup == 0.0, fmt("i.i.d. %.3f, duplicated %.3f", iid, dup)};
}

Outcome determinism(const fs::path& dir, const fs::path& gen_ckpt, const fs::path& comp_ckpt) {
  setenv("PVD_THREADS", "1", 1);
  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "pvd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::dispatch(static_cast<int>(argv.size()), argv.data());
  };
  const fs::path data = dir / "data", partial = dir / "partial.xyz";
  const std::vector<PointCloud> shapes = primitives();
  fs::create_directories(data);
  for (int i = 0; i < 4; ++i) save_xyz(shapes[static_cast<std::size_t>(i)], data / fmt("shape_%d.xyz", i));
  save_xyz(make_partial(shapes[3], Eigen::RowVector3d(0.0, 0.0, 1.0), 0.5).task.z0, partial);

  std::vector<std::string> mismatched;
  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    if (run({"generate", "--ckpt", gen_ckpt.string(), "--n", "128", "--samples", "2", "--seed", "4", "--out",
             (dir / ("gen_" + t)).string()}) != 0 ||
        run({"complete", "--ckpt", comp_ckpt.string(), "--partial", partial.string(), "--n-free", "64", "--samples",
             "2", "--seed", "4", "--out", (dir / ("comp_" + t)).string()}) != 0 ||
        run({"train", "--data", data.string(), "--out", (dir / ("train_" + t + ".ckpt")).string(), "--preset", "desk",
             "--T", "100", "--beta-end", "0.1", "--steps", "3", "--batch-size", "2", "--seed", "8"}) != 0)
      return {false, "a pvd run exited with an error"};
  }
  for (const char* f : {"sample_000.xyz", "sample_001.xyz"})
    if (slurp(dir / "gen_a" / f) != slurp(dir / "gen_b" / f)) mismatched.push_back(std::string("generate/") + f);
  for (const char* f : {"completion_000.xyz", "completion_001.xyz"})
    if (slurp(dir / "comp_a" / f) != slurp(dir / "comp_b" / f)) mismatched.push_back(std::string("complete/") + f);
  if (slurp(dir / "train_a.ckpt") != slurp(dir / "train_b.ckpt")) mismatched.push_back("train checkpoint");
  if (slurp(dir / "gen_a" / "sample_000.xyz") == slurp(dir / "gen_a" / "sample_001.xyz"))
    mismatched.push_back("distinct samples are identical");
  std::string d = "generate, complete and train outputs byte-identical across reruns";
  if (!mismatched.empty()) {
    d = "differ:";
    for (const auto& m : mismatched) d += " " + m;
  }
  return {mismatched.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  g_only.assign(argv + 1, argv + argc);
  const fs::path work = fs::temp_directory_path() / fmt("pvd_acceptance_%d", static_cast<int>(getpid()));
  fs::create_directories(work);

  criterion("posterior-bayes", bayes);
  criterion("marginal-moments", moments);
  criterion("loss-equivalence", loss_equivalence);
  criterion("t1-exactness", t1_exactness);
  criterion("gradient-check", gradients);
  criterion("emd-oracle", emd_oracle);
  criterion("fps-oracle", fps_oracle);
  criterion("overfit-generation", [&] { return overfit_generation(work / "generator.ckpt"); });
  criterion("completion", [&] { return completion(work / "completion.ckpt"); });
  criterion("one-nn-band", one_nn_band);
  criterion("determinism", [&] {
    if (!fs::exists(work / "generator.ckpt") || !fs::exists(work / "completion.ckpt"))
      return Outcome{false, "overfit checkpoints missing"};
    return determinism(work, work / "generator.ckpt", work / "completion.ckpt");
  });

  std::error_code ec;
  fs::remove_all(work, ec);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
