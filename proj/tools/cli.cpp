#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pvd/checkpoint.hpp"
#include "pvd/completion.hpp"
#include "pvd/config.hpp"
#include "pvd/diffusion.hpp"
#include "pvd/errors.hpp"
#include "pvd/io.hpp"
#include "pvd/metrics.hpp"
#include "pvd/training.hpp"

namespace pvd::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

int thread_cap() {
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("PVD_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw DomainError("PVD_THREADS must be a positive integer");
  return static_cast<int>(v);
}

namespace {

// Runs fn(i) for i in [0, count) on up to thread_cap() threads. Work is
// independent per index; the first failure by index is rethrown.
template <typename Fn>
void parallel_for(int count, Fn fn) {
  const int workers = std::min(thread_cap(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Run {
  std::string subcommand;
  std::string command_line;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  Clock::time_point start = Clock::now();
};

void write_manifest(const fs::path& path, const Run& run) {
  json m;
  m["command_line"] = run.command_line;
  m["subcommand"] = run.subcommand;
  m["config"] = run.config;
  m["config_hash"] = config_hash(run.config);
  m["seed"] = run.seed;
  m["code_version"] = PVD_VERSION;
  m["wall_time_s"] = std::chrono::duration<double>(Clock::now() - run.start).count();
  m["outputs"] = run.outputs;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << m.dump(2) << "\n";
}

fs::path beside(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension();
  p += suffix;
  return p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

std::string numbered(const std::string& stem, int i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03d", i);
  return stem + buf + "." + ext;
}

Checkpoint open_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

EpsPredictor predictor(const PVNet<float>& net) {
  return [&net](const PointCloud& x, int t) { return net.denoise(x, t); };
}

std::vector<PointCloud> load_dir(const fs::path& dir) {
  std::vector<PointCloud> out;
  for (const auto& f : list_clouds(dir)) out.push_back(load_cloud(f));
  if (out.empty()) throw DataError("no .xyz or .pvpc files in " + dir.string());
  return out;
}

void check_format(const std::string& fmt) {
  if (fmt != "xyz" && fmt != "pvpc") throw DomainError("--format must be xyz or pvpc");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, init;
  std::optional<int> steps, batch_size, points, checkpoint_every, log_every, T;
  std::optional<double> lr, grad_clip, dropout, beta_start, beta_end, warmup_frac, keep_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset, schedule;
  bool normalize = false;
  bool completion = false;
};

int run_train(const TrainArgs& a, Run& run) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (a.steps) cfg.train.total_steps = *a.steps;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.lr) cfg.train.learning_rate = *a.lr;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.grad_clip) cfg.train.grad_clip = *a.grad_clip;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.log_every) cfg.log_every = *a.log_every;
  if (a.points) cfg.data.points = *a.points;
  if (a.normalize) cfg.data.normalize = true;
  if (a.preset) {
    cfg.model.preset = *a.preset;
    cfg.model.arch = nullptr;
  }
  if (a.dropout) cfg.model.dropout = *a.dropout;
  if (a.schedule) cfg.schedule.kind = schedule_kind_from_string(*a.schedule);
  if (a.T) cfg.schedule.steps = *a.T;
  if (a.beta_start) cfg.schedule.beta_start = *a.beta_start;
  if (a.beta_end) cfg.schedule.beta_end = *a.beta_end;
  if (a.warmup_frac) cfg.schedule.warmup_frac = *a.warmup_frac;
  if (a.keep_fraction) cfg.completion.keep_fraction = *a.keep_fraction;
  cfg.train.validate();
  if (cfg.checkpoint_every < 0 || cfg.log_every < 1) throw DomainError("checkpoint_every >= 0 and log_every >= 1 required");

  const NoiseSchedule sched = cfg.schedule.build();
  ArchConfig arch = cfg.model.build();
  const Dataset ds = load_dataset(a.data, cfg.data.points, cfg.train.seed, cfg.data.normalize);

  std::uint64_t step0 = 0;
  ParamStore<float> params;
  if (!a.init.empty()) {
    Checkpoint init = open_checkpoint(a.init);
    if (arch_to_json(init.arch) != arch_to_json(arch)) throw DataError("--init checkpoint architecture differs from config");
    params = std::move(init.params);
    step0 = init.step;
  } else {
    params = init_parameters<float>(arch, cfg.train.seed);
  }
  PVNet<float> net(arch, std::move(params));

  std::vector<CompletionPair> pairs;
  const Eigen::RowVector3d normal(cfg.completion.normal[0], cfg.completion.normal[1], cfg.completion.normal[2]);
  for (const auto& shape : ds.shapes) {
    if (a.completion) {
      auto split = make_partial(shape, normal, cfg.completion.keep_fraction);
      pairs.push_back({std::move(split.task.z0), std::move(split.missing)});
    } else {
      pairs.push_back({PointCloud(0, 3), shape});
    }
  }

  json eff = cfg.to_json();
  eff["data"]["dir"] = a.data;
  eff["completion"]["enabled"] = a.completion;
  if (!a.init.empty()) eff["init"] = a.init;
  run.config = eff;
  run.seed = cfg.train.seed;

  const fs::path out = a.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  const fs::path csv_path = beside(out, ".loss.csv");
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  csv << "step,loss,wall_time\n";

  AdamState state = AdamState::for_params(net.params());
  // Batch indices, then per element t, eps and dropout masks, all from one stream.
  Rng rng(cfg.train.seed + 1);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  const auto t0 = Clock::now();
  double window = 0.0;
  for (int s = 1; s <= cfg.train.total_steps; ++s) {
    std::vector<CompletionPair> batch;
    for (int b = 0; b < cfg.train.batch_size; ++b) batch.push_back(pairs[pick(rng)]);
    const StepResult r = conditional_train_step(net, state, batch, rng, sched, cfg.train);
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    char line[96];
    std::snprintf(line, sizeof line, "%d,%.9g,%.3f\n", s, r.loss, wall);
    csv << line;
    window += r.loss;
    if (s % cfg.log_every == 0) {
      std::fprintf(stderr, "step %d  loss %.5f  %.1fs\n", s, window / cfg.log_every, wall);
      window = 0.0;
      csv.flush();
    }
    if (cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0 && s != cfg.train.total_steps) {
      char tag[32];
      std::snprintf(tag, sizeof tag, ".step%06d", s);
      fs::path p = beside(out, tag);
      p += out.extension();
      save_checkpoint({arch, net.params(), sched, step0 + static_cast<std::uint64_t>(s)}, p);
      run.outputs.push_back(p.string());
    }
  }
  csv.close();
  save_checkpoint({arch, net.params(), sched, step0 + static_cast<std::uint64_t>(cfg.train.total_steps)}, out);
  run.outputs.push_back(out.string());
  run.outputs.push_back(csv_path.string());
  write_manifest(beside(out, ".manifest.json"), run);
  return kOk;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string ckpt, out, partial, format = "xyz";
  int n = 128;
  int n_free = 0;
  int samples = 1;
  std::uint64_t seed = 0;
  bool final_noise = false;
};

int run_generate(const SampleArgs& a, Run& run, bool completion) {
  check_format(a.format);
  if (a.samples < 1) throw DomainError("--samples must be >= 1");
  const Checkpoint ck = open_checkpoint(a.ckpt);
  const PVNet<float> net(ck.arch, ck.params);
  const EpsPredictor model = predictor(net);
  SamplerOptions opts;
  opts.final_noise = a.final_noise;
  CompletionTask task;
  if (completion) {
    task.z0 = load_cloud(a.partial);
    task.n_free = a.n_free;
    task.validate();
  } else if (a.n < 1) {
    throw DomainError("--n must be >= 1");
  }
  ensure_dir(a.out);
  const std::uint64_t k = static_cast<std::uint64_t>(a.samples);
  std::vector<PointCloud> results(static_cast<std::size_t>(a.samples));
  parallel_for(a.samples, [&](int i) {
    const std::uint64_t seed = k * a.seed + static_cast<std::uint64_t>(i);
    results[i] = completion ? complete(model, task, ck.schedule, seed, opts)
                            : generate(model, a.n, ck.schedule, seed, opts);
  });
  for (int i = 0; i < a.samples; ++i) {
    const fs::path p = fs::path(a.out) / numbered(completion ? "completion" : "sample", i, a.format);
    save_cloud(results[i], p);
    run.outputs.push_back(p.string());
  }
  run.seed = a.seed;
  run.config = {{"ckpt", a.ckpt}, {"samples", a.samples}, {"seed", a.seed}, {"seed_rule", "samples*seed+i"},
                {"final_noise", a.final_noise}, {"format", a.format}};
  if (completion) {
    run.config["partial"] = a.partial;
    run.config["n_free"] = a.n_free;
  } else {
    run.config["n"] = a.n;
  }
  write_manifest(fs::path(a.out) / "manifest.json", run);
  return kOk;
}

struct EncodeArgs {
  std::string ckpt, shape, out;
  std::uint64_t seed = 0;
};

int run_encode(const EncodeArgs& a, Run& run) {
  const Checkpoint ck = open_checkpoint(a.ckpt);
  const PointCloud x0 = load_cloud(a.shape);
  Rng rng(a.seed);
  const PointCloud eps = standard_normal(x0.rows(), rng);
  const fs::path out = a.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  save_cloud(latent_encode(x0, ck.schedule, eps), out);
  run.seed = a.seed;
  run.outputs = {out.string()};
  run.config = {{"ckpt", a.ckpt}, {"shape", a.shape}, {"seed", a.seed}};
  write_manifest(beside(out, ".manifest.json"), run);
  return kOk;
}

struct InterpArgs {
  std::string ckpt, partial, latent_a, latent_b, out, format = "xyz";
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t seed = 0;
  bool final_noise = false;
};

int run_interpolate(const InterpArgs& a, Run& run) {
  check_format(a.format);
  const Checkpoint ck = open_checkpoint(a.ckpt);
  const PVNet<float> net(ck.arch, ck.params);
  const EpsPredictor model = predictor(net);
  const PointCloud z0 = load_cloud(a.partial);
  const PointCloud la = load_cloud(a.latent_a);
  const PointCloud lb = load_cloud(a.latent_b);
  if (la.rows() != lb.rows()) throw DataError("latents differ in point count");
  if (la.rows() <= z0.rows()) throw DataError("latent has no rows beyond the partial shape");
  SamplerOptions opts;
  opts.final_noise = a.final_noise;
  ensure_dir(a.out);
  const int count = static_cast<int>(a.lambdas.size());
  std::vector<PointCloud> results(a.lambdas.size());
  parallel_for(count, [&](int i) {
    results[i] = interpolate_complete(model, la, lb, a.lambdas[i], z0, ck.schedule, a.seed, opts);
  });
  for (int i = 0; i < count; ++i) {
    const fs::path p = fs::path(a.out) / numbered("interp", i, a.format);
    save_cloud(results[i], p);
    run.outputs.push_back(p.string());
  }
  run.seed = a.seed;
  run.config = {{"ckpt", a.ckpt},         {"partial", a.partial}, {"latent_a", a.latent_a},
                {"latent_b", a.latent_b}, {"lambdas", a.lambdas}, {"seed", a.seed},
                {"final_noise", a.final_noise}};
  write_manifest(fs::path(a.out) / "manifest.json", run);
  return kOk;
}

struct VizArgs {
  std::string ckpt, out, partial, format = "xyz";
  int n = 128;
  int n_free = 0;
  int every = 0;
  std::uint64_t seed = 0;
  bool final_noise = false;
};

int run_diffuse_viz(const VizArgs& a, Run& run) {
  check_format(a.format);
  if (a.every < 1) throw DomainError("--every must be >= 1");
  const Checkpoint ck = open_checkpoint(a.ckpt);
  const PVNet<float> net(ck.arch, ck.params);
  const EpsPredictor model = predictor(net);
  SamplerOptions opts;
  opts.final_noise = a.final_noise;
  ensure_dir(a.out);
  const TrajectoryObserver snap = [&](int t, const PointCloud& x) {
    if (t % a.every != 0) return;
    char name[32];
    std::snprintf(name, sizeof name, "step_%04d.%s", t, a.format.c_str());
    const fs::path p = fs::path(a.out) / name;
    save_cloud(x, p);
    run.outputs.push_back(p.string());
  };
  if (!a.partial.empty()) {
    CompletionTask task{load_cloud(a.partial), a.n_free};
    task.validate();
    complete(model, task, ck.schedule, a.seed, opts, snap);
  } else {
    if (a.n < 1) throw DomainError("--n must be >= 1");
    generate(model, a.n, ck.schedule, a.seed, opts, snap);
  }
  run.seed = a.seed;
  run.config = {{"ckpt", a.ckpt}, {"every", a.every}, {"seed", a.seed}, {"final_noise", a.final_noise}};
  if (a.partial.empty()) {
    run.config["n"] = a.n;
  } else {
    run.config["partial"] = a.partial;
    run.config["n_free"] = a.n_free;
  }
  write_manifest(fs::path(a.out) / "manifest.json", run);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gen, ref, metric, distance = "cd", out;
};

void emit_report(const MetricReport& report, const std::string& out, Run& run) {
  const std::string text = report.to_json().dump(2);
  std::cout << text << "\n";
  if (out.empty()) return;
  const fs::path p = out;
  if (p.has_parent_path()) ensure_dir(p.parent_path());
  std::ofstream f(p);
  if (!f) throw DataError("cannot write " + p.string());
  f << text << "\n";
  run.outputs = {p.string()};
  write_manifest(beside(p, ".manifest.json"), run);
}

void require_equal_counts(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b) {
  for (const auto* set : {&a, &b})
    for (const auto& c : *set)
      if (c.rows() != a.front().rows()) throw DataError("EMD needs equal point counts across all clouds");
}

int run_eval(const EvalArgs& a, Run& run) {
  const Distance d = distance_from_string(a.distance);
  const auto gen = load_dir(a.gen);
  const auto ref = load_dir(a.ref);
  if (d == Distance::EMD) require_equal_counts(gen, ref);
  MetricReport r;
  r.metric = a.metric;
  r.distance = to_string(d);
  r.protocol = distance_protocol(d);
  r.details = {{"gen_size", gen.size()}, {"ref_size", ref.size()}, {"scale_factor", 1}};
  if (a.metric == "1nn") {
    r.value = one_nn_accuracy(gen, ref, d);
    r.details["tie_break"] = "self excluded; ties to lowest merged index (generated set first)";
  } else if (a.metric == "cov") {
    r.value = coverage(gen, ref, d);
    r.details["tie_break"] = "nearest reference, ties to lowest index";
  } else if (a.metric == "mmd") {
    r.value = mmd(gen, ref, d);
  } else {
    throw DomainError("--metric must be 1nn, cov or mmd");
  }
  run.config = {{"gen", a.gen}, {"ref", a.ref}, {"metric", a.metric}, {"distance", r.distance}};
  emit_report(r, a.out, run);
  return kOk;
}

struct EvalCompletionArgs {
  std::string completions, ref, metric, distance = "cd", out;
  int fixed = 0;
  std::uint64_t seed = 0;
};

int run_eval_completion(const EvalCompletionArgs& a, Run& run) {
  const auto comps = load_dir(a.completions);
  MetricReport r;
  r.metric = a.metric;
  r.details = {{"completions", comps.size()}, {"scale_factor", 1}};
  if (a.metric == "tmd") {
    r.distance = "cd";
    r.protocol = "TMD = sum over unordered pairs of " + distance_protocol(Distance::Chamfer);
    r.value = tmd(comps, a.fixed > 0 ? a.fixed : -1);
    r.details["free_rows_from"] = a.fixed;
  } else if (a.metric == "mmd") {
    if (a.ref.empty()) throw DomainError("--ref is required for mmd");
    const Distance d = distance_from_string(a.distance);
    PointCloud ref = load_cloud(a.ref);
    const Eigen::Index n = comps.front().rows();
    for (const auto& c : comps)
      if (c.rows() != n) throw DataError("completions differ in point count");
    if (ref.rows() > n) {
      Rng rng(a.seed);
      ref = resample(ref, static_cast<int>(n), rng);
    } else if (ref.rows() < n && d == Distance::EMD) {
      throw DataError("reference has fewer points than the completions");
    }
    r.distance = to_string(d);
    r.protocol = distance_protocol(d) + "; reference resampled uniformly without replacement to the completion size";
    r.value = mmd(comps, {ref}, d);
  } else {
    throw DomainError("--metric must be tmd or mmd");
  }
  run.seed = a.seed;
  run.config = {{"completions", a.completions}, {"ref", a.ref}, {"metric", a.metric},
                {"distance", r.distance},       {"fixed", a.fixed}, {"seed", a.seed}};
  emit_report(r, a.out, run);
  return kOk;
}

struct SynthArgs {
  std::string kind = "sphere", out, format = "xyz";
  int n = 128;
  int count = 1;
  std::uint64_t seed = 0;
  std::optional<double> keep_fraction;
  std::vector<double> normal{0.0, 0.0, 1.0};
};

int run_synth(const SynthArgs& a, Run& run) {
  check_format(a.format);
  if (a.count < 1) throw DomainError("--count must be >= 1");
  if (a.normal.size() != 3) throw DomainError("--normal takes three numbers");
  std::vector<Primitive> kinds;
  if (a.kind == "mixed") {
    kinds = {Primitive::Sphere, Primitive::Cube, Primitive::Cylinder, Primitive::Torus};
  } else {
    kinds = {primitive_from_string(a.kind)};
  }
  ensure_dir(a.out);
  const fs::path out = a.out;
  if (a.keep_fraction) {
    ensure_dir(out / "partial");
    ensure_dir(out / "missing");
  }
  for (int i = 0; i < a.count; ++i) {
    const Primitive kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    const PointCloud pc = synth_primitive(kind, a.n, a.seed + static_cast<std::uint64_t>(i));
    const std::string name = numbered(to_string(kind), i, a.format);
    save_cloud(pc, out / name);
    run.outputs.push_back((out / name).string());
    if (a.keep_fraction) {
      const auto split = make_partial(pc, Eigen::RowVector3d(a.normal[0], a.normal[1], a.normal[2]), *a.keep_fraction);
      save_cloud(split.task.z0, out / "partial" / name);
      save_cloud(split.missing, out / "missing" / name);
      run.outputs.push_back((out / "partial" / name).string());
      run.outputs.push_back((out / "missing" / name).string());
    }
  }
  run.seed = a.seed;
  run.config = {{"kind", a.kind}, {"n", a.n}, {"count", a.count}, {"seed", a.seed}, {"seed_rule", "seed+i"},
                {"format", a.format}};
  if (a.keep_fraction) {
    run.config["keep_fraction"] = *a.keep_fraction;
    run.config["normal"] = a.normal;
  }
  write_manifest(out / "manifest.json", run);
  return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "pvd: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Point-voxel diffusion for 3D point clouds"};
  app.name("pvd");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", PVD_VERSION);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a denoiser on a directory of point clouds");
  train->add_option("--config", ta.config, "JSON config file")->check(CLI::ExistingFile);
  train->add_option("--data", ta.data, "Directory of .xyz/.pvpc shapes")->required();
  train->add_option("--out", ta.out, "Output checkpoint path")->required();
  train->add_option("--init", ta.init, "Start from this checkpoint's parameters");
  train->add_option("--steps", ta.steps);
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--lr", ta.lr);
  train->add_option("--seed", ta.seed);
  train->add_option("--grad-clip", ta.grad_clip, "Global-norm clip, 0 disables");
  train->add_option("--checkpoint-every", ta.checkpoint_every);
  train->add_option("--log-every", ta.log_every);
  train->add_option("--points", ta.points, "Resample every shape to this many points");
  train->add_flag("--normalize", ta.normalize, "Center and scale shapes into the unit ball");
  train->add_option("--preset", ta.preset, "full, desk or tiny");
  train->add_option("--dropout", ta.dropout);
  train->add_option("--schedule", ta.schedule, "linear or warmup");
  train->add_option("--T", ta.T, "Diffusion steps");
  train->add_option("--beta-start", ta.beta_start);
  train->add_option("--beta-end", ta.beta_end);
  train->add_option("--warmup-frac", ta.warmup_frac);
  train->add_flag("--completion", ta.completion, "Train for shape completion on half-space crops");
  train->add_option("--keep-fraction", ta.keep_fraction, "Fraction of points kept as the partial shape");

  SampleArgs ga;
  auto* gen = app.add_subcommand("generate", "Sample shapes from a checkpoint");
  gen->add_option("--ckpt", ga.ckpt)->required();
  gen->add_option("--n", ga.n, "Points per shape")->capture_default_str();
  gen->add_option("--samples", ga.samples)->capture_default_str();
  gen->add_option("--seed", ga.seed)->capture_default_str();
  gen->add_option("--out", ga.out, "Output directory")->required();
  gen->add_flag("--final-noise", ga.final_noise, "Add noise on the last step too");
  gen->add_option("--format", ga.format, "xyz or pvpc")->capture_default_str();

  SampleArgs ca;
  auto* comp = app.add_subcommand("complete", "Complete a partial shape");
  comp->add_option("--ckpt", ca.ckpt)->required();
  comp->add_option("--partial", ca.partial, "Fixed points")->required();
  comp->add_option("--n-free", ca.n_free, "Points to synthesize")->required();
  comp->add_option("--samples", ca.samples)->capture_default_str();
  comp->add_option("--seed", ca.seed)->capture_default_str();
  comp->add_option("--out", ca.out, "Output directory")->required();
  comp->add_flag("--final-noise", ca.final_noise);
  comp->add_option("--format", ca.format)->capture_default_str();

  EncodeArgs ea;
  auto* enc = app.add_subcommand("encode", "Noise a shape to the time-T latent");
  enc->add_option("--ckpt", ea.ckpt)->required();
  enc->add_option("--shape", ea.shape)->required();
  enc->add_option("--seed", ea.seed)->capture_default_str();
  enc->add_option("--out", ea.out, "Output latent file")->required();

  InterpArgs ia;
  auto* interp = app.add_subcommand("interpolate", "Decode interpolated latents with fixed partial points");
  interp->add_option("--ckpt", ia.ckpt)->required();
  interp->add_option("--partial", ia.partial)->required();
  interp->add_option("--latent-a", ia.latent_a)->required();
  interp->add_option("--latent-b", ia.latent_b)->required();
  interp->add_option("--lambda", ia.lambdas, "Mixing weights in [0, 1]")->delimiter(',')->capture_default_str();
  interp->add_option("--seed", ia.seed)->capture_default_str();
  interp->add_option("--out", ia.out, "Output directory")->required();
  interp->add_flag("--final-noise", ia.final_noise);
  interp->add_option("--format", ia.format)->capture_default_str();

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Generation metrics between two directories");
  ev->add_option("--gen", va.gen)->required();
  ev->add_option("--ref", va.ref)->required();
  ev->add_option("--metric", va.metric, "1nn, cov or mmd")->required();
  ev->add_option("--distance", va.distance, "cd or emd")->capture_default_str();
  ev->add_option("--out", va.out, "Also write the report here");

  EvalCompletionArgs vc;
  auto* evc = app.add_subcommand("eval-completion", "Completion metrics");
  evc->add_option("--completions", vc.completions)->required();
  evc->add_option("--ref", vc.ref, "Ground-truth shape (mmd)");
  evc->add_option("--metric", vc.metric, "tmd or mmd")->required();
  evc->add_option("--distance", vc.distance, "cd or emd (mmd only)")->capture_default_str();
  evc->add_option("--fixed", vc.fixed, "Leading fixed rows excluded from tmd");
  evc->add_option("--seed", vc.seed, "Reference resampling seed");
  evc->add_option("--out", vc.out);

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Write synthetic primitive shapes");
  syn->add_option("--kind", sa.kind, "sphere, cube, cylinder, torus or mixed")->capture_default_str();
  syn->add_option("--n", sa.n)->capture_default_str();
  syn->add_option("--count", sa.count)->capture_default_str();
  syn->add_option("--seed", sa.seed, "Shape i uses seed + i")->capture_default_str();
  syn->add_option("--out", sa.out)->required();
  syn->add_option("--format", sa.format)->capture_default_str();
  syn->add_option("--keep-fraction", sa.keep_fraction, "Also write partial/ and missing/ crops");
  syn->add_option("--normal", sa.normal, "Crop plane normal")->delimiter(',')->expected(3);

  VizArgs za;
  auto* viz = app.add_subcommand("diffuse-viz", "Write reverse-process snapshots");
  viz->add_option("--ckpt", za.ckpt)->required();
  viz->add_option("--n", za.n)->capture_default_str();
  viz->add_option("--seed", za.seed)->capture_default_str();
  viz->add_option("--every", za.every, "Save x_t when t is a multiple")->required();
  viz->add_option("--out", za.out)->required();
  viz->add_option("--partial", za.partial, "Visualize a completion instead");
  viz->add_option("--n-free", za.n_free);
  viz->add_flag("--final-noise", za.final_noise);
  viz->add_option("--format", za.format)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  Run run;
  std::ostringstream cmd;
  for (int i = 0; i < argc; ++i) cmd << (i ? " " : "") << argv[i];
  run.command_line = cmd.str();

  try {
    thread_cap();
    if (*train) return run.subcommand = "train", run_train(ta, run);
    if (*gen) return run.subcommand = "generate", run_generate(ga, run, false);
    if (*comp) return run.subcommand = "complete", run_generate(ca, run, true);
    if (*enc) return run.subcommand = "encode", run_encode(ea, run);
    if (*interp) return run.subcommand = "interpolate", run_interpolate(ia, run);
    if (*ev) return run.subcommand = "eval", run_eval(va, run);
    if (*evc) return run.subcommand = "eval-completion", run_eval_completion(vc, run);
    if (*syn) return run.subcommand = "synth", run_synth(sa, run);
    if (*viz) return run.subcommand = "diffuse-viz", run_diffuse_viz(za, run);
  } catch (const NumericalError& e) {
    return report("numerical failure", e, kNumerical);
  } catch (const DataError& e) {
    return report("data error", e, kData);
  } catch (const DomainError& e) {
    return report("invalid argument", e, kUsage);
  } catch (const ShapeError& e) {
    return report("shape mismatch", e, kData);
  } catch (const fs::filesystem_error& e) {
    return report("filesystem", e, kData);
  } catch (const std::exception& e) {
    return report("error", e, kData);
  }
  return kUsage;
}

}  // namespace pvd::cli
