#include "pvd/config.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "pvd/errors.hpp"

namespace pvd {

using nlohmann::json;

json arch_to_json(const ArchConfig& arch) {
  json j;
  j["name"] = arch.name;
  j["time_dim"] = arch.time_dim;
  j["groups"] = arch.groups;
  j["dropout"] = arch.dropout;
  j["sa"] = json::array();
  for (const auto& s : arch.sa) {
    j["sa"].push_back({{"blocks", s.blocks},
                       {"out_channels", s.out_channels},
                       {"resolution", s.resolution},
                       {"attention", s.attention},
                       {"centers", s.centers},
                       {"radius", s.radius},
                       {"neighbors", s.neighbors}});
  }
  j["fp"] = json::array();
  for (const auto& f : arch.fp) {
    j["fp"].push_back({{"blocks", f.blocks},
                       {"out_channels", f.out_channels},
                       {"resolution", f.resolution},
                       {"attention", f.attention}});
  }
  return j;
}

ArchConfig arch_from_json(const json& j) {
  try {
    ArchConfig a;
    a.name = j.at("name").get<std::string>();
    a.time_dim = j.at("time_dim").get<int>();
    a.groups = j.at("groups").get<int>();
    a.dropout = j.at("dropout").get<double>();
    for (const auto& s : j.at("sa")) {
      a.sa.push_back({s.at("blocks").get<int>(), s.at("out_channels").get<int>(), s.at("resolution").get<int>(),
                      s.at("attention").get<bool>(), s.at("centers").get<int>(), s.at("radius").get<double>(),
                      s.at("neighbors").get<int>()});
    }
    for (const auto& f : j.at("fp")) {
      a.fp.push_back({f.at("blocks").get<int>(), f.at("out_channels").get<int>(), f.at("resolution").get<int>(),
                      f.at("attention").get<bool>()});
    }
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw DomainError(std::string("architecture descriptor: ") + e.what());
  }
}

NoiseSchedule ScheduleConfig::build() const {
  if (kind == ScheduleKind::Warmup) return NoiseSchedule::warmup(steps, beta_start, beta_end, warmup_frac);
  return NoiseSchedule::linear(steps, beta_start, beta_end);
}

ArchConfig ModelConfig::build() const {
  ArchConfig a = arch.is_null() ? preset_by_name(preset) : arch_from_json(arch);
  a.dropout = dropout;
  a.validate();
  return a;
}

json RunConfig::to_json() const {
  json j;
  j["schedule"] = {{"kind", to_string(schedule.kind)},
                   {"T", schedule.steps},
                   {"beta_start", schedule.beta_start},
                   {"beta_end", schedule.beta_end},
                   {"warmup_frac", schedule.warmup_frac}};
  j["model"] = {{"preset", model.preset}, {"dropout", model.dropout}};
  if (!model.arch.is_null()) j["model"]["arch"] = model.arch;
  j["train"] = {{"lr", train.learning_rate},   {"batch_size", train.batch_size}, {"steps", train.total_steps},
                {"seed", train.seed},          {"beta1", train.beta1},           {"beta2", train.beta2},
                {"eps", train.adam_eps},       {"grad_clip", train.grad_clip},   {"checkpoint_every", checkpoint_every},
                {"log_every", log_every}};
  j["data"] = {{"points", data.points}, {"normalize", data.normalize}};
  j["completion"] = {{"keep_fraction", completion.keep_fraction}, {"normal", completion.normal}};
  j["sampler"] = {{"final_noise", final_noise}};
  return j;
}

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw DomainError(std::string("config: '") + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw DomainError(std::string("config: unknown key '") + section + "." + k + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::merge(const json& j) {
  try {
    check_keys(j, "<root>", {"schedule", "model", "train", "data", "completion", "sampler"});
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      check_keys(s, "schedule", {"kind", "T", "beta_start", "beta_end", "warmup_frac"});
      if (s.contains("kind")) schedule.kind = schedule_kind_from_string(s["kind"].get<std::string>());
      take(s, "T", schedule.steps);
      take(s, "beta_start", schedule.beta_start);
      take(s, "beta_end", schedule.beta_end);
      take(s, "warmup_frac", schedule.warmup_frac);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      check_keys(m, "model", {"preset", "dropout", "arch"});
      take(m, "preset", model.preset);
      take(m, "dropout", model.dropout);
      if (m.contains("arch")) model.arch = m["arch"];
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, "train", {"lr", "batch_size", "steps", "seed", "beta1", "beta2", "eps", "grad_clip",
                              "checkpoint_every", "log_every"});
      take(t, "lr", train.learning_rate);
      take(t, "batch_size", train.batch_size);
      take(t, "steps", train.total_steps);
      take(t, "seed", train.seed);
      take(t, "beta1", train.beta1);
      take(t, "beta2", train.beta2);
      take(t, "eps", train.adam_eps);
      take(t, "grad_clip", train.grad_clip);
      take(t, "checkpoint_every", checkpoint_every);
      take(t, "log_every", log_every);
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      check_keys(d, "data", {"points", "normalize"});
      take(d, "points", data.points);
      take(d, "normalize", data.normalize);
    }
    if (j.contains("completion")) {
      const auto& c = j["completion"];
      check_keys(c, "completion", {"keep_fraction", "normal"});
      take(c, "keep_fraction", completion.keep_fraction);
      take(c, "normal", completion.normal);
    }
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      check_keys(s, "sampler", {"final_noise"});
      take(s, "final_noise", final_noise);
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  RunConfig cfg;
  cfg.merge(j);
  return cfg;
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

}  // namespace pvd
