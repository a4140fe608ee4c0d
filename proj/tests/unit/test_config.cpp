#include <doctest.h>

#include <fstream>

#include "pvd/config.hpp"
#include "pvd/errors.hpp"
#include "tmpdir.hpp"

using namespace pvd;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("architecture descriptor round trip") {
    for (const auto& name : {"full", "desk", "tiny"}) {
      const ArchConfig a = preset_by_name(name);
      const ArchConfig b = arch_from_json(arch_to_json(a));
      CHECK(arch_to_json(b) == arch_to_json(a));
      CHECK(describe_parameters(b).size() == describe_parameters(a).size());
    }
    json bad = arch_to_json(tiny_preset());
    bad["sa"][0].erase("radius");
    CHECK_THROWS_AS(arch_from_json(bad), DomainError);
  }

  TEST_CASE("merge overlays only the given keys") {
    RunConfig c;
    c.merge(json::parse(R"({"schedule": {"T": 100, "beta_end": 0.1}, "train": {"lr": 1e-3}, "model": {"preset": "tiny"}})"));
    CHECK(c.schedule.steps == 100);
    CHECK(c.schedule.beta_end == 0.1);
    CHECK(c.schedule.beta_start == 1e-4);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.batch_size == 8);
    CHECK(c.model.build().name == "tiny");
    CHECK(c.schedule.build().steps() == 100);
    CHECK_THROWS_AS(c.merge(json::parse(R"({"schedule": {"steps": 5}})")), DomainError);
    CHECK_THROWS_AS(c.merge(json::parse(R"({"optimizer": {}})")), DomainError);
    CHECK_THROWS_AS(c.merge(json::parse(R"({"train": {"lr": "fast"}})")), DomainError);

    RunConfig d;
    d.merge(c.to_json());
    CHECK(d.to_json() == c.to_json());
    CHECK(config_hash(d.to_json()) == config_hash(c.to_json()));
    CHECK(config_hash(RunConfig{}.to_json()) != config_hash(c.to_json()));
  }

  TEST_CASE("files") {
    TempDir t;
    std::ofstream(t / "c.json") << R"({"schedule": {"kind": "warmup", "warmup_frac": 0.5}})";
    const RunConfig c = load_config(t / "c.json");
    CHECK(c.schedule.kind == ScheduleKind::Warmup);
    std::ofstream(t / "bad.json") << "{ nope";
    CHECK_THROWS_AS(load_config(t / "bad.json"), DataError);
    CHECK_THROWS_AS(load_config(t / "none.json"), DataError);
  }
}
