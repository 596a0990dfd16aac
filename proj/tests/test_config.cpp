#include <doctest.h>

#include <json.hpp>

#include "fedclust/config.hpp"

using namespace fedclust;
using nlohmann::json;

namespace {

json minimal_synth() {
  return json{{"dataset",
               {{"kind", "synth"},
                {"synth",
                 {{"n_groups", 4},
                  {"clients_per_group", 2},
                  {"dims", 2},
                  {"spread", 0.5},
                  {"samples_per_client", 16},
                  {"test_samples", 32}}}}}};
}

}  // namespace

TEST_CASE("minimal config fills the documented defaults") {
  const auto cfg = config::parse_config_json(minimal_synth());
  CHECK(cfg.controller.w == 0.01);
  CHECK(cfg.controller.hold_rounds == 5);
  CHECK(cfg.controller.sa_temperature == 10.0);
  CHECK(cfg.federation.warmup_rounds == 2);
  CHECK(cfg.model.lr == 0.01);
  CHECK(cfg.model.epochs == 1);
  CHECK(cfg.model.batch_size == 32);
  CHECK(cfg.federation.n_clients == 8);
  CHECK(cfg.federation.similarity_basis == "DELTA");
  CHECK(cfg.federation.linkage == "average");
  CHECK(cfg.method_label() == "FedAvg");
}

TEST_CASE("unknown keys are rejected by name") {
  auto j = minimal_synth();
  j["foo"] = 1;
  CHECK_THROWS_WITH_AS(config::parse_config_json(j),
                       doctest::Contains("foo"), std::runtime_error);

  auto nested = minimal_synth();
  nested["controller"] = {{"mode", "SA"}, {"temperature", 3}};
  CHECK_THROWS_WITH_AS(config::parse_config_json(nested),
                       doctest::Contains("temperature"), std::runtime_error);
}

TEST_CASE("range and enum violations are rejected") {
  auto j = minimal_synth();
  j["federation"] = {{"policy", "FEDSAUC_FIXED_K"}, {"k", 0}};
  CHECK_THROWS(config::parse_config_json(j));

  j = minimal_synth();
  j["federation"] = {{"policy", "SOMETHING"}};
  CHECK_THROWS(config::parse_config_json(j));

  j = minimal_synth();
  j["model"] = {{"architecture", "PAPER_CNN"}, {"lr", 0.0}};
  CHECK_THROWS(config::parse_config_json(j));

  j = minimal_synth();
  j["controller"] = {{"w", -0.5}};
  CHECK_THROWS(config::parse_config_json(j));

  // n_clients must match the synth group layout
  j = minimal_synth();
  j["federation"] = {{"n_clients", 6}};
  CHECK_THROWS(config::parse_config_json(j));

  CHECK_THROWS(config::parse_config_json(json::object()));  // no dataset
}

TEST_CASE("idx configs require the four paths") {
  json j{{"dataset", {{"kind", "idx"}, {"train_images", "a"}}}};
  CHECK_THROWS_WITH_AS(config::parse_config_json(j),
                       doctest::Contains("train_labels"), std::runtime_error);
}

TEST_CASE("config round-trips through its JSON form") {
  auto j = minimal_synth();
  j["federation"] = {{"policy", "ADAPTIVE"}, {"rounds", 50}};
  j["controller"] = {{"mode", "SA"}, {"sa_temperature", 7.5}};
  j["seed"] = 1234;
  j["label"] = "my run";

  const auto cfg = config::parse_config_json(j);
  const auto serialized = config::to_json(cfg);
  const auto cfg2 = config::parse_config_json(serialized);
  CHECK(config::to_json(cfg2) == serialized);
  CHECK(cfg2.seed == 1234);
  CHECK(cfg2.method_label() == "my run");
}

TEST_CASE("build_experiment assembles a runnable synth setup") {
  auto j = minimal_synth();
  j["federation"] = {{"policy", "ADAPTIVE"}, {"rounds", 10}};
  const auto cfg = config::parse_config_json(j);
  const auto exp = config::build_experiment(cfg);

  CHECK(exp.clients.size() == 8);
  CHECK(exp.test_set.count() == 32);
  CHECK(exp.run.model.classes == 4);
  CHECK(exp.run.model.features() == 2);
  CHECK(exp.run.policy.kind == federation::PolicyKind::Adaptive);
  CHECK(exp.run.controller.n == 8);

  // the assembled experiment actually runs
  const auto result = federation::run_simulation(
      exp.run, exp.clients, exp.test_set);
  CHECK(result.rounds.size() == 10);
}
