#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedclust/data.hpp"
#include "fedclust/federation.hpp"

namespace fedclust::config {

struct DatasetSection {
  enum class Kind { Idx, Synth };
  Kind kind = Kind::Idx;

  // kind == Idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::vector<int> keep_labels;  // empty = keep everything
  // Explicit label sets per client; empty = pairwise plan derived from n.
  std::vector<std::vector<int>> labels_per_client;

  // kind == Synth
  int synth_groups = 4;
  int synth_clients_per_group = 2;
  int synth_dims = 2;
  double synth_spread = 0.5;
  Eigen::Index synth_samples_per_client = 128;
  Eigen::Index synth_test_samples = 512;

  std::optional<Eigen::Index> per_client_cap;
};

struct ModelSection {
  std::string architecture = "LOGREG";  // LOGREG | MLP | PAPER_CNN
  int hidden = 128;
  double lr = 0.01;
  int epochs = 1;
  Eigen::Index batch_size = 32;
};

struct FederationSection {
  int n_clients = 8;
  int rounds = 200;
  int warmup_rounds = 2;
  std::string policy = "FEDAVG_ALL";  // FEDAVG_ALL | FEDSAUC_FIXED_K | ADAPTIVE
  int k = 4;
  std::string similarity_basis = "DELTA";  // DELTA | PARAMS
  std::string linkage = "average";         // average | single | complete
};

struct ControllerSection {
  std::string mode = "EXP";  // TCP | SA | EXP
  double w = 0.01;
  int hold_rounds = 5;
  double sa_temperature = 10.0;
};

struct SimConfig {
  DatasetSection dataset;
  ModelSection model;
  FederationSection federation;
  ControllerSection controller;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string label;  // row label for `compare`; derived from policy if empty

  // "FedAvg", "FedSAUC(k)" or "Adaptive(MODE)" unless `label` overrides.
  std::string method_label() const;
};

// Strict parse: unknown keys anywhere are an error, as are out-of-range
// values. Error messages name the offending key.
SimConfig parse_config(const std::string& path);
SimConfig parse_config_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& cfg);

// Everything run_simulation needs, resolved from a config: shards, the test
// split and the runtime parameters.
struct Experiment {
  federation::RunConfig run;
  std::vector<data::ClientShard> clients;
  data::LabeledDataset test_set;
};

Experiment build_experiment(const SimConfig& cfg);

}  // namespace fedclust::config
