#include "fedclust/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "fedclust/rng.hpp"

namespace fedclust::config {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error("config error: " + message);
}

void expect_keys(const json& j, const std::string& where,
                 const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string("key \"") + key + "\" has the wrong type");
  }
}

std::string get_string(const json& j, const char* key,
                       const std::set<std::string>& allowed,
                       const std::string& fallback) {
  const std::string v = get_or<std::string>(j, key, fallback);
  if (!allowed.count(v)) {
    std::string options;
    for (const auto& a : allowed) options += (options.empty() ? "" : ", ") + a;
    fail("key \"" + std::string(key) + "\" must be one of: " + options);
  }
  return v;
}

DatasetSection parse_dataset(const json& j) {
  expect_keys(j, "dataset",
              {"kind", "train_images", "train_labels", "test_images",
               "test_labels", "keep_labels", "labels_per_client",
               "per_client_cap", "synth"});
  DatasetSection ds;
  const std::string kind =
      get_string(j, "kind", {"idx", "synth"}, "idx");
  ds.kind = kind == "idx" ? DatasetSection::Kind::Idx
                          : DatasetSection::Kind::Synth;

  if (ds.kind == DatasetSection::Kind::Idx) {
    for (const char* key :
         {"train_images", "train_labels", "test_images", "test_labels"}) {
      if (!j.contains(key)) fail(std::string("dataset.") + key + " is required");
    }
    ds.train_images = j.at("train_images").get<std::string>();
    ds.train_labels = j.at("train_labels").get<std::string>();
    ds.test_images = j.at("test_images").get<std::string>();
    ds.test_labels = j.at("test_labels").get<std::string>();
  } else if (j.contains("synth")) {
    const json& s = j.at("synth");
    expect_keys(s, "dataset.synth",
                {"n_groups", "clients_per_group", "dims", "spread",
                 "samples_per_client", "test_samples"});
    ds.synth_groups = get_or(s, "n_groups", ds.synth_groups);
    ds.synth_clients_per_group =
        get_or(s, "clients_per_group", ds.synth_clients_per_group);
    ds.synth_dims = get_or(s, "dims", ds.synth_dims);
    ds.synth_spread = get_or(s, "spread", ds.synth_spread);
    ds.synth_samples_per_client = get_or<Eigen::Index>(
        s, "samples_per_client", ds.synth_samples_per_client);
    ds.synth_test_samples =
        get_or<Eigen::Index>(s, "test_samples", ds.synth_test_samples);
    if (ds.synth_groups < 1 || ds.synth_clients_per_group < 1 ||
        ds.synth_dims < 1 || ds.synth_samples_per_client < 1 ||
        ds.synth_test_samples < 1 || ds.synth_spread < 0.0) {
      fail("dataset.synth values out of range");
    }
  }

  ds.keep_labels = get_or(j, "keep_labels", ds.keep_labels);
  ds.labels_per_client = get_or(j, "labels_per_client", ds.labels_per_client);
  if (j.contains("per_client_cap")) {
    const auto cap = j.at("per_client_cap").get<Eigen::Index>();
    if (cap < 1) fail("dataset.per_client_cap must be >= 1");
    ds.per_client_cap = cap;
  }
  return ds;
}

ModelSection parse_model(const json& j) {
  expect_keys(j, "model", {"architecture", "hidden", "lr", "epochs",
                           "batch_size"});
  ModelSection m;
  m.architecture = get_string(j, "architecture",
                              {"LOGREG", "MLP", "PAPER_CNN"}, m.architecture);
  m.hidden = get_or(j, "hidden", m.hidden);
  m.lr = get_or(j, "lr", m.lr);
  m.epochs = get_or(j, "epochs", m.epochs);
  m.batch_size = get_or<Eigen::Index>(j, "batch_size", m.batch_size);
  if (m.hidden < 1) fail("model.hidden must be >= 1");
  if (!(m.lr > 0.0)) fail("model.lr must be > 0");
  if (m.epochs < 0) fail("model.epochs must be >= 0");
  if (m.batch_size < 1) fail("model.batch_size must be >= 1");
  return m;
}

FederationSection parse_federation(const json& j) {
  expect_keys(j, "federation",
              {"n_clients", "rounds", "warmup_rounds", "policy", "k",
               "similarity_basis", "linkage"});
  FederationSection f;
  f.n_clients = get_or(j, "n_clients", f.n_clients);
  f.rounds = get_or(j, "rounds", f.rounds);
  f.warmup_rounds = get_or(j, "warmup_rounds", f.warmup_rounds);
  f.policy = get_string(j, "policy",
                        {"FEDAVG_ALL", "FEDSAUC_FIXED_K", "ADAPTIVE"},
                        f.policy);
  f.k = get_or(j, "k", f.k);
  f.similarity_basis =
      get_string(j, "similarity_basis", {"DELTA", "PARAMS"},
                 f.similarity_basis);
  f.linkage = get_string(j, "linkage", {"average", "single", "complete"},
                         f.linkage);
  if (f.n_clients < 2) fail("federation.n_clients must be >= 2");
  if (f.rounds < 1) fail("federation.rounds must be >= 1");
  if (f.warmup_rounds < 1) fail("federation.warmup_rounds must be >= 1");
  if (f.k < 1 || f.k > f.n_clients) {
    fail("federation.k must be in [1, n_clients]");
  }
  return f;
}

ControllerSection parse_controller(const json& j) {
  expect_keys(j, "controller", {"mode", "w", "hold_rounds",
                                "sa_temperature"});
  ControllerSection c;
  c.mode = get_string(j, "mode", {"TCP", "SA", "EXP"}, c.mode);
  c.w = get_or(j, "w", c.w);
  c.hold_rounds = get_or(j, "hold_rounds", c.hold_rounds);
  c.sa_temperature = get_or(j, "sa_temperature", c.sa_temperature);
  if (c.w < 0.0) fail("controller.w must be >= 0");
  if (c.hold_rounds < 0) fail("controller.hold_rounds must be >= 0");
  if (!(c.sa_temperature > 0.0)) fail("controller.sa_temperature must be > 0");
  return c;
}

}  // namespace

std::string SimConfig::method_label() const {
  if (!label.empty()) return label;
  if (federation.policy == "FEDAVG_ALL") return "FedAvg";
  if (federation.policy == "FEDSAUC_FIXED_K") {
    return "FedSAUC(" + std::to_string(federation.k) + ")";
  }
  return "Adaptive(" + controller.mode + ")";
}

SimConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(path + " is not valid JSON: " + e.what());
  }
  return parse_config_json(j);
}

SimConfig parse_config_json(const json& j) {
  expect_keys(j, "config root",
              {"dataset", "model", "federation", "controller", "seed",
               "output_dir", "label"});
  if (!j.contains("dataset")) fail("a dataset section is required");

  SimConfig cfg;
  cfg.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("federation")) {
    cfg.federation = parse_federation(j.at("federation"));
  }
  if (j.contains("controller")) {
    cfg.controller = parse_controller(j.at("controller"));
  }
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  cfg.label = get_or<std::string>(j, "label", cfg.label);

  if (cfg.dataset.kind == DatasetSection::Kind::Synth) {
    const int expected =
        cfg.dataset.synth_groups * cfg.dataset.synth_clients_per_group;
    if (expected != cfg.federation.n_clients) {
      fail("federation.n_clients must equal n_groups * clients_per_group");
    }
  }
  if (!cfg.dataset.labels_per_client.empty() &&
      static_cast<int>(cfg.dataset.labels_per_client.size()) !=
          cfg.federation.n_clients) {
    fail("dataset.labels_per_client must list one label set per client");
  }
  return cfg;
}

json to_json(const SimConfig& cfg) {
  json dataset;
  if (cfg.dataset.kind == DatasetSection::Kind::Idx) {
    dataset["kind"] = "idx";
    dataset["train_images"] = cfg.dataset.train_images;
    dataset["train_labels"] = cfg.dataset.train_labels;
    dataset["test_images"] = cfg.dataset.test_images;
    dataset["test_labels"] = cfg.dataset.test_labels;
  } else {
    dataset["kind"] = "synth";
    dataset["synth"] = {
        {"n_groups", cfg.dataset.synth_groups},
        {"clients_per_group", cfg.dataset.synth_clients_per_group},
        {"dims", cfg.dataset.synth_dims},
        {"spread", cfg.dataset.synth_spread},
        {"samples_per_client", cfg.dataset.synth_samples_per_client},
        {"test_samples", cfg.dataset.synth_test_samples}};
  }
  if (!cfg.dataset.keep_labels.empty()) {
    dataset["keep_labels"] = cfg.dataset.keep_labels;
  }
  if (!cfg.dataset.labels_per_client.empty()) {
    dataset["labels_per_client"] = cfg.dataset.labels_per_client;
  }
  if (cfg.dataset.per_client_cap) {
    dataset["per_client_cap"] = *cfg.dataset.per_client_cap;
  }

  json j{{"dataset", dataset},
         {"model",
          {{"architecture", cfg.model.architecture},
           {"hidden", cfg.model.hidden},
           {"lr", cfg.model.lr},
           {"epochs", cfg.model.epochs},
           {"batch_size", cfg.model.batch_size}}},
         {"federation",
          {{"n_clients", cfg.federation.n_clients},
           {"rounds", cfg.federation.rounds},
           {"warmup_rounds", cfg.federation.warmup_rounds},
           {"policy", cfg.federation.policy},
           {"k", cfg.federation.k},
           {"similarity_basis", cfg.federation.similarity_basis},
           {"linkage", cfg.federation.linkage}}},
         {"controller",
          {{"mode", cfg.controller.mode},
           {"w", cfg.controller.w},
           {"hold_rounds", cfg.controller.hold_rounds},
           {"sa_temperature", cfg.controller.sa_temperature}}},
         {"seed", cfg.seed},
         {"output_dir", cfg.output_dir}};
  if (!cfg.label.empty()) j["label"] = cfg.label;
  return j;
}

Experiment build_experiment(const SimConfig& cfg) {
  Experiment exp;

  nn::ModelSpec model;
  int classes = 0;

  if (cfg.dataset.kind == DatasetSection::Kind::Synth) {
    exp.clients = data::synth_generate(
        cfg.dataset.synth_groups, cfg.dataset.synth_clients_per_group,
        cfg.dataset.synth_dims, cfg.dataset.synth_spread,
        rng::derive_seed(cfg.seed, "synth_train"),
        cfg.dataset.synth_samples_per_client);

    const int n = cfg.federation.n_clients;
    const Eigen::Index per_client = std::max<Eigen::Index>(
        1, cfg.dataset.synth_test_samples / n);
    const auto test_shards = data::synth_generate(
        cfg.dataset.synth_groups, cfg.dataset.synth_clients_per_group,
        cfg.dataset.synth_dims, cfg.dataset.synth_spread,
        rng::derive_seed(cfg.seed, "synth_test"), per_client);
    exp.test_set = test_shards.front().dataset;
    for (std::size_t i = 1; i < test_shards.size(); ++i) {
      const auto& ds = test_shards[i].dataset;
      const Eigen::Index old_rows = exp.test_set.images.rows();
      exp.test_set.images.conservativeResize(old_rows + ds.count(),
                                             Eigen::NoChange);
      exp.test_set.images.bottomRows(ds.count()) = ds.images;
      exp.test_set.labels.insert(exp.test_set.labels.end(),
                                 ds.labels.begin(), ds.labels.end());
    }
    classes = cfg.dataset.synth_groups;
  } else {
    auto train = data::load_idx(cfg.dataset.train_images,
                                cfg.dataset.train_labels);
    auto test = data::load_idx(cfg.dataset.test_images,
                               cfg.dataset.test_labels);
    if (!cfg.dataset.keep_labels.empty()) {
      train = data::filter_labels(train, cfg.dataset.keep_labels).dataset;
      test = data::filter_labels(test, cfg.dataset.keep_labels).dataset;
    }

    data::PartitionPlan plan =
        cfg.dataset.labels_per_client.empty()
            ? data::PartitionPlan::pairwise(cfg.federation.n_clients, cfg.seed)
            : data::PartitionPlan{cfg.federation.n_clients,
                                  cfg.dataset.labels_per_client,
                                  std::nullopt, cfg.seed};
    plan.per_client_cap = cfg.dataset.per_client_cap;
    exp.clients = data::partition(train, plan);
    exp.test_set = std::move(test);

    for (int label : train.labels) classes = std::max(classes, label + 1);
    for (int label : exp.test_set.labels) {
      classes = std::max(classes, label + 1);
    }
  }

  const auto& sample = exp.clients.front().dataset;
  if (cfg.model.architecture == "PAPER_CNN") {
    model = nn::ModelSpec::paper_cnn();
    model.channels = sample.channels;
    model.height = sample.height;
    model.width = sample.width;
    model.classes = classes;
    model.hidden = cfg.model.hidden;
  } else if (cfg.model.architecture == "MLP") {
    model = nn::ModelSpec::mlp(sample.features(), classes, cfg.model.hidden);
  } else {
    model = nn::ModelSpec::logreg(sample.features(), classes);
  }

  exp.run.model = model;
  exp.run.lr = cfg.model.lr;
  exp.run.epochs = cfg.model.epochs;
  exp.run.batch_size = cfg.model.batch_size;
  exp.run.rounds = cfg.federation.rounds;
  exp.run.policy.warmup_rounds = cfg.federation.warmup_rounds;
  exp.run.policy.k = cfg.federation.k;
  if (cfg.federation.policy == "FEDAVG_ALL") {
    exp.run.policy.kind = federation::PolicyKind::FedAvgAll;
  } else if (cfg.federation.policy == "FEDSAUC_FIXED_K") {
    exp.run.policy.kind = federation::PolicyKind::FedSaucFixedK;
  } else {
    exp.run.policy.kind = federation::PolicyKind::Adaptive;
  }
  exp.run.controller.n = cfg.federation.n_clients;
  exp.run.controller.w = cfg.controller.w;
  exp.run.controller.hold_rounds = cfg.controller.hold_rounds;
  exp.run.controller.sa_temperature = cfg.controller.sa_temperature;
  exp.run.controller.mode = cfg.controller.mode == "TCP"
                                ? controller::Mode::Tcp
                                : cfg.controller.mode == "SA"
                                      ? controller::Mode::Sa
                                      : controller::Mode::Exp;
  exp.run.basis = cfg.federation.similarity_basis == "PARAMS"
                      ? similarity::Basis::Params
                      : similarity::Basis::Delta;
  exp.run.linkage = cfg.federation.linkage == "single"
                        ? clustering::Linkage::Single
                        : cfg.federation.linkage == "complete"
                              ? clustering::Linkage::Complete
                              : clustering::Linkage::Average;
  exp.run.seed = cfg.seed;
  return exp;
}

}  // namespace fedclust::config
