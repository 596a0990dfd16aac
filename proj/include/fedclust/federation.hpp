#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedclust/clustering.hpp"
#include "fedclust/controller.hpp"
#include "fedclust/data.hpp"
#include "fedclust/nn.hpp"
#include "fedclust/rng.hpp"
#include "fedclust/similarity.hpp"

namespace fedclust::federation {

enum class PolicyKind {
  FedAvgAll,      // every client every round
  FedSaucFixedK,  // clustering frozen after warmup, half of each cluster
  Adaptive,       // controller-driven cluster count, one per cluster
};

struct SelectionPolicy {
  PolicyKind kind = PolicyKind::FedAvgAll;
  int k = 4;  // cluster count for FedSaucFixedK
  int warmup_rounds = 2;
};

struct RunConfig {
  nn::ModelSpec model;
  double lr = 0.01;
  int epochs = 1;
  Eigen::Index batch_size = 32;
  int rounds = 200;
  SelectionPolicy policy;
  controller::Config controller;
  similarity::Basis basis = similarity::Basis::Delta;
  clustering::Linkage linkage = clustering::Linkage::Average;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RoundRecord {
  int round = 0;  // 1-based
  std::vector<int> participants;
  double avg_loss = 0.0;         // unweighted mean of participant losses
  double reduction_ratio = 0.0;  // vs previous round; 0 on round 1
  int p = 0;                     // cluster count in effect this round
  double test_accuracy = 0.0;
  long cumulative_uploads = 0;
};

// Uploads only; downloads and participant-list messages are free.
struct TransmissionLedger {
  std::vector<int> per_round;
  long total = 0;

  void record_round(int uploads) {
    per_round.push_back(uploads);
    total += uploads;
  }
};

long measure_transmissions(const TransmissionLedger& ledger);

struct Summary {
  double top_accuracy = 0.0;
  long total_uploads = 0;
  std::vector<int> p_trajectory;  // p in effect, per round
  int modal_p_last_50 = 0;
};

struct SimulationResult {
  std::vector<RoundRecord> rounds;
  Summary summary;
};

// Sample-count-weighted mean, summed in upload order.
nn::ParamVector aggregate_fedavg(
    const std::vector<std::pair<nn::ParamVector, long>>& uploads);

// One uniform draw per cluster; ids returned ascending.
std::vector<int> select_one_per_cluster(
    const clustering::ClusterAssignment& assignment, rng::Rng& rng);

// max(1, floor(s/2)) uniform draws without replacement from each cluster of
// size s; ids returned ascending.
std::vector<int> select_half_per_cluster(
    const clustering::ClusterAssignment& assignment, rng::Rng& rng);

// Latest upload of one client plus the global model it trained from.
struct ClientCache {
  nn::ParamVector params;
  nn::ParamVector start_global;
  double loss = 0.0;
};

struct ServerState {
  nn::ParamVector global_params;
  std::vector<ClientCache> cache;  // one slot per client after warmup
  std::vector<double> loss_history;
  controller::State controller;
  int round_index = 0;  // rounds completed
};

// In-process simulation of the round loop: download, parallel local training,
// upload accounting, FedAvg aggregation, evaluation and next-round selection.
// Bit-identical output for a fixed seed regardless of worker-thread count.
class Federation {
 public:
  Federation(RunConfig cfg, std::vector<data::ClientShard> clients,
             data::LabeledDataset test_set);

  RoundRecord run_round();
  SimulationResult run();

  const ServerState& server() const { return server_; }
  const TransmissionLedger& ledger() const { return ledger_; }
  const RunConfig& config() const { return cfg_; }

  // Similarity inputs for all clients, from the cached uploads.
  std::vector<nn::ParamVector> basis_vectors() const;

 private:
  std::vector<int> pick_next_participants(double reduction);

  RunConfig cfg_;
  std::vector<data::ClientShard> clients_;
  data::LabeledDataset test_set_;
  ServerState server_;
  TransmissionLedger ledger_;
  rng::Rng controller_rng_;
  std::vector<int> next_participants_;
  clustering::ClusterAssignment frozen_assignment_;  // FedSauc after warmup
  int current_p_ = 0;
};

Summary summarize(const std::vector<RoundRecord>& rounds);

SimulationResult run_simulation(const RunConfig& cfg,
                                std::vector<data::ClientShard> clients,
                                data::LabeledDataset test_set);

}  // namespace fedclust::federation
