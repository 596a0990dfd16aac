#include "fedclust/federation.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fedclust::federation {

long measure_transmissions(const TransmissionLedger& ledger) {
  return ledger.total;
}

nn::ParamVector aggregate_fedavg(
    const std::vector<std::pair<nn::ParamVector, long>>& uploads) {
  if (uploads.empty()) {
    throw std::invalid_argument("aggregate_fedavg needs at least one upload");
  }
  long total = 0;
  for (const auto& [params, count] : uploads) {
    if (count < 1) throw std::invalid_argument("upload sample count must be >= 1");
    if (params.size() != uploads.front().first.size()) {
      throw std::invalid_argument("upload length mismatch");
    }
    total += count;
  }
  nn::ParamVector out = nn::ParamVector::Zero(uploads.front().first.size());
  for (const auto& [params, count] : uploads) {
    out += (static_cast<double>(count) / static_cast<double>(total)) * params;
  }
  return out;
}

std::vector<int> select_one_per_cluster(
    const clustering::ClusterAssignment& assignment, rng::Rng& rng) {
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(assignment.p));
  for (const auto& members : assignment.members()) {
    picked.push_back(members[rng.next_below(members.size())]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<int> select_half_per_cluster(
    const clustering::ClusterAssignment& assignment, rng::Rng& rng) {
  std::vector<int> picked;
  for (auto members : assignment.members()) {
    const std::size_t take =
        std::max<std::size_t>(1, members.size() / 2);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.next_below(members.size() - i));
      std::swap(members[i], members[j]);
      picked.push_back(members[i]);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

Federation::Federation(RunConfig cfg, std::vector<data::ClientShard> clients,
                       data::LabeledDataset test_set)
    : cfg_(std::move(cfg)),
      clients_(std::move(clients)),
      test_set_(std::move(test_set)),
      controller_rng_(rng::derive_seed(cfg_.seed, "controller")) {
  const int n = static_cast<int>(clients_.size());
  if (n < 2) throw std::invalid_argument("federation needs >= 2 clients");
  for (int c = 0; c < n; ++c) {
    if (clients_[static_cast<std::size_t>(c)].client_id != c) {
      throw std::invalid_argument("client shards must be ordered by id");
    }
    if (clients_[static_cast<std::size_t>(c)].sample_count() < 1) {
      throw std::invalid_argument("client " + std::to_string(c) +
                                  " has an empty shard");
    }
  }
  if (cfg_.controller.n != n) {
    throw std::invalid_argument("controller n does not match client count");
  }
  if (cfg_.policy.kind == PolicyKind::FedSaucFixedK &&
      (cfg_.policy.k < 1 || cfg_.policy.k > n)) {
    throw std::invalid_argument("FedSAUC k outside [1, n]");
  }
  if (cfg_.policy.warmup_rounds < 1) {
    throw std::invalid_argument("warmup_rounds must be >= 1");
  }
  if (cfg_.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (cfg_.threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (test_set_.count() < 1) throw std::invalid_argument("empty test set");

  server_.global_params =
      nn::init_params(cfg_.model, rng::derive_seed(cfg_.seed, "global_init"));
  server_.cache.resize(static_cast<std::size_t>(n));
  server_.controller = controller::State::initial(n);

  next_participants_.resize(static_cast<std::size_t>(n));
  std::iota(next_participants_.begin(), next_participants_.end(), 0);
  current_p_ = n;
}

std::vector<nn::ParamVector> Federation::basis_vectors() const {
  std::vector<nn::ParamVector> vectors;
  vectors.reserve(server_.cache.size());
  for (const auto& cache : server_.cache) {
    if (cache.params.size() == 0) {
      throw std::logic_error("similarity requested before warmup completed");
    }
    vectors.push_back(
        similarity::basis_vector(cache.params, cache.start_global, cfg_.basis));
  }
  return vectors;
}

RoundRecord Federation::run_round() {
  const int round = server_.round_index + 1;
  const std::vector<int> participants = next_participants_;

  struct Upload {
    nn::ParamVector params;
    double loss = 0.0;
    long count = 0;
  };
  std::vector<Upload> uploads(participants.size());

  auto train_one = [&](std::size_t idx) {
    const int c = participants[idx];
    const auto& shard = clients_[static_cast<std::size_t>(c)];
    const auto result = nn::local_train(
        cfg_.model, server_.global_params, shard, cfg_.epochs,
        cfg_.batch_size, cfg_.lr,
        rng::derive_seed(cfg_.seed, "local_train",
                         static_cast<std::uint64_t>(c),
                         static_cast<std::uint64_t>(round)));
    uploads[idx] = {result.params, result.mean_loss, shard.sample_count()};
  };

  const std::size_t workers = std::min<std::size_t>(
      static_cast<std::size_t>(cfg_.threads), participants.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < participants.size(); ++i) train_one(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = cursor.fetch_add(1); i < participants.size();
             i = cursor.fetch_add(1)) {
          train_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  ledger_.record_round(static_cast<int>(participants.size()));

  // Cache uploads along with the global they trained from, then aggregate in
  // ascending client order (participants are already sorted).
  for (std::size_t i = 0; i < participants.size(); ++i) {
    auto& slot = server_.cache[static_cast<std::size_t>(participants[i])];
    slot.params = uploads[i].params;
    slot.start_global = server_.global_params;
    slot.loss = uploads[i].loss;
  }

  double avg_loss = 0.0;
  for (const auto& upload : uploads) avg_loss += upload.loss;
  avg_loss /= static_cast<double>(uploads.size());
  server_.loss_history.push_back(avg_loss);

  std::vector<std::pair<nn::ParamVector, long>> weighted;
  weighted.reserve(uploads.size());
  for (auto& upload : uploads) {
    weighted.emplace_back(std::move(upload.params), upload.count);
  }
  server_.global_params = aggregate_fedavg(weighted);

  const double accuracy =
      nn::evaluate(cfg_.model, server_.global_params, test_set_);

  const std::size_t h = server_.loss_history.size();
  const double reduction =
      h >= 2 ? controller::reduction_ratio(server_.loss_history[h - 2],
                                           server_.loss_history[h - 1])
             : 0.0;

  RoundRecord record;
  record.round = round;
  record.participants = participants;
  record.avg_loss = avg_loss;
  record.reduction_ratio = reduction;
  record.p = current_p_;
  record.test_accuracy = accuracy;
  record.cumulative_uploads = ledger_.total;

  server_.round_index = round;
  next_participants_ = pick_next_participants(reduction);
  return record;
}

std::vector<int> Federation::pick_next_participants(double reduction) {
  const int n = static_cast<int>(clients_.size());
  const int round = server_.round_index;  // just completed
  std::vector<int> everyone(static_cast<std::size_t>(n));
  std::iota(everyone.begin(), everyone.end(), 0);

  if (cfg_.policy.kind == PolicyKind::FedAvgAll ||
      round < cfg_.policy.warmup_rounds) {
    current_p_ = n;
    return everyone;
  }

  rng::Rng select_rng(rng::derive_seed(cfg_.seed, "select",
                                       static_cast<std::uint64_t>(round)));
  if (cfg_.policy.kind == PolicyKind::FedSaucFixedK) {
    if (round == cfg_.policy.warmup_rounds) {
      const auto d = similarity::distance_matrix(basis_vectors());
      frozen_assignment_ =
          clustering::cut(clustering::agglomerate(d, cfg_.linkage),
                          cfg_.policy.k);
    }
    current_p_ = frozen_assignment_.p;
    return select_half_per_cluster(frozen_assignment_, select_rng);
  }

  // Adaptive: fresh clustering every round, controller picks the cut.
  const auto d = similarity::distance_matrix(basis_vectors());
  const auto dendrogram = clustering::agglomerate(d, cfg_.linkage);
  const int p = controller::step(server_.controller, cfg_.controller,
                                 reduction, controller_rng_);
  const auto assignment = clustering::cut(dendrogram, p);
  current_p_ = p;
  return select_one_per_cluster(assignment, select_rng);
}

SimulationResult Federation::run() {
  SimulationResult result;
  result.rounds.reserve(static_cast<std::size_t>(cfg_.rounds));
  for (int i = 0; i < cfg_.rounds; ++i) {
    result.rounds.push_back(run_round());
  }
  result.summary = summarize(result.rounds);
  return result;
}

Summary summarize(const std::vector<RoundRecord>& rounds) {
  if (rounds.empty()) throw std::invalid_argument("no rounds to summarize");
  Summary summary;
  summary.total_uploads = rounds.back().cumulative_uploads;
  summary.top_accuracy = 0.0;
  for (const auto& record : rounds) {
    summary.top_accuracy = std::max(summary.top_accuracy,
                                    record.test_accuracy);
    summary.p_trajectory.push_back(record.p);
  }

  const std::size_t window = std::min<std::size_t>(50, rounds.size());
  std::map<int, int> counts;
  for (std::size_t i = rounds.size() - window; i < rounds.size(); ++i) {
    ++counts[rounds[i].p];
  }
  int modal = 0, best = 0;
  for (const auto& [p, count] : counts) {
    if (count > best) {  // ties already favor the smaller p (map order)
      best = count;
      modal = p;
    }
  }
  summary.modal_p_last_50 = modal;
  return summary;
}

SimulationResult run_simulation(const RunConfig& cfg,
                                std::vector<data::ClientShard> clients,
                                data::LabeledDataset test_set) {
  Federation federation(cfg, std::move(clients), std::move(test_set));
  return federation.run();
}

}  // namespace fedclust::federation
