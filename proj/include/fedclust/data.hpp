#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedclust::data {

// Dense labeled dataset. Each row of `images` is one sample flattened in
// [channel][row][col] order, pixel values already scaled to [0, 1].
struct LabeledDataset {
  Eigen::MatrixXd images;
  std::vector<int> labels;
  int channels = 1;
  int height = 28;
  int width = 28;

  Eigen::Index count() const { return images.rows(); }
  int features() const { return channels * height * width; }
};

struct ClientShard {
  int client_id = 0;
  LabeledDataset dataset;

  Eigen::Index sample_count() const { return dataset.count(); }
};

// One mini-batch of training data.
struct Batch {
  Eigen::MatrixXd inputs;  // batch x features
  std::vector<int> labels;

  Eigen::Index size() const { return inputs.rows(); }
};

// Assignment of label sets to clients. Clients with identical label sets form
// a group and split that group's samples evenly.
struct PartitionPlan {
  int n_clients = 8;
  std::vector<std::vector<int>> labels_per_client;
  std::optional<Eigen::Index> per_client_cap;
  std::uint64_t seed = 0;

  // Client pair (2k, 2k+1) shares labels {2k, 2k+1}.
  static PartitionPlan pairwise(int n_clients, std::uint64_t seed);
};

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Inverse of load_idx for small fixtures and generated corpora; bytes written
// are bit-exact IDX (magic 2051/2049, big-endian dims, raw u8 pixels).
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

struct FilterResult {
  LabeledDataset dataset;
  std::map<int, int> reindex;  // original label -> dense label, identity map
                               // when reindexing is off
};

FilterResult filter_labels(const LabeledDataset& ds,
                           const std::vector<int>& keep,
                           bool reindex = false);

std::vector<ClientShard> partition(const LabeledDataset& ds,
                                   const PartitionPlan& plan);

// Planted-group synthetic data: each group draws from its own Gaussian blob
// (pairwise mean distance >= 10 * spread) and is labeled by group id.
std::vector<ClientShard> synth_generate(int n_groups, int clients_per_group,
                                        int dims, double spread,
                                        std::uint64_t seed,
                                        Eigen::Index samples_per_client = 128);

std::vector<Batch> batches(const ClientShard& shard, Eigen::Index batch_size,
                           std::uint64_t seed);

}  // namespace fedclust::data
