#include "fedclust/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "fedclust/rng.hpp"

namespace fedclust::data {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("truncated IDX file: " + path);
  }
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t n,
                                        const std::string& path) {
  std::vector<unsigned char> bytes(n);
  if (!in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(n))) {
    throw std::runtime_error("truncated IDX file: " + path);
  }
  return bytes;
}

}  // namespace

PartitionPlan PartitionPlan::pairwise(int n_clients, std::uint64_t seed) {
  if (n_clients < 2 || n_clients % 2 != 0) {
    throw std::invalid_argument("pairwise plan needs an even client count");
  }
  PartitionPlan plan;
  plan.n_clients = n_clients;
  plan.seed = seed;
  plan.labels_per_client.resize(n_clients);
  for (int c = 0; c < n_clients; ++c) {
    const int k = c / 2;
    plan.labels_per_client[c] = {2 * k, 2 * k + 1};
  }
  return plan;
}

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);

  const std::uint32_t img_magic = read_be32(img, images_path);
  if (img_magic != kImageMagic) {
    throw std::runtime_error("bad magic " + std::to_string(img_magic) +
                             " in " + images_path + " (expected 2051)");
  }
  const std::uint32_t lab_magic = read_be32(lab, labels_path);
  if (lab_magic != kLabelMagic) {
    throw std::runtime_error("bad magic " + std::to_string(lab_magic) +
                             " in " + labels_path + " (expected 2049)");
  }

  const std::uint32_t n_images = read_be32(img, images_path);
  const std::uint32_t height = read_be32(img, images_path);
  const std::uint32_t width = read_be32(img, images_path);
  const std::uint32_t n_labels = read_be32(lab, labels_path);
  if (n_images != n_labels) {
    throw std::runtime_error("image/label count mismatch: " +
                             std::to_string(n_images) + " vs " +
                             std::to_string(n_labels));
  }

  const std::size_t pixels = std::size_t(height) * width;
  const auto raw = read_payload(img, std::size_t(n_images) * pixels, images_path);
  const auto raw_labels = read_payload(lab, n_images, labels_path);

  LabeledDataset ds;
  ds.channels = 1;
  ds.height = static_cast<int>(height);
  ds.width = static_cast<int>(width);
  ds.images.resize(n_images, static_cast<Eigen::Index>(pixels));
  for (std::uint32_t i = 0; i < n_images; ++i) {
    for (std::size_t px = 0; px < pixels; ++px) {
      ds.images(i, static_cast<Eigen::Index>(px)) =
          raw[std::size_t(i) * pixels + px] / 255.0;
    }
  }
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  if (ds.channels != 1) {
    throw std::invalid_argument("IDX export supports single-channel data");
  }
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write " + images_path);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot write " + labels_path);

  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.count()));
  write_be32(img, static_cast<std::uint32_t>(ds.height));
  write_be32(img, static_cast<std::uint32_t>(ds.width));
  for (Eigen::Index i = 0; i < ds.count(); ++i) {
    for (Eigen::Index px = 0; px < ds.images.cols(); ++px) {
      const double v = std::clamp(ds.images(i, px), 0.0, 1.0);
      const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
      img.write(reinterpret_cast<const char*>(&byte), 1);
    }
  }

  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.count()));
  for (int label : ds.labels) {
    const auto byte = static_cast<unsigned char>(label);
    lab.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

FilterResult filter_labels(const LabeledDataset& ds,
                           const std::vector<int>& keep, bool reindex) {
  const std::set<int> keep_set(keep.begin(), keep.end());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < ds.count(); ++i) {
    if (keep_set.count(ds.labels[i])) rows.push_back(i);
  }
  if (rows.empty()) {
    throw std::runtime_error("label filter leaves an empty dataset");
  }

  FilterResult out;
  out.dataset.channels = ds.channels;
  out.dataset.height = ds.height;
  out.dataset.width = ds.width;
  out.dataset.images.resize(static_cast<Eigen::Index>(rows.size()),
                            ds.images.cols());
  out.dataset.labels.reserve(rows.size());

  int next = 0;
  for (int label : keep_set) {
    out.reindex[label] = reindex ? next++ : label;
  }
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(rows.size()); ++r) {
    out.dataset.images.row(r) = ds.images.row(rows[r]);
    out.dataset.labels.push_back(out.reindex.at(ds.labels[rows[r]]));
  }
  return out;
}

std::vector<ClientShard> partition(const LabeledDataset& ds,
                                   const PartitionPlan& plan) {
  if (static_cast<int>(plan.labels_per_client.size()) != plan.n_clients) {
    throw std::invalid_argument("plan assigns labels to " +
                                std::to_string(plan.labels_per_client.size()) +
                                " clients, expected " +
                                std::to_string(plan.n_clients));
  }

  // Clients sharing an identical label set form a group which splits the
  // samples of that set evenly. Distinct groups must not overlap in labels.
  std::map<std::set<int>, std::vector<int>> groups;
  for (int c = 0; c < plan.n_clients; ++c) {
    const auto& ls = plan.labels_per_client[c];
    if (ls.empty()) {
      throw std::invalid_argument("client " + std::to_string(c) +
                                  " has an empty label set");
    }
    groups[std::set<int>(ls.begin(), ls.end())].push_back(c);
  }
  std::set<int> seen;
  for (const auto& [labels, members] : groups) {
    for (int label : labels) {
      if (!seen.insert(label).second) {
        throw std::invalid_argument("label " + std::to_string(label) +
                                    " appears in two different label sets");
      }
    }
  }

  std::map<int, const std::set<int>*> label_to_group;
  std::map<const std::set<int>*, std::vector<Eigen::Index>> group_samples;
  for (const auto& [labels, members] : groups) {
    for (int label : labels) label_to_group[label] = &labels;
    group_samples[&labels] = {};
  }
  for (Eigen::Index i = 0; i < ds.count(); ++i) {
    auto it = label_to_group.find(ds.labels[i]);
    if (it != label_to_group.end()) group_samples[it->second].push_back(i);
  }

  std::vector<std::vector<Eigen::Index>> per_client(plan.n_clients);
  for (const auto& [labels, members] : groups) {
    auto& samples = group_samples[&labels];
    rng::Rng shuffle_rng(rng::derive_seed(plan.seed, "partition",
                                          static_cast<std::uint64_t>(
                                              *labels.begin())));
    shuffle_rng.shuffle(samples);
    // Round-robin deal keeps the split even (within one sample).
    for (std::size_t i = 0; i < samples.size(); ++i) {
      per_client[members[i % members.size()]].push_back(samples[i]);
    }
  }

  std::vector<ClientShard> shards;
  shards.reserve(plan.n_clients);
  for (int c = 0; c < plan.n_clients; ++c) {
    auto& rows = per_client[c];
    if (rows.empty()) {
      throw std::runtime_error("client " + std::to_string(c) +
                               " would receive zero samples");
    }
    if (plan.per_client_cap) {
      const auto cap = static_cast<std::size_t>(*plan.per_client_cap);
      if (rows.size() > cap) rows.resize(cap);
    }
    ClientShard shard;
    shard.client_id = c;
    shard.dataset.channels = ds.channels;
    shard.dataset.height = ds.height;
    shard.dataset.width = ds.width;
    shard.dataset.images.resize(static_cast<Eigen::Index>(rows.size()),
                                ds.images.cols());
    shard.dataset.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      shard.dataset.images.row(static_cast<Eigen::Index>(r)) =
          ds.images.row(rows[r]);
      shard.dataset.labels.push_back(ds.labels[rows[r]]);
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::vector<ClientShard> synth_generate(int n_groups, int clients_per_group,
                                        int dims, double spread,
                                        std::uint64_t seed,
                                        Eigen::Index samples_per_client) {
  if (n_groups < 1 || clients_per_group < 1 ||
      n_groups * clients_per_group < 2) {
    throw std::invalid_argument("synth_generate needs at least 2 clients");
  }
  if (dims < 1 || samples_per_client < 1) {
    throw std::invalid_argument("invalid synth dimensions or sample count");
  }

  // Blob means drawn uniformly in a box wide enough that rejection until all
  // pairs are >= 10 * spread apart terminates quickly.
  const double min_dist = 10.0 * spread;
  const double box = std::max(1.0, min_dist * n_groups);
  rng::Rng mean_rng(rng::derive_seed(seed, "synth_means"));
  std::vector<Eigen::VectorXd> means;
  while (static_cast<int>(means.size()) < n_groups) {
    Eigen::VectorXd mu(dims);
    for (int d = 0; d < dims; ++d) mu[d] = mean_rng.next_uniform(0.0, box);
    bool ok = true;
    for (const auto& other : means) {
      if ((mu - other).norm() < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) means.push_back(std::move(mu));
  }

  std::vector<ClientShard> shards;
  shards.reserve(std::size_t(n_groups) * clients_per_group);
  for (int g = 0; g < n_groups; ++g) {
    for (int j = 0; j < clients_per_group; ++j) {
      const int client_id = g * clients_per_group + j;
      rng::Rng rng(rng::derive_seed(seed, "synth_client",
                                    static_cast<std::uint64_t>(client_id)));
      ClientShard shard;
      shard.client_id = client_id;
      shard.dataset.channels = 1;
      shard.dataset.height = 1;
      shard.dataset.width = dims;
      shard.dataset.images.resize(samples_per_client, dims);
      shard.dataset.labels.assign(static_cast<std::size_t>(samples_per_client),
                                  g);
      for (Eigen::Index i = 0; i < samples_per_client; ++i) {
        for (int d = 0; d < dims; ++d) {
          shard.dataset.images(i, d) = means[g][d] + spread * rng.next_normal();
        }
      }
      shards.push_back(std::move(shard));
    }
  }
  return shards;
}

std::vector<Batch> batches(const ClientShard& shard, Eigen::Index batch_size,
                           std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const Eigen::Index n = shard.sample_count();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng::Rng rng(seed);
  rng.shuffle(order);

  std::vector<Batch> out;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index size = std::min(batch_size, n - start);
    Batch batch;
    batch.inputs.resize(size, shard.dataset.images.cols());
    batch.labels.reserve(static_cast<std::size_t>(size));
    for (Eigen::Index i = 0; i < size; ++i) {
      const Eigen::Index row = order[static_cast<std::size_t>(start + i)];
      batch.inputs.row(i) = shard.dataset.images.row(row);
      batch.labels.push_back(shard.dataset.labels[row]);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace fedclust::data
