#pragma once

// Independent oracles shared by the unit tests and the acceptance suite.
// Everything here recomputes results from first principles, without touching
// the incremental code paths it is used to check.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "fedclust/clustering.hpp"
#include "fedclust/nn.hpp"

namespace fedclust::oracles {

// Central finite difference of the batch loss along coordinate j.
inline double numeric_grad(const nn::ModelSpec& spec,
                           const nn::ParamVector& params,
                           const data::Batch& batch, Eigen::Index j,
                           double eps = 1e-5) {
  nn::ParamVector plus = params;
  nn::ParamVector minus = params;
  plus[j] += eps;
  minus[j] -= eps;
  const double lp = nn::loss_and_grad(spec, plus, batch).loss;
  const double lm = nn::loss_and_grad(spec, minus, batch).loss;
  return (lp - lm) / (2.0 * eps);
}

// Largest relative disagreement between the analytic gradient and central
// differences, over all coordinates.
inline double max_grad_rel_error(const nn::ModelSpec& spec,
                                 const nn::ParamVector& params,
                                 const data::Batch& batch) {
  const nn::ParamVector analytic = nn::loss_and_grad(spec, params, batch).grad;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    const double numeric = numeric_grad(spec, params, batch, j);
    const double denom =
        std::max({std::abs(analytic[j]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
  }
  return worst;
}

// From-scratch average-linkage agglomeration: cluster distances are recomputed
// as explicit means over member pairs at every step (no Lance-Williams), with
// the same (smaller leaf, larger leaf) tie-break.
inline std::vector<std::vector<std::set<int>>> brute_force_agglomerate(
    const Eigen::MatrixXd& d, clustering::Linkage linkage) {
  const int n = static_cast<int>(d.rows());
  std::vector<std::set<int>> clusters;
  for (int i = 0; i < n; ++i) clusters.push_back({i});

  std::vector<std::vector<std::set<int>>> levels;  // levels[k] = p = n-k
  levels.push_back(clusters);
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_j = 1;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double dist = 0.0;
        switch (linkage) {
          case clustering::Linkage::Average: {
            double sum = 0.0;
            for (int a : clusters[i])
              for (int b : clusters[j]) sum += d(a, b);
            dist = sum / static_cast<double>(clusters[i].size() *
                                             clusters[j].size());
            break;
          }
          case clustering::Linkage::Single: {
            dist = std::numeric_limits<double>::infinity();
            for (int a : clusters[i])
              for (int b : clusters[j]) dist = std::min(dist, d(a, b));
            break;
          }
          case clustering::Linkage::Complete: {
            dist = 0.0;
            for (int a : clusters[i])
              for (int b : clusters[j]) dist = std::max(dist, d(a, b));
            break;
          }
        }
        const auto key = std::pair(*clusters[i].begin(), *clusters[j].begin());
        const auto best_key =
            std::pair(*clusters[best_i].begin(), *clusters[best_j].begin());
        const auto ordered = std::minmax(key.first, key.second);
        const auto best_ordered = std::minmax(best_key.first, best_key.second);
        if (dist < best || (dist == best && ordered < best_ordered)) {
          best = dist;
          best_i = i;
          best_j = j;
        }
      }
    }
    clusters[best_i].insert(clusters[best_j].begin(), clusters[best_j].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_j));
    levels.push_back(clusters);
  }
  return levels;
}

// Canonical label vector of a set-of-sets partition, comparable with
// ClusterAssignment::labels.
inline std::vector<int> canonical_labels(
    const std::vector<std::set<int>>& clusters, int n) {
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (int member : clusters[c]) {
      owner[static_cast<std::size_t>(member)] = static_cast<int>(c);
    }
  }
  std::vector<int> relabel(clusters.size(), -1);
  std::vector<int> out(static_cast<std::size_t>(n));
  int next = 0;
  for (int i = 0; i < n; ++i) {
    int& mapped = relabel[static_cast<std::size_t>(owner[static_cast<std::size_t>(i)])];
    if (mapped < 0) mapped = next++;
    out[static_cast<std::size_t>(i)] = mapped;
  }
  return out;
}

}  // namespace fedclust::oracles
