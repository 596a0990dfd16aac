#include "fedclust/clustering.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fedclust::clustering {

namespace {

struct Active {
  int id;    // dendrogram id (leaf or n+t)
  int rep;   // smallest leaf inside; orders tie-broken merges
  int size;
};

void validate(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols() || d.rows() < 2) {
    throw std::invalid_argument("distance matrix must be square, n >= 2");
  }
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j))) {
        throw std::invalid_argument("distance matrix has non-finite entries");
      }
      if (std::abs(d(i, j) - d(j, i)) > 1e-12) {
        throw std::invalid_argument("distance matrix is asymmetric");
      }
    }
  }
}

}  // namespace

std::vector<std::vector<int>> ClusterAssignment::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  }
  return out;
}

Dendrogram agglomerate(const Eigen::MatrixXd& distances, Linkage linkage) {
  validate(distances);
  const int n = static_cast<int>(distances.rows());

  std::vector<Active> active(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = {i, i, 1};
  Eigen::MatrixXd d = distances;  // working copy indexed by active slot

  Dendrogram dendro;
  dendro.n = n;
  dendro.merges.reserve(static_cast<std::size_t>(n - 1));

  for (int t = 0; t < n - 1; ++t) {
    // Minimum-distance active pair; ties go to the lexicographically smallest
    // (smaller rep, larger rep).
    std::size_t best_i = 0, best_j = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const auto [lo, hi] = std::minmax(active[i].rep, active[j].rep);
        const auto [blo, bhi] =
            std::minmax(active[best_i].rep, active[best_j].rep);
        const double dist =
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (dist < best ||
            (dist == best && std::pair(lo, hi) < std::pair(blo, bhi))) {
          best = dist;
          best_i = i;
          best_j = j;
        }
      }
    }

    const Active a = active[best_i];
    const Active b = active[best_j];
    Merge merge;
    merge.a = a.rep <= b.rep ? a.id : b.id;
    merge.b = a.rep <= b.rep ? b.id : a.id;
    merge.distance = best;
    merge.id = n + t;
    dendro.merges.push_back(merge);

    // Lance-Williams update of slot best_i; slot best_j retires.
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == best_i || k == best_j) continue;
      const double dka = d(static_cast<Eigen::Index>(k),
                           static_cast<Eigen::Index>(best_i));
      const double dkb = d(static_cast<Eigen::Index>(k),
                           static_cast<Eigen::Index>(best_j));
      double merged = 0.0;
      switch (linkage) {
        case Linkage::Average:
          merged = (a.size * dka + b.size * dkb) /
                   static_cast<double>(a.size + b.size);
          break;
        case Linkage::Single:
          merged = std::min(dka, dkb);
          break;
        case Linkage::Complete:
          merged = std::max(dka, dkb);
          break;
      }
      d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(best_i)) =
          merged;
      d(static_cast<Eigen::Index>(best_i), static_cast<Eigen::Index>(k)) =
          merged;
    }
    active[best_i] = {merge.id, std::min(a.rep, b.rep), a.size + b.size};

    // Retire slot best_j by swapping in the last slot.
    const std::size_t last = active.size() - 1;
    if (best_j != last) {
      active[best_j] = active[last];
      for (std::size_t k = 0; k < last; ++k) {
        d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(best_j)) =
            d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(last));
        d(static_cast<Eigen::Index>(best_j), static_cast<Eigen::Index>(k)) =
            d(static_cast<Eigen::Index>(last), static_cast<Eigen::Index>(k));
      }
    }
    active.pop_back();
  }
  return dendro;
}

ClusterAssignment cut(const Dendrogram& dendrogram, int p) {
  const int n = dendrogram.n;
  if (p < 1 || p > n) {
    throw std::invalid_argument("cluster count " + std::to_string(p) +
                                " outside [1, " + std::to_string(n) + "]");
  }

  // Apply the first n-p merges; dendrogram id -> leaves via union-find.
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (int t = 0; t < n - p; ++t) {
    const Merge& m = dendrogram.merges[static_cast<std::size_t>(t)];
    parent[static_cast<std::size_t>(find(m.a))] = m.id;
    parent[static_cast<std::size_t>(find(m.b))] = m.id;
  }

  ClusterAssignment assignment;
  assignment.p = p;
  assignment.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> root_label(static_cast<std::size_t>(2 * n - 1), -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (root_label[static_cast<std::size_t>(root)] < 0) {
      root_label[static_cast<std::size_t>(root)] = next++;
    }
    assignment.labels[static_cast<std::size_t>(i)] =
        root_label[static_cast<std::size_t>(root)];
  }
  return assignment;
}

}  // namespace fedclust::clustering
