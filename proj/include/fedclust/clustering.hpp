#pragma once

#include <Eigen/Core>
#include <vector>

namespace fedclust::clustering {

enum class Linkage { Average, Single, Complete };

// One agglomeration step. Leaves carry ids 0..n-1; the t-th merge creates
// cluster id n+t. `a` holds the side whose smallest leaf is smaller.
struct Merge {
  int a = 0;
  int b = 0;
  double distance = 0.0;
  int id = 0;
};

struct Dendrogram {
  int n = 0;
  std::vector<Merge> merges;  // exactly n-1
};

// Cut of a dendrogram into p clusters, canonically labeled: client 0 is in
// cluster 0 and each later cluster takes the next unused index on first
// appearance.
struct ClusterAssignment {
  int p = 0;
  std::vector<int> labels;

  std::vector<std::vector<int>> members() const;
};

// Agglomerative hierarchical clustering over a pairwise distance matrix.
// Average linkage maintains the exact mean of cross-cluster member distances
// through the Lance-Williams update; at each step the minimum-distance pair
// merges, ties broken by the lexicographically smallest (smaller leaf, larger
// leaf) representative pair.
Dendrogram agglomerate(const Eigen::MatrixXd& distances,
                       Linkage linkage = Linkage::Average);

// Undo the last p-1 merges.
ClusterAssignment cut(const Dendrogram& dendrogram, int p);

}  // namespace fedclust::clustering
