#include "fedclust/similarity.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedclust::similarity {

nn::ParamVector basis_vector(const nn::ParamVector& local,
                             const nn::ParamVector& global_prev, Basis basis) {
  if (basis == Basis::Params) return local;
  if (local.size() != global_prev.size()) {
    throw std::invalid_argument("basis_vector length mismatch");
  }
  return local - global_prev;
}

double cosine_distance(const nn::ParamVector& a, const nn::ParamVector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double d = 1.0 - a.dot(b) / (na * nb);
  return std::clamp(d, 0.0, 2.0);
}

Eigen::MatrixXd distance_matrix(const std::vector<nn::ParamVector>& vectors) {
  const auto n = static_cast<Eigen::Index>(vectors.size());
  if (n < 2) {
    throw std::invalid_argument("distance matrix needs at least 2 vectors");
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw std::invalid_argument("distance matrix vectors differ in length");
    }
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = cosine_distance(vectors[static_cast<std::size_t>(i)],
                                vectors[static_cast<std::size_t>(j)]);
      d(j, i) = d(i, j);
    }
  }
  return d;
}

}  // namespace fedclust::similarity
