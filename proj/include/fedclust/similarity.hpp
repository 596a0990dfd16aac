#pragma once

#include <Eigen/Core>
#include <vector>

#include "fedclust/nn.hpp"

namespace fedclust::similarity {

enum class Basis {
  Params,  // cached upload as-is
  Delta,   // upload minus the global model the client trained from
};

nn::ParamVector basis_vector(const nn::ParamVector& local,
                             const nn::ParamVector& global_prev, Basis basis);

// 1 - a.b / (|a||b|), in [0, 2]. Zero-norm vectors compare at the neutral
// value 1 so that every pair has a finite, ordered distance.
double cosine_distance(const nn::ParamVector& a, const nn::ParamVector& b);

// Symmetric, zero-diagonal pairwise matrix; each unordered pair is computed
// once.
Eigen::MatrixXd distance_matrix(const std::vector<nn::ParamVector>& vectors);

}  // namespace fedclust::similarity
