#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "fedclust/data.hpp"

namespace fedclust::nn {

// Flat 64-bit parameter vector; the unit of upload, aggregation and
// similarity.
using ParamVector = Eigen::VectorXd;

enum class Arch { Logreg, Mlp, Cnn };

// Model zoo. Cnn is the fixed layout
//   conv(c1, 3x3, valid) -> relu -> maxpool(2x2)
//   -> conv(c2, 3x3, valid) -> relu -> maxpool(2x2)
//   -> flatten -> dense(hidden) -> relu -> dense(classes)
// which on 1x28x28 input with c1=32, c2=64 flattens to exactly 1600.
struct ModelSpec {
  Arch arch = Arch::Logreg;
  int channels = 1;
  int height = 28;
  int width = 28;
  int classes = 8;
  int hidden = 128;       // Mlp hidden width / Cnn dense width
  int conv1_kernels = 32;
  int conv2_kernels = 64;

  int features() const { return channels * height * width; }

  static ModelSpec logreg(int features, int classes);
  static ModelSpec mlp(int features, int classes, int hidden = 128);
  static ModelSpec paper_cnn();  // 1x28x28, 32/64 kernels, dense 128, 8 classes
};

std::size_t param_count(const ModelSpec& spec);

// Width of the Cnn flatten stage (c2 * pooled_h * pooled_w).
int flatten_width(const ModelSpec& spec);

// Xavier-uniform weights, zero biases; deterministic in (spec, seed).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Logits, one row per sample.
Eigen::MatrixXd forward(const ModelSpec& spec, const ParamVector& params,
                        const data::Batch& batch);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean softmax cross-entropy over the batch and its full gradient.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       const data::Batch& batch);

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr);

struct TrainResult {
  ParamVector params;
  double mean_loss = 0.0;
};

// `epochs` passes of mini-batch SGD with a seed-determined shuffle per epoch.
// mean_loss averages the batch losses of the final epoch; with epochs == 0 the
// parameters are returned unchanged and mean_loss is the full-dataset loss.
TrainResult local_train(const ModelSpec& spec, const ParamVector& params,
                        const data::ClientShard& shard, int epochs,
                        Eigen::Index batch_size, double lr,
                        std::uint64_t seed);

// Mean cross-entropy over a whole dataset (no gradient).
double dataset_loss(const ModelSpec& spec, const ParamVector& params,
                    const data::LabeledDataset& ds);

// Fraction of samples whose argmax logit matches the label; argmax ties break
// toward the smallest class id.
double evaluate(const ModelSpec& spec, const ParamVector& params,
                const data::LabeledDataset& ds);

}  // namespace fedclust::nn
