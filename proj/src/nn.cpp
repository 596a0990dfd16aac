#include "fedclust/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fedclust/rng.hpp"

namespace fedclust::nn {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;
using WeightMap = Eigen::Map<RowMajorMatrix>;
using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;
using BiasMap = Eigen::Map<Eigen::VectorXd>;

// Stride-2 non-overlapping 2x2 pooling; output clamps at 1 so a 1x1 map stays
// 1x1 instead of vanishing.
int pooled_dim(int dim) { return std::max(1, dim / 2); }

struct ConvStage {
  int in_ch, in_h, in_w;
  int out_ch, out_h, out_w;    // after the 3x3 valid convolution
  int pool_h, pool_w;          // after pooling
  Eigen::Index w_off, b_off;
  int patch() const { return in_ch * 9; }
  int positions() const { return out_h * out_w; }
  int pooled_positions() const { return pool_h * pool_w; }
};

struct DenseStage {
  int in, out;
  Eigen::Index w_off, b_off;
};

struct Layout {
  bool has_conv = false;
  bool has_hidden = false;
  ConvStage conv1{}, conv2{};
  DenseStage fc1{}, fc2{};  // Logreg uses fc1 only
  Eigen::Index total = 0;
};

Layout make_layout(const ModelSpec& spec) {
  Layout layout;
  Eigen::Index off = 0;
  auto add_dense = [&off](int in, int out) {
    DenseStage d{in, out, off, off + Eigen::Index(in) * out};
    off += Eigen::Index(in) * out + out;
    return d;
  };

  switch (spec.arch) {
    case Arch::Logreg:
      layout.fc1 = add_dense(spec.features(), spec.classes);
      break;
    case Arch::Mlp:
      layout.has_hidden = true;
      layout.fc1 = add_dense(spec.features(), spec.hidden);
      layout.fc2 = add_dense(spec.hidden, spec.classes);
      break;
    case Arch::Cnn: {
      layout.has_conv = true;
      layout.has_hidden = true;
      auto add_conv = [&off](int in_ch, int in_h, int in_w, int out_ch) {
        if (in_h < 3 || in_w < 3) {
          throw std::invalid_argument("input too small for 3x3 convolution");
        }
        ConvStage c;
        c.in_ch = in_ch;
        c.in_h = in_h;
        c.in_w = in_w;
        c.out_ch = out_ch;
        c.out_h = in_h - 2;
        c.out_w = in_w - 2;
        c.pool_h = pooled_dim(c.out_h);
        c.pool_w = pooled_dim(c.out_w);
        c.w_off = off;
        c.b_off = off + Eigen::Index(out_ch) * c.patch();
        off += Eigen::Index(out_ch) * c.patch() + out_ch;
        return c;
      };
      layout.conv1 =
          add_conv(spec.channels, spec.height, spec.width, spec.conv1_kernels);
      layout.conv2 = add_conv(spec.conv1_kernels, layout.conv1.pool_h,
                              layout.conv1.pool_w, spec.conv2_kernels);
      const int flat =
          layout.conv2.out_ch * layout.conv2.pooled_positions();
      layout.fc1 = add_dense(flat, spec.hidden);
      layout.fc2 = add_dense(spec.hidden, spec.classes);
      break;
    }
  }
  layout.total = off;
  return layout;
}

void check_shapes(const ModelSpec& spec, const Layout& layout,
                  const ParamVector& params, const data::Batch& batch) {
  if (params.size() != layout.total) {
    throw std::invalid_argument(
        "parameter vector length " + std::to_string(params.size()) +
        " does not match model (" + std::to_string(layout.total) + ")");
  }
  if (batch.inputs.rows() < 1) {
    throw std::invalid_argument("empty batch");
  }
  if (batch.inputs.cols() != spec.features()) {
    throw std::invalid_argument(
        "batch feature width " + std::to_string(batch.inputs.cols()) +
        " does not match model input " + std::to_string(spec.features()));
  }
  if (batch.inputs.rows() != static_cast<Eigen::Index>(batch.labels.size())) {
    throw std::invalid_argument("batch label count mismatch");
  }
  for (int label : batch.labels) {
    if (label < 0 || label >= spec.classes) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " outside [0, " +
                                  std::to_string(spec.classes) + ")");
    }
  }
}

// Columns of conv activations are indexed sample-major: sample * positions +
// (row * width + col).
void im2col(const Eigen::MatrixXd& activations, const ConvStage& c,
            bool from_batch_rows, Eigen::MatrixXd& patches) {
  const Eigen::Index batch = from_batch_rows
                                 ? activations.rows()
                                 : activations.cols() / (c.in_h * c.in_w);
  patches.resize(c.patch(), batch * c.positions());
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int oh = 0; oh < c.out_h; ++oh) {
      for (int ow = 0; ow < c.out_w; ++ow) {
        const Eigen::Index col = s * c.positions() + oh * c.out_w + ow;
        for (int ic = 0; ic < c.in_ch; ++ic) {
          for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
              const int h = oh + kh;
              const int w = ow + kw;
              const double v =
                  from_batch_rows
                      ? activations(s, Eigen::Index(ic) * c.in_h * c.in_w +
                                           Eigen::Index(h) * c.in_w + w)
                      : activations(ic, s * c.in_h * c.in_w +
                                            Eigen::Index(h) * c.in_w + w);
              patches(ic * 9 + kh * 3 + kw, col) = v;
            }
          }
        }
      }
    }
  }
}

// Scatter-add of patch gradients back onto the (channel x sample*pixel)
// activation gradient.
void col2im(const Eigen::MatrixXd& dpatches, const ConvStage& c,
            Eigen::MatrixXd& dactivations) {
  const Eigen::Index batch = dpatches.cols() / c.positions();
  dactivations.setZero(c.in_ch, batch * c.in_h * c.in_w);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int oh = 0; oh < c.out_h; ++oh) {
      for (int ow = 0; ow < c.out_w; ++ow) {
        const Eigen::Index col = s * c.positions() + oh * c.out_w + ow;
        for (int ic = 0; ic < c.in_ch; ++ic) {
          for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
              dactivations(ic, s * c.in_h * c.in_w +
                                   Eigen::Index(oh + kh) * c.in_w + (ow + kw)) +=
                  dpatches(ic * 9 + kh * 3 + kw, col);
            }
          }
        }
      }
    }
  }
}

// 2x2 max pooling over (channel x sample*pixel) activations. `argmax` stores,
// per pooled cell, the winning input pixel's column index.
void maxpool(const Eigen::MatrixXd& activations, const ConvStage& c,
             Eigen::MatrixXd& pooled,
             Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>&
                 argmax) {
  const Eigen::Index batch = activations.cols() / (c.out_h * c.out_w);
  pooled.resize(c.out_ch, batch * c.pooled_positions());
  argmax.resize(c.out_ch, batch * c.pooled_positions());
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int ph = 0; ph < c.pool_h; ++ph) {
      for (int pw = 0; pw < c.pool_w; ++pw) {
        const Eigen::Index out_col =
            s * c.pooled_positions() + Eigen::Index(ph) * c.pool_w + pw;
        const int h0 = ph * 2;
        const int w0 = pw * 2;
        const int h1 = std::min(h0 + 2, c.out_h);
        const int w1 = std::min(w0 + 2, c.out_w);
        for (int oc = 0; oc < c.out_ch; ++oc) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_col = 0;
          for (int h = h0; h < h1; ++h) {
            for (int w = w0; w < w1; ++w) {
              const Eigen::Index in_col =
                  s * c.positions() + Eigen::Index(h) * c.out_w + w;
              if (activations(oc, in_col) > best) {
                best = activations(oc, in_col);
                best_col = in_col;
              }
            }
          }
          pooled(oc, out_col) = best;
          argmax(oc, out_col) = best_col;
        }
      }
    }
  }
}

struct ForwardScratch {
  // Conv path (Cnn only)
  Eigen::MatrixXd patches1, conv1_act, pooled1;
  Eigen::MatrixXd patches2, conv2_act, pooled2;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax1, argmax2;
  Eigen::MatrixXd flat;    // batch x flatten width (Cnn) or the input itself
  Eigen::MatrixXd hidden;  // post-ReLU hidden activations (Mlp/Cnn)
  Eigen::MatrixXd logits;
};

void forward_pass(const Layout& layout,
                  const ParamVector& params, const data::Batch& batch,
                  ForwardScratch& s) {
  const Eigen::Index n = batch.inputs.rows();
  const double* p = params.data();

  const Eigen::MatrixXd* dense_in = &batch.inputs;
  if (layout.has_conv) {
    const ConvStage& c1 = layout.conv1;
    const ConvStage& c2 = layout.conv2;
    ConstWeightMap w1(p + c1.w_off, c1.out_ch, c1.patch());
    ConstBiasMap b1(p + c1.b_off, c1.out_ch);
    im2col(batch.inputs, c1, /*from_batch_rows=*/true, s.patches1);
    s.conv1_act.noalias() = w1 * s.patches1;
    s.conv1_act.colwise() += b1;
    s.conv1_act = s.conv1_act.cwiseMax(0.0);
    maxpool(s.conv1_act, c1, s.pooled1, s.argmax1);

    ConstWeightMap w2(p + c2.w_off, c2.out_ch, c2.patch());
    ConstBiasMap b2(p + c2.b_off, c2.out_ch);
    im2col(s.pooled1, c2, /*from_batch_rows=*/false, s.patches2);
    s.conv2_act.noalias() = w2 * s.patches2;
    s.conv2_act.colwise() += b2;
    s.conv2_act = s.conv2_act.cwiseMax(0.0);
    maxpool(s.conv2_act, c2, s.pooled2, s.argmax2);

    const int positions = c2.pooled_positions();
    s.flat.resize(n, Eigen::Index(c2.out_ch) * positions);
    for (Eigen::Index row = 0; row < n; ++row) {
      for (int oc = 0; oc < c2.out_ch; ++oc) {
        for (int pos = 0; pos < positions; ++pos) {
          s.flat(row, Eigen::Index(oc) * positions + pos) =
              s.pooled2(oc, row * positions + pos);
        }
      }
    }
    dense_in = &s.flat;
  }

  if (layout.has_hidden) {
    ConstWeightMap w1(p + layout.fc1.w_off, layout.fc1.out, layout.fc1.in);
    ConstBiasMap b1(p + layout.fc1.b_off, layout.fc1.out);
    s.hidden.noalias() = *dense_in * w1.transpose();
    s.hidden.rowwise() += b1.transpose();
    s.hidden = s.hidden.cwiseMax(0.0);

    ConstWeightMap w2(p + layout.fc2.w_off, layout.fc2.out, layout.fc2.in);
    ConstBiasMap b2(p + layout.fc2.b_off, layout.fc2.out);
    s.logits.noalias() = s.hidden * w2.transpose();
    s.logits.rowwise() += b2.transpose();
  } else {
    ConstWeightMap w1(p + layout.fc1.w_off, layout.fc1.out, layout.fc1.in);
    ConstBiasMap b1(p + layout.fc1.b_off, layout.fc1.out);
    s.logits.noalias() = *dense_in * w1.transpose();
    s.logits.rowwise() += b1.transpose();
  }
}

// Mean cross-entropy of logits against labels; optionally also the gradient
// of the loss w.r.t. the logits.
double softmax_xent(const Eigen::MatrixXd& logits,
                    const std::vector<int>& labels,
                    Eigen::MatrixXd* dlogits) {
  const Eigen::Index n = logits.rows();
  Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Eigen::MatrixXd exps = shifted.array().exp();
  Eigen::VectorXd sums = exps.rowwise().sum();

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += std::log(sums[i]) - shifted(i, labels[static_cast<std::size_t>(i)]);
  }
  loss /= static_cast<double>(n);

  if (dlogits) {
    *dlogits = exps.array().colwise() / sums.array();
    for (Eigen::Index i = 0; i < n; ++i) {
      (*dlogits)(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    *dlogits /= static_cast<double>(n);
  }
  return loss;
}

}  // namespace

ModelSpec ModelSpec::logreg(int features, int classes) {
  ModelSpec spec;
  spec.arch = Arch::Logreg;
  spec.channels = 1;
  spec.height = 1;
  spec.width = features;
  spec.classes = classes;
  return spec;
}

ModelSpec ModelSpec::mlp(int features, int classes, int hidden) {
  ModelSpec spec;
  spec.arch = Arch::Mlp;
  spec.channels = 1;
  spec.height = 1;
  spec.width = features;
  spec.classes = classes;
  spec.hidden = hidden;
  return spec;
}

ModelSpec ModelSpec::paper_cnn() {
  ModelSpec spec;
  spec.arch = Arch::Cnn;
  return spec;
}

std::size_t param_count(const ModelSpec& spec) {
  return static_cast<std::size_t>(make_layout(spec).total);
}

int flatten_width(const ModelSpec& spec) {
  if (spec.arch != Arch::Cnn) {
    throw std::invalid_argument("flatten_width applies to the Cnn layout");
  }
  const Layout layout = make_layout(spec);
  return layout.conv2.out_ch * layout.conv2.pooled_positions();
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  const Layout layout = make_layout(spec);
  ParamVector params = ParamVector::Zero(layout.total);
  rng::Rng rng(rng::derive_seed(seed, "init_params"));

  auto fill_uniform = [&](Eigen::Index off, Eigen::Index count, double bound) {
    for (Eigen::Index i = 0; i < count; ++i) {
      params[off + i] = rng.next_uniform(-bound, bound);
    }
  };
  auto xavier = [](double fan_in, double fan_out) {
    return std::sqrt(6.0 / (fan_in + fan_out));
  };

  if (layout.has_conv) {
    for (const ConvStage* c : {&layout.conv1, &layout.conv2}) {
      fill_uniform(c->w_off, Eigen::Index(c->out_ch) * c->patch(),
                   xavier(c->patch(), c->out_ch * 9));
    }
  }
  fill_uniform(layout.fc1.w_off,
               Eigen::Index(layout.fc1.in) * layout.fc1.out,
               xavier(layout.fc1.in, layout.fc1.out));
  if (layout.has_hidden) {
    fill_uniform(layout.fc2.w_off,
                 Eigen::Index(layout.fc2.in) * layout.fc2.out,
                 xavier(layout.fc2.in, layout.fc2.out));
  }
  return params;
}

Eigen::MatrixXd forward(const ModelSpec& spec, const ParamVector& params,
                        const data::Batch& batch) {
  const Layout layout = make_layout(spec);
  check_shapes(spec, layout, params, batch);
  ForwardScratch scratch;
  forward_pass(layout, params, batch, scratch);
  return scratch.logits;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       const data::Batch& batch) {
  const Layout layout = make_layout(spec);
  check_shapes(spec, layout, params, batch);
  ForwardScratch s;
  forward_pass(layout, params, batch, s);

  LossGrad result;
  result.grad = ParamVector::Zero(layout.total);
  double* g = result.grad.data();
  const double* p = params.data();

  Eigen::MatrixXd dlogits;
  result.loss = softmax_xent(s.logits, batch.labels, &dlogits);

  const Eigen::MatrixXd* dense_in = layout.has_conv ? &s.flat : &batch.inputs;
  Eigen::MatrixXd ddense_in;  // gradient flowing below the dense stack

  if (layout.has_hidden) {
    ConstWeightMap w2(p + layout.fc2.w_off, layout.fc2.out, layout.fc2.in);
    WeightMap dw2(g + layout.fc2.w_off, layout.fc2.out, layout.fc2.in);
    BiasMap db2(g + layout.fc2.b_off, layout.fc2.out);
    dw2.noalias() = dlogits.transpose() * s.hidden;
    db2 = dlogits.colwise().sum();

    Eigen::MatrixXd dhidden = dlogits * w2;
    dhidden = (s.hidden.array() > 0.0).select(dhidden, 0.0);

    ConstWeightMap w1(p + layout.fc1.w_off, layout.fc1.out, layout.fc1.in);
    WeightMap dw1(g + layout.fc1.w_off, layout.fc1.out, layout.fc1.in);
    BiasMap db1(g + layout.fc1.b_off, layout.fc1.out);
    dw1.noalias() = dhidden.transpose() * (*dense_in);
    db1 = dhidden.colwise().sum();
    if (layout.has_conv) ddense_in.noalias() = dhidden * w1;
  } else {
    WeightMap dw1(g + layout.fc1.w_off, layout.fc1.out, layout.fc1.in);
    BiasMap db1(g + layout.fc1.b_off, layout.fc1.out);
    dw1.noalias() = dlogits.transpose() * (*dense_in);
    db1 = dlogits.colwise().sum();
  }

  if (layout.has_conv) {
    const ConvStage& c1 = layout.conv1;
    const ConvStage& c2 = layout.conv2;
    const Eigen::Index n = batch.inputs.rows();

    // Unflatten to (channel x sample*pixel).
    const int positions2 = c2.pooled_positions();
    Eigen::MatrixXd dpooled2 =
        Eigen::MatrixXd::Zero(c2.out_ch, n * positions2);
    for (Eigen::Index row = 0; row < n; ++row) {
      for (int oc = 0; oc < c2.out_ch; ++oc) {
        for (int pos = 0; pos < positions2; ++pos) {
          dpooled2(oc, row * positions2 + pos) =
              ddense_in(row, Eigen::Index(oc) * positions2 + pos);
        }
      }
    }

    // Route pooled gradients to the argmax cells, then through ReLU.
    Eigen::MatrixXd dconv2 =
        Eigen::MatrixXd::Zero(c2.out_ch, s.conv2_act.cols());
    for (int oc = 0; oc < c2.out_ch; ++oc) {
      for (Eigen::Index col = 0; col < dpooled2.cols(); ++col) {
        dconv2(oc, s.argmax2(oc, col)) += dpooled2(oc, col);
      }
    }
    dconv2 = (s.conv2_act.array() > 0.0).select(dconv2, 0.0);

    ConstWeightMap w2(p + c2.w_off, c2.out_ch, c2.patch());
    WeightMap dw2(g + c2.w_off, c2.out_ch, c2.patch());
    BiasMap db2(g + c2.b_off, c2.out_ch);
    dw2.noalias() = dconv2 * s.patches2.transpose();
    db2 = dconv2.rowwise().sum();

    Eigen::MatrixXd dpatches2 = w2.transpose() * dconv2;
    Eigen::MatrixXd dpooled1;
    col2im(dpatches2, c2, dpooled1);

    Eigen::MatrixXd dconv1 =
        Eigen::MatrixXd::Zero(c1.out_ch, s.conv1_act.cols());
    for (int oc = 0; oc < c1.out_ch; ++oc) {
      for (Eigen::Index col = 0; col < dpooled1.cols(); ++col) {
        dconv1(oc, s.argmax1(oc, col)) += dpooled1(oc, col);
      }
    }
    dconv1 = (s.conv1_act.array() > 0.0).select(dconv1, 0.0);

    WeightMap dw1(g + c1.w_off, c1.out_ch, c1.patch());
    BiasMap db1(g + c1.b_off, c1.out_ch);
    dw1.noalias() = dconv1 * s.patches1.transpose();
    db1 = dconv1.rowwise().sum();
  }

  return result;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("sgd_step length mismatch");
  }
  return params - lr * grad;
}

TrainResult local_train(const ModelSpec& spec, const ParamVector& params,
                        const data::ClientShard& shard, int epochs,
                        Eigen::Index batch_size, double lr,
                        std::uint64_t seed) {
  if (shard.sample_count() < 1) {
    throw std::invalid_argument("cannot train on an empty shard");
  }
  TrainResult result;
  result.params = params;
  if (epochs == 0) {
    result.mean_loss = dataset_loss(spec, params, shard.dataset);
    return result;
  }

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto epoch_batches = data::batches(
        shard, batch_size,
        rng::derive_seed(seed, "epoch_shuffle",
                         static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (const auto& batch : epoch_batches) {
      const LossGrad lg = loss_and_grad(spec, result.params, batch);
      result.params = sgd_step(result.params, lg.grad, lr);
      loss_sum += lg.loss;
    }
    if (epoch == epochs - 1) {
      result.mean_loss = loss_sum / static_cast<double>(epoch_batches.size());
    }
  }
  return result;
}

double dataset_loss(const ModelSpec& spec, const ParamVector& params,
                    const data::LabeledDataset& ds) {
  if (ds.count() < 1) throw std::invalid_argument("empty dataset");
  const Layout layout = make_layout(spec);
  constexpr Eigen::Index kChunk = 256;
  double weighted = 0.0;
  ForwardScratch scratch;
  for (Eigen::Index start = 0; start < ds.count(); start += kChunk) {
    const Eigen::Index size = std::min(kChunk, ds.count() - start);
    data::Batch chunk;
    chunk.inputs = ds.images.middleRows(start, size);
    chunk.labels.assign(ds.labels.begin() + start,
                        ds.labels.begin() + start + size);
    check_shapes(spec, layout, params, chunk);
    forward_pass(layout, params, chunk, scratch);
    weighted += softmax_xent(scratch.logits, chunk.labels, nullptr) *
                static_cast<double>(size);
  }
  return weighted / static_cast<double>(ds.count());
}

double evaluate(const ModelSpec& spec, const ParamVector& params,
                const data::LabeledDataset& ds) {
  if (ds.count() < 1) throw std::invalid_argument("empty dataset");
  const Layout layout = make_layout(spec);
  constexpr Eigen::Index kChunk = 256;
  long correct = 0;
  ForwardScratch scratch;
  for (Eigen::Index start = 0; start < ds.count(); start += kChunk) {
    const Eigen::Index size = std::min(kChunk, ds.count() - start);
    data::Batch chunk;
    chunk.inputs = ds.images.middleRows(start, size);
    chunk.labels.assign(ds.labels.begin() + start,
                        ds.labels.begin() + start + size);
    check_shapes(spec, layout, params, chunk);
    forward_pass(layout, params, chunk, scratch);
    for (Eigen::Index i = 0; i < size; ++i) {
      int best = 0;  // ties break toward the smallest class id
      for (int c = 1; c < spec.classes; ++c) {
        if (scratch.logits(i, c) > scratch.logits(i, best)) best = c;
      }
      if (best == chunk.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.count());
}

}  // namespace fedclust::nn
