#pragma once

#include "pipo/common.hpp"

#include <random>
#include <string>
#include <vector>

// Minimal layer toolkit for the learned proximal networks. Every layer has a
// pure forward pass that fills an optional cache and a backward pass that
// accumulates parameter gradients and returns the input gradient.

namespace pipo::nn {

enum class Mode { train, eval };

/// A learnable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string param_name, Index rows, Index cols)
      : name(std::move(param_name)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Batch of multi-channel images. `data` is channels x (batch*height*width);
/// column b*H*W + r*W + c is pixel (r, c) of batch item b, so a single-channel
/// map shares its buffer layout with a matrix of row-major patch vectors.
struct FeatureMap {
  Matrix data;
  Index batch = 0;
  Index height = 0;
  Index width = 0;

  Index channels() const { return data.rows(); }
  Index pixels() const { return height * width; }

  static FeatureMap zeros(Index channels, Index batch, Index height, Index width);
};

/// 3x3 convolution, stride 1, same size output with reflect padding.
/// Weight layout: out x (9*in); column block o = (dy+1)*3 + (dx+1).
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(const std::string& name, Index in_channels, Index out_channels, bool with_bias);

  FeatureMap forward(const FeatureMap& in) const;
  /// Accumulates weight/bias gradients; returns dL/d(in).
  FeatureMap backward(const FeatureMap& in, const FeatureMap& dout);

  void init_he(std::mt19937_64& rng);

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  bool has_bias() const { return has_bias_; }

  Param weight;
  Param bias;  // out x 1; unused when has_bias() is false

 private:
  Index in_ = 0;
  Index out_ = 0;
  bool has_bias_ = false;
};

/// Batch statistics gathered during a training-mode pass; applied to the
/// running averages only when committed.
struct BnBatchStats {
  Vector mean;
  Vector var;  // unbiased
};

class BatchNorm {
 public:
  struct Cache {
    Matrix xhat;
    Vector inv_std;
    Mode mode = Mode::eval;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, Index channels);

  FeatureMap forward(const FeatureMap& in, Mode mode, Cache* cache, BnBatchStats* stats) const;
  FeatureMap backward(const Cache& cache, const FeatureMap& dout);
  void commit(const BnBatchStats& stats);

  Param gamma;
  Param beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Learned proximal network:
///   out = v + conv2(relu(bn2(res2(relu(res1(relu(bn1(conv1(v)))))))))
/// with res(h) = h + conv_b(relu(bn(conv_a(h)))).
class ProxNet {
 public:
  struct ResCache {
    FeatureMap in, a, bn_out, relu_out;
    BatchNorm::Cache bn;
  };
  struct Cache {
    FeatureMap v, c1, bn1_out, h1, r1_out, h3, r2_out, bn2_out, h5;
    BatchNorm::Cache bn1, bn2;
    ResCache res1, res2;
  };
  /// Batch statistics in layer order: bn1, res1.bn, res2.bn, bn2.
  using Stats = std::vector<BnBatchStats>;

  ProxNet() = default;
  ProxNet(const std::string& name, Index channels);

  FeatureMap forward(const FeatureMap& v, Mode mode, Cache* cache = nullptr, Stats* stats = nullptr) const;
  FeatureMap backward(const Cache& cache, const FeatureMap& dout);
  void commit(const Stats& stats);

  /// He-normal convolutions, unit BN scale, and a zero output convolution so
  /// the network starts as the identity map.
  void init(std::mt19937_64& rng);
  /// Every parameter zero: the residual branch vanishes and out == v.
  void zero();

  Index channels() const { return channels_; }
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  struct Buffers {
    std::string name;
    Vector* values;
  };
  std::vector<Buffers> buffers();

  Conv3x3 conv1;
  BatchNorm bn1;
  Conv3x3 res1_a, res1_b;
  BatchNorm res1_bn;
  Conv3x3 res2_a, res2_b;
  BatchNorm res2_bn;
  BatchNorm bn2;
  Conv3x3 conv2;

 private:
  FeatureMap res_forward(const Conv3x3& a, const BatchNorm& bn, const Conv3x3& b, const FeatureMap& in, Mode mode,
                         ResCache* cache, BnBatchStats* stats) const;
  FeatureMap res_backward(Conv3x3& a, BatchNorm& bn, Conv3x3& b, const ResCache& cache, const FeatureMap& dout);

  Index channels_ = 0;
};

FeatureMap relu(const FeatureMap& in);
/// dout masked by in > 0.
FeatureMap relu_backward(const FeatureMap& in, const FeatureMap& dout);

}  // namespace pipo::nn
