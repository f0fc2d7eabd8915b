#include "pipo/nn.hpp"

#include <algorithm>
#include <cmath>

namespace pipo::nn {

namespace {

constexpr Index kTile = 1024;

// src[o * HW + p] = in-image pixel index read by tap o at output pixel p.
std::vector<Index> neighbor_table(Index height, Index width) {
  if (height < 2 || width < 2) throw DimensionError("3x3 reflect convolution needs at least 2x2 inputs");
  std::vector<Index> table(static_cast<std::size_t>(9 * height * width));
  auto reflect = [](Index i, Index len) { return i < 0 ? -i : (i >= len ? 2 * (len - 1) - i : i); };
  for (Index dy = -1; dy <= 1; ++dy) {
    for (Index dx = -1; dx <= 1; ++dx) {
      const Index o = (dy + 1) * 3 + (dx + 1);
      for (Index r = 0; r < height; ++r) {
        const Index sr = reflect(r + dy, height);
        for (Index c = 0; c < width; ++c)
          table[static_cast<std::size_t>(o * height * width + r * width + c)] = sr * width + reflect(c + dx, width);
      }
    }
  }
  return table;
}

void build_columns(const FeatureMap& in, const std::vector<Index>& table, Index begin, Index count, Matrix& col) {
  const Index cin = in.channels();
  const Index hw = in.pixels();
  col.resize(9 * cin, count);
  for (Index t = 0; t < count; ++t) {
    const Index g = begin + t;
    const Index base = (g / hw) * hw;
    const Index p = g % hw;
    for (Index o = 0; o < 9; ++o) {
      const Index src = base + table[static_cast<std::size_t>(o * hw + p)];
      col.block(o * cin, t, cin, 1) = in.data.col(src);
    }
  }
}

}  // namespace

FeatureMap FeatureMap::zeros(Index channels, Index batch, Index height, Index width) {
  FeatureMap f;
  f.data = Matrix::Zero(channels, batch * height * width);
  f.batch = batch;
  f.height = height;
  f.width = width;
  return f;
}

// ---------------------------------------------------------------------------
// Conv3x3

Conv3x3::Conv3x3(const std::string& name, Index in_channels, Index out_channels, bool with_bias)
    : weight(name + ".weight", out_channels, 9 * in_channels),
      bias(name + ".bias", with_bias ? out_channels : 0, with_bias ? 1 : 0),
      in_(in_channels),
      out_(out_channels),
      has_bias_(with_bias) {}

void Conv3x3::init_he(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(9 * in_)));
  for (Index j = 0; j < weight.value.cols(); ++j)
    for (Index i = 0; i < weight.value.rows(); ++i) weight.value(i, j) = gauss(rng);
  if (has_bias_) bias.value.setZero();
}

FeatureMap Conv3x3::forward(const FeatureMap& in) const {
  if (in.channels() != in_) throw DimensionError("conv: channel mismatch");
  const auto table = neighbor_table(in.height, in.width);
  FeatureMap out;
  out.batch = in.batch;
  out.height = in.height;
  out.width = in.width;
  const Index total = in.data.cols();
  out.data.resize(out_, total);
  Matrix col;
  for (Index begin = 0; begin < total; begin += kTile) {
    const Index count = std::min(kTile, total - begin);
    build_columns(in, table, begin, count, col);
    out.data.middleCols(begin, count).noalias() = weight.value * col;
  }
  if (has_bias_) out.data.colwise() += bias.value.col(0);
  return out;
}

FeatureMap Conv3x3::backward(const FeatureMap& in, const FeatureMap& dout) {
  const auto table = neighbor_table(in.height, in.width);
  const Index hw = in.pixels();
  const Index total = in.data.cols();
  FeatureMap din = FeatureMap::zeros(in_, in.batch, in.height, in.width);
  Matrix col, dcol;
  for (Index begin = 0; begin < total; begin += kTile) {
    const Index count = std::min(kTile, total - begin);
    build_columns(in, table, begin, count, col);
    const auto dtile = dout.data.middleCols(begin, count);
    weight.grad.noalias() += dtile * col.transpose();
    dcol.noalias() = weight.value.transpose() * dtile;
    for (Index t = 0; t < count; ++t) {
      const Index g = begin + t;
      const Index base = (g / hw) * hw;
      const Index p = g % hw;
      for (Index o = 0; o < 9; ++o) {
        const Index src = base + table[static_cast<std::size_t>(o * hw + p)];
        din.data.col(src) += dcol.block(o * in_, t, in_, 1);
      }
    }
  }
  if (has_bias_) bias.grad.col(0) += dout.data.rowwise().sum();
  return din;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(const std::string& name, Index channels)
    : gamma(name + ".gamma", channels, 1),
      beta(name + ".beta", channels, 1),
      running_mean(Vector::Zero(channels)),
      running_var(Vector::Ones(channels)) {
  gamma.value.setOnes();
}

FeatureMap BatchNorm::forward(const FeatureMap& in, Mode mode, Cache* cache, BnBatchStats* stats) const {
  const Index count = in.data.cols();
  Vector mean, inv_std;
  if (mode == Mode::train) {
    mean = in.data.rowwise().mean();
    const Matrix centered = in.data.colwise() - mean;
    const Vector var = centered.array().square().rowwise().sum().matrix() / static_cast<double>(count);
    inv_std = (var.array() + eps).rsqrt().matrix();
    if (stats) {
      stats->mean = mean;
      stats->var = count > 1 ? Vector(var * (static_cast<double>(count) / static_cast<double>(count - 1))) : var;
    }
  } else {
    mean = running_mean;
    inv_std = (running_var.array() + eps).rsqrt().matrix();
  }
  Matrix xhat = (in.data.colwise() - mean).array().colwise() * inv_std.array();
  FeatureMap out;
  out.batch = in.batch;
  out.height = in.height;
  out.width = in.width;
  out.data = (xhat.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

FeatureMap BatchNorm::backward(const Cache& cache, const FeatureMap& dout) {
  const Matrix& xhat = cache.xhat;
  gamma.grad.col(0) += (dout.data.array() * xhat.array()).rowwise().sum().matrix();
  beta.grad.col(0) += dout.data.rowwise().sum();

  FeatureMap din;
  din.batch = dout.batch;
  din.height = dout.height;
  din.width = dout.width;
  const Matrix dxhat = dout.data.array().colwise() * gamma.value.col(0).array();
  if (cache.mode == Mode::eval) {
    din.data = dxhat.array().colwise() * cache.inv_std.array();
    return din;
  }
  const auto count = static_cast<double>(dout.data.cols());
  const Vector sum_dxhat = dxhat.rowwise().sum();
  const Vector sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum().matrix();
  din.data = (count * dxhat.array()).colwise() - sum_dxhat.array();
  din.data.array() -= xhat.array().colwise() * sum_dxhat_xhat.array();
  din.data.array().colwise() *= cache.inv_std.array() / count;
  return din;
}

void BatchNorm::commit(const BnBatchStats& stats) {
  running_mean = (1.0 - momentum) * running_mean + momentum * stats.mean;
  running_var = (1.0 - momentum) * running_var + momentum * stats.var;
}

// ---------------------------------------------------------------------------

FeatureMap relu(const FeatureMap& in) {
  FeatureMap out = in;
  out.data = in.data.cwiseMax(0.0);
  return out;
}

FeatureMap relu_backward(const FeatureMap& in, const FeatureMap& dout) {
  FeatureMap d = dout;
  d.data = (in.data.array() > 0.0).select(dout.data, 0.0);
  return d;
}

// ---------------------------------------------------------------------------
// ProxNet

ProxNet::ProxNet(const std::string& name, Index channels)
    : conv1(name + ".conv1", 1, channels, true),
      bn1(name + ".bn1", channels),
      res1_a(name + ".res1.conv_a", channels, channels, false),
      res1_b(name + ".res1.conv_b", channels, channels, false),
      res1_bn(name + ".res1.bn", channels),
      res2_a(name + ".res2.conv_a", channels, channels, false),
      res2_b(name + ".res2.conv_b", channels, channels, false),
      res2_bn(name + ".res2.bn", channels),
      bn2(name + ".bn2", channels),
      conv2(name + ".conv2", channels, 1, true),
      channels_(channels) {}

void ProxNet::init(std::mt19937_64& rng) {
  conv1.init_he(rng);
  res1_a.init_he(rng);
  res1_b.init_he(rng);
  res2_a.init_he(rng);
  res2_b.init_he(rng);
  for (BatchNorm* bn : {&bn1, &res1_bn, &res2_bn, &bn2}) {
    bn->gamma.value.setOnes();
    bn->beta.value.setZero();
  }
  conv2.weight.value.setZero();
  conv2.bias.value.setZero();
}

void ProxNet::zero() {
  for (Param* p : params()) p->value.setZero();
}

std::vector<Param*> ProxNet::params() {
  return {&conv1.weight,    &conv1.bias,      &bn1.gamma,      &bn1.beta,       &res1_a.weight,
          &res1_bn.gamma,   &res1_bn.beta,    &res1_b.weight,  &res2_a.weight,  &res2_bn.gamma,
          &res2_bn.beta,    &res2_b.weight,   &bn2.gamma,      &bn2.beta,       &conv2.weight,
          &conv2.bias};
}

std::vector<const Param*> ProxNet::params() const {
  auto mut = const_cast<ProxNet*>(this)->params();
  return {mut.begin(), mut.end()};
}

std::vector<ProxNet::Buffers> ProxNet::buffers() {
  std::vector<Buffers> out;
  for (BatchNorm* bn : {&bn1, &res1_bn, &res2_bn, &bn2}) {
    const std::string prefix = bn->gamma.name.substr(0, bn->gamma.name.size() - std::string(".gamma").size());
    out.push_back({prefix + ".running_mean", &bn->running_mean});
    out.push_back({prefix + ".running_var", &bn->running_var});
  }
  return out;
}

FeatureMap ProxNet::res_forward(const Conv3x3& a, const BatchNorm& bn, const Conv3x3& b, const FeatureMap& in,
                                Mode mode, ResCache* cache, BnBatchStats* stats) const {
  FeatureMap ta = a.forward(in);
  BatchNorm::Cache bnc;
  FeatureMap tb = bn.forward(ta, mode, cache ? &bnc : nullptr, stats);
  FeatureMap tr = relu(tb);
  FeatureMap out = b.forward(tr);
  out.data += in.data;
  if (cache) {
    cache->in = in;
    cache->a = std::move(ta);
    cache->bn_out = std::move(tb);
    cache->relu_out = std::move(tr);
    cache->bn = std::move(bnc);
  }
  return out;
}

FeatureMap ProxNet::res_backward(Conv3x3& a, BatchNorm& bn, Conv3x3& b, const ResCache& cache,
                                 const FeatureMap& dout) {
  FeatureMap d = b.backward(cache.relu_out, dout);
  d = relu_backward(cache.bn_out, d);
  d = bn.backward(cache.bn, d);
  d = a.backward(cache.in, d);
  d.data += dout.data;
  return d;
}

FeatureMap ProxNet::forward(const FeatureMap& v, Mode mode, Cache* cache, Stats* stats) const {
  if (v.channels() != 1) throw DimensionError("prox network expects single-channel input");
  std::vector<BnBatchStats> local(4);
  const bool want_stats = stats != nullptr && mode == Mode::train;
  Cache scratch;
  Cache& c = cache ? *cache : scratch;

  c.c1 = conv1.forward(v);
  c.bn1_out = bn1.forward(c.c1, mode, &c.bn1, want_stats ? &local[0] : nullptr);
  c.h1 = relu(c.bn1_out);
  c.r1_out = res_forward(res1_a, res1_bn, res1_b, c.h1, mode, &c.res1, want_stats ? &local[1] : nullptr);
  c.h3 = relu(c.r1_out);
  c.r2_out = res_forward(res2_a, res2_bn, res2_b, c.h3, mode, &c.res2, want_stats ? &local[2] : nullptr);
  c.bn2_out = bn2.forward(c.r2_out, mode, &c.bn2, want_stats ? &local[3] : nullptr);
  c.h5 = relu(c.bn2_out);
  FeatureMap out = conv2.forward(c.h5);
  out.data += v.data;
  if (cache) c.v = v;
  if (want_stats) *stats = std::move(local);
  return out;
}

FeatureMap ProxNet::backward(const Cache& c, const FeatureMap& dout) {
  FeatureMap d = conv2.backward(c.h5, dout);
  d = relu_backward(c.bn2_out, d);
  d = bn2.backward(c.bn2, d);
  d = res_backward(res2_a, res2_bn, res2_b, c.res2, d);
  d = relu_backward(c.r1_out, d);
  d = res_backward(res1_a, res1_bn, res1_b, c.res1, d);
  d = relu_backward(c.bn1_out, d);
  d = bn1.backward(c.bn1, d);
  d = conv1.backward(c.v, d);
  d.data += dout.data;
  return d;
}

void ProxNet::commit(const Stats& stats) {
  if (stats.size() != 4) return;
  bn1.commit(stats[0]);
  res1_bn.commit(stats[1]);
  res2_bn.commit(stats[2]);
  bn2.commit(stats[3]);
}

}  // namespace pipo::nn
