#include "pipo/unfolding.hpp"

#include <cmath>
#include <random>

namespace pipo::unfolding {

using imaging::GridShape;
using imaging::Image;
using nn::FeatureMap;

std::string to_string(Coupling c) { return c == Coupling::detached ? "detached" : "end2end"; }
std::string to_string(RhoMode r) { return r == RhoMode::per_module ? "per_module" : "shared"; }
std::string to_string(LambdaMode l) {
  switch (l) {
    case LambdaMode::buffer_mean: return "buffer_mean";
    case LambdaMode::per_sample_zero_init: return "per_sample_zero_init";
    case LambdaMode::shared: return "shared";
  }
  return "buffer_mean";
}

Coupling parse_coupling(const std::string& s) {
  if (s == "detached") return Coupling::detached;
  if (s == "end2end") return Coupling::end2end;
  throw ConfigError("unknown coupling '" + s + "' (expected detached or end2end)");
}

RhoMode parse_rho_mode(const std::string& s) {
  if (s == "per_module") return RhoMode::per_module;
  if (s == "shared") return RhoMode::shared;
  throw ConfigError("unknown rho mode '" + s + "' (expected per_module or shared)");
}

LambdaMode parse_lambda_mode(const std::string& s) {
  if (s == "buffer_mean") return LambdaMode::buffer_mean;
  if (s == "per_sample_zero_init") return LambdaMode::per_sample_zero_init;
  if (s == "shared") return LambdaMode::shared;
  throw ConfigError("unknown lambda mode '" + s + "' (expected buffer_mean, per_sample_zero_init or shared)");
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline Pipeline::allocate(const PipelineOptions& options, Index m) {
  if (options.modules < 0) throw ConfigError("module count must be non-negative");
  if (options.channels < 1) throw ConfigError("channel count must be positive");
  if (!(options.rho_init > 0.0)) throw ConfigError("initial rho must be positive");
  const Index n = options.patch_side * options.patch_side;
  if (options.patch_side < 2) throw ConfigError("patch_side must be at least 2");
  if (m < 1 || m >= n) throw DimensionError("measurement count must satisfy 1 <= m < n");

  Pipeline p;
  p.options = options;
  p.sampling.A = Matrix::Zero(m, n);
  p.sampling_grad = Matrix::Zero(m, n);
  p.irm.weight = nn::Param("irm.weight", n, m);
  p.irm.bias = nn::Param("irm.bias", n, 1);
  for (Index k = 0; k < options.modules; ++k) {
    const std::string prefix = "drm" + std::to_string(k);
    DRMState s;
    s.rho_raw = nn::Param(prefix + ".rho_raw", 1, 1);
    s.rho_raw.value(0, 0) = softplus_inverse(options.rho_init);
    s.prox = nn::ProxNet(prefix + ".prox", options.channels);
    s.hfc = nn::ProxNet(prefix + ".hfc", options.channels);
    s.lambda_buf = Vector::Zero(n);
    p.modules.push_back(std::move(s));
  }
  return p;
}

Pipeline Pipeline::create(const PipelineOptions& options, Index m, std::uint64_t seed) {
  Pipeline p = allocate(options, m);
  p.sampling = sampling::init_whitened(m, p.n(), seed);
  p.irm.weight.value = p.sampling.A.transpose();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& s : p.modules) {
    s.prox.init(rng);
    s.hfc.init(rng);
  }
  return p;
}

double Pipeline::rho(Index k) const {
  const Index owner = options.rho_mode == RhoMode::shared ? 0 : k;
  return modules[static_cast<std::size_t>(owner)].rho();
}

nn::Param& Pipeline::rho_param(Index k) {
  const Index owner = options.rho_mode == RhoMode::shared ? 0 : k;
  return modules[static_cast<std::size_t>(owner)].rho_raw;
}

namespace {

void append(std::vector<ParamRef>& out, nn::Param& p) { out.push_back({p.name, &p.value, &p.grad}); }

}  // namespace

std::vector<ParamRef> Pipeline::module_parameters(Index k) {
  std::vector<ParamRef> out;
  DRMState& s = modules[static_cast<std::size_t>(k)];
  if (options.rho_mode == RhoMode::per_module || k == 0) append(out, s.rho_raw);
  for (nn::Param* p : s.prox.params()) append(out, *p);
  if (options.hfc)
    for (nn::Param* p : s.hfc.params()) append(out, *p);
  return out;
}

std::vector<ParamRef> Pipeline::parameters() {
  std::vector<ParamRef> out;
  if (sampling.trainable) out.push_back({"sampling.A", &sampling.A, &sampling_grad});
  append(out, irm.weight);
  append(out, irm.bias);
  for (Index k = 0; k < depth(); ++k)
    for (auto& r : module_parameters(k)) out.push_back(r);
  return out;
}

void Pipeline::zero_grad() {
  sampling_grad.setZero(sampling.m(), sampling.n());
  irm.weight.zero_grad();
  irm.bias.zero_grad();
  for (auto& s : modules) {
    s.rho_raw.zero_grad();
    for (nn::Param* p : s.prox.params()) p->zero_grad();
    for (nn::Param* p : s.hfc.params()) p->zero_grad();
  }
}

// ---------------------------------------------------------------------------
// XUpdateSolver

XUpdateSolver::XUpdateSolver(const Matrix& A, double rho) : a_(A), rho_(rho) {
  if (!(rho > 0.0)) throw NumericError("x-update requires rho > 0");
  Matrix m = A * A.transpose();
  m.diagonal().array() += rho;
  llt_.compute(m);
  if (llt_.info() != Eigen::Success) throw NumericError("x-update: factorization failed");
}

Matrix XUpdateSolver::solve(const Eigen::Ref<const Matrix>& rhs) const {
  const Matrix ar = a_ * rhs;
  Matrix out = rhs;
  out.noalias() -= a_.transpose() * llt_.solve(ar);
  out /= rho_;
  return out;
}

// ---------------------------------------------------------------------------
// Single operations

namespace {

Index side_of(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw ConfigError("patch length " + std::to_string(n) + " is not a perfect square");
  return side;
}

FeatureMap patches_to_map(const Eigen::Ref<const Matrix>& v) {
  const Index side = side_of(v.rows());
  FeatureMap f;
  f.batch = v.cols();
  f.height = side;
  f.width = side;
  f.data.resize(1, v.size());
  for (Index j = 0; j < v.cols(); ++j) f.data.block(0, j * v.rows(), 1, v.rows()) = v.col(j).transpose();
  return f;
}

Matrix map_to_patches(const FeatureMap& f) {
  const Index n = f.pixels();
  Matrix out(n, f.batch);
  for (Index j = 0; j < f.batch; ++j) out.col(j) = f.data.block(0, j * n, 1, n).transpose();
  return out;
}

FeatureMap canvases_to_map(const std::vector<RowMatrix>& canvases) {
  FeatureMap f;
  f.batch = static_cast<Index>(canvases.size());
  f.height = canvases.front().rows();
  f.width = canvases.front().cols();
  const Index hw = f.height * f.width;
  f.data.resize(1, f.batch * hw);
  for (Index j = 0; j < f.batch; ++j)
    f.data.block(0, j * hw, 1, hw) = Eigen::Map<const Eigen::RowVectorXd>(canvases[static_cast<std::size_t>(j)].data(), hw);
  return f;
}

std::vector<RowMatrix> map_to_canvases(const FeatureMap& f) {
  const Index hw = f.height * f.width;
  std::vector<RowMatrix> out;
  for (Index j = 0; j < f.batch; ++j) {
    RowMatrix c(f.height, f.width);
    Eigen::Map<Eigen::RowVectorXd>(c.data(), hw) = f.data.block(0, j * hw, 1, hw);
    out.push_back(std::move(c));
  }
  return out;
}

RowMatrix pad_zero(const RowMatrix& cropped, const GridShape& g) {
  RowMatrix out = RowMatrix::Zero(g.padded_height(), g.padded_width());
  if (cropped.size() != 0) out.topLeftCorner(g.height, g.width) = cropped;
  return out;
}

Image crop(const RowMatrix& canvas, const GridShape& g) {
  return Image(canvas.topLeftCorner(g.height, g.width));
}

}  // namespace

Vector initial_reconstruct(const InitialReconstructor& irm, const Eigen::Ref<const Vector>& y) {
  if (y.size() != irm.weight.value.cols())
    throw DimensionError("initial_reconstruct: measurement length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(irm.weight.value.cols()));
  return irm.weight.value * y + irm.bias.value.col(0);
}

Matrix prox_apply(const nn::ProxNet& net, const Eigen::Ref<const Matrix>& v, nn::Mode mode) {
  return map_to_patches(net.forward(patches_to_map(v), mode));
}

Matrix z_update(const DRMState& state, const Eigen::Ref<const Matrix>& x_prev) {
  Matrix v = x_prev;
  v.colwise() += state.lambda_buf / state.rho();
  return prox_apply(state.prox, v);
}

Vector lambda_update(DRMState& state, const Eigen::Ref<const Matrix>& z, const Eigen::Ref<const Matrix>& x_prev) {
  if (z.rows() != x_prev.rows() || z.cols() != x_prev.cols()) throw DimensionError("lambda_update: shape mismatch");
  state.lambda_buf = state.lambda_buf + state.rho() * (z - x_prev).rowwise().mean();
  return state.lambda_buf;
}

Matrix x_update(const Matrix& A, double rho, const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& z,
                const Eigen::Ref<const Vector>& lambda) {
  if (y.rows() != A.rows() || z.rows() != A.cols() || lambda.size() != A.cols() || y.cols() != z.cols())
    throw DimensionError("x_update: shape mismatch");
  if (!y.allFinite() || !z.allFinite() || !lambda.allFinite()) throw NumericError("x_update: non-finite input");
  const XUpdateSolver solver(A, rho);
  Matrix rhs = A.transpose() * y + rho * z;
  rhs.colwise() += lambda;
  return solver.solve(rhs);
}

Matrix x_update(const sampling::SamplingOperator& op, const DRMState& state, const Eigen::Ref<const Matrix>& y,
                const Eigen::Ref<const Matrix>& z, const Eigen::Ref<const Vector>& lambda) {
  return x_update(op.A, state.rho(), y, z, lambda);
}

HfcResult hfc_apply(const DRMState& state, const Eigen::Ref<const Matrix>& x_tilde,
                    const Eigen::Ref<const Vector>& patch_means, const GridShape& grid, bool subtract_means) {
  if (x_tilde.cols() != grid.count() || patch_means.size() != grid.count() || x_tilde.rows() != grid.n())
    throw DimensionError("hfc_apply: batch does not match the patch grid");
  Matrix with_means = x_tilde;
  with_means.rowwise() += patch_means.transpose();
  const FeatureMap in = canvases_to_map({imaging::splice_padded(grid, with_means)});
  HfcResult r;
  r.canvas = map_to_canvases(state.hfc.forward(in, nn::Mode::eval)).front();
  r.image = crop(r.canvas, grid);
  r.patches = imaging::split_padded(grid, r.canvas);
  if (subtract_means) r.patches.rowwise() -= r.patches.colwise().mean();
  return r;
}

DrmStep drm_step(const XUpdateSolver& solver, const Eigen::Ref<const Vector>& lambda_buf,
                 const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& x_prev, const ProxFn& prox) {
  const double rho = solver.rho();
  DrmStep s;
  Matrix v = x_prev;
  v.colwise() += lambda_buf / rho;
  s.z = prox(v);
  s.lambda = lambda_buf + rho * (s.z - x_prev).rowwise().mean();
  Matrix rhs = solver.A().transpose() * y + rho * s.z;
  rhs.colwise() += s.lambda;
  s.x_tilde = solver.solve(rhs);
  return s;
}

// ---------------------------------------------------------------------------
// Whole pipeline

SampledImage sample_image(const Pipeline& pipeline, const Image& image) {
  const auto grid = imaging::extract_patches(image, pipeline.options.patch_side);
  if (grid.shape.n() != pipeline.n()) throw DimensionError("patch size does not match the sampling operator");
  const auto meas = sampling::mss_sample_batch(pipeline.sampling, grid.patches, pipeline.options.mss);
  SampledImage s;
  s.name = image.name;
  s.grid = grid.shape;
  s.y = meas.y;
  s.patch_means = meas.patch_means;
  s.x_sampled = grid.patches;
  if (pipeline.options.mss) s.x_sampled.rowwise() -= meas.patch_means.transpose();
  return s;
}

ReconstructionTrace forward(const Pipeline& pipeline, std::span<const Image> images, nn::Mode mode, bool keep_cache) {
  std::vector<SampledImage> sampled;
  sampled.reserve(images.size());
  for (const Image& img : images) sampled.push_back(sample_image(pipeline, img));
  return reconstruct(pipeline, sampled, mode, keep_cache);
}

ReconstructionTrace reconstruct(const Pipeline& pipeline, std::span<const SampledImage> sampled, nn::Mode mode,
                                bool keep_cache) {
  if (sampled.empty()) throw DimensionError("reconstruct: empty batch");
  const PipelineOptions& opt = pipeline.options;
  const GridShape grid = sampled.front().grid;
  const Index per_image = grid.count();
  const auto n_images = static_cast<Index>(sampled.size());
  const Index batch = per_image * n_images;
  const Index n = pipeline.n();

  ReconstructionTrace t;
  t.mode = mode;
  t.grid = grid;
  t.images = n_images;
  t.y.resize(pipeline.m(), batch);
  t.patch_means.resize(batch);
  bool have_x = true;
  for (const auto& s : sampled) have_x = have_x && s.x_sampled.size() != 0;
  if (have_x) t.x_sampled.resize(n, batch);
  for (Index j = 0; j < n_images; ++j) {
    const SampledImage& s = sampled[static_cast<std::size_t>(j)];
    if (!(s.grid == grid)) throw DimensionError("reconstruct: images in one batch must share a size");
    if (s.y.rows() != pipeline.m() || s.y.cols() != per_image)
      throw DimensionError("reconstruct: measurement shape does not match the pipeline");
    t.y.middleCols(j * per_image, per_image) = s.y;
    t.patch_means.segment(j * per_image, per_image) = s.patch_means;
    if (have_x) t.x_sampled.middleCols(j * per_image, per_image) = s.x_sampled;
  }

  auto splice_each = [&](const Matrix& patches) {
    std::vector<RowMatrix> canvases;
    for (Index j = 0; j < n_images; ++j) {
      Matrix block = patches.middleCols(j * per_image, per_image);
      block.rowwise() += t.patch_means.segment(j * per_image, per_image).transpose();
      canvases.push_back(imaging::splice_padded(grid, block));
    }
    return canvases;
  };

  t.x0 = pipeline.irm.weight.value * t.y;
  t.x0.colwise() += pipeline.irm.bias.value.col(0);

  const Index depth = pipeline.depth();
  const bool train = mode == nn::Mode::train;
  t.modules.resize(static_cast<std::size_t>(depth));
  if (train) {
    t.prox_stats.resize(static_cast<std::size_t>(depth));
    t.hfc_stats.resize(static_cast<std::size_t>(depth));
  }
  if (keep_cache) {
    t.has_cache = true;
    t.lambda_in.resize(static_cast<std::size_t>(depth));
    t.solvers.resize(static_cast<std::size_t>(depth));
    t.prox_cache.resize(static_cast<std::size_t>(depth));
    t.hfc_cache.resize(static_cast<std::size_t>(depth));
  }

  const Matrix aty = pipeline.sampling.A.transpose() * t.y;
  Vector shared_lambda = depth > 0 ? pipeline.modules.front().lambda_buf : Vector();
  const Matrix* x_prev = &t.x0;

  for (Index k = 0; k < depth; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const DRMState& state = pipeline.modules[ks];
    ModuleTrace& mt = t.modules[ks];
    const double rho = pipeline.rho(k);

    Vector lambda_in;
    switch (opt.lambda_mode) {
      case LambdaMode::buffer_mean: lambda_in = state.lambda_buf; break;
      case LambdaMode::shared: lambda_in = shared_lambda; break;
      case LambdaMode::per_sample_zero_init: lambda_in = Vector::Zero(n); break;
    }

    // z-update
    Matrix v = *x_prev;
    v.colwise() += lambda_in / rho;
    FeatureMap zmap = state.prox.forward(patches_to_map(v), mode, keep_cache ? &t.prox_cache[ks] : nullptr,
                                         train ? &t.prox_stats[ks] : nullptr);
    mt.z = map_to_patches(zmap);

    // lambda-update
    const Matrix residual = mt.z - *x_prev;
    Matrix rhs = aty + rho * mt.z;
    if (opt.lambda_mode == LambdaMode::per_sample_zero_init) {
      mt.lambda = rho * residual;
      rhs += mt.lambda;
    } else {
      const Vector lambda_new = lambda_in + rho * residual.rowwise().mean();
      mt.lambda = lambda_new;
      rhs.colwise() += lambda_new;
      if (train) t.lambda_updates.push_back(lambda_new);
      if (opt.lambda_mode == LambdaMode::shared) shared_lambda = lambda_new;
    }

    // x-update
    XUpdateSolver solver(pipeline.sampling.A, rho);
    mt.x_tilde = solver.solve(rhs);

    // high-frequency complement
    if (opt.hfc) {
      FeatureMap out = state.hfc.forward(canvases_to_map(splice_each(mt.x_tilde)), mode,
                                         keep_cache ? &t.hfc_cache[ks] : nullptr,
                                         train ? &t.hfc_stats[ks] : nullptr);
      const auto canvases = map_to_canvases(out);
      mt.x.resize(n, batch);
      for (Index j = 0; j < n_images; ++j) {
        const RowMatrix& c = canvases[static_cast<std::size_t>(j)];
        mt.x.middleCols(j * per_image, per_image) = imaging::split_padded(grid, c);
        mt.outputs.push_back(crop(c, grid));
      }
      if (opt.mss) mt.x.rowwise() -= mt.x.colwise().mean();
    } else {
      mt.x = mt.x_tilde;
      for (const auto& c : splice_each(mt.x_tilde)) mt.outputs.push_back(crop(c, grid));
    }

    if (keep_cache) {
      t.lambda_in[ks] = lambda_in;
      t.solvers[ks] = std::move(solver);
    }
    x_prev = &mt.x;
  }

  if (depth == 0) {
    for (const auto& c : splice_each(t.x0)) t.finals.push_back(crop(c, grid));
  } else {
    t.finals = t.modules.back().outputs;
  }
  for (Index j = 0; j < n_images; ++j) t.finals[static_cast<std::size_t>(j)].name = sampled[static_cast<std::size_t>(j)].name;
  return t;
}

void backward(Pipeline& pipeline, const ReconstructionTrace& t, const TraceGradients& grads) {
  if (!t.has_cache) throw Error("backward requires a trace computed with keep_cache");
  const PipelineOptions& opt = pipeline.options;
  const GridShape& grid = t.grid;
  const Index per_image = grid.count();
  const Index n_images = t.images;
  const Index batch = per_image * n_images;
  const Index n = pipeline.n();
  const Index depth = pipeline.depth();
  const Matrix& A = pipeline.sampling.A;

  auto final_grad = [&](Index j) -> const RowMatrix* {
    if (grads.finals.empty()) return nullptr;
    const RowMatrix& g = grads.finals[static_cast<std::size_t>(j)];
    return g.size() == 0 ? nullptr : &g;
  };
  auto module_grad = [&](Index k, Index j) -> const RowMatrix* {
    if (grads.module_outputs.size() <= static_cast<std::size_t>(k)) return nullptr;
    const auto& per = grads.module_outputs[static_cast<std::size_t>(k)];
    if (per.empty()) return nullptr;
    const RowMatrix& g = per[static_cast<std::size_t>(j)];
    return g.size() == 0 ? nullptr : &g;
  };
  // Adjoint of "add means, splice, crop": pad with zeros, cut into patches.
  auto patches_from_image_grads = [&](auto&& get) {
    Matrix out = Matrix::Zero(n, batch);
    for (Index j = 0; j < n_images; ++j)
      if (const RowMatrix* g = get(j)) out.middleCols(j * per_image, per_image) = imaging::split_padded(grid, pad_zero(*g, grid));
    return out;
  };

  Matrix dY = Matrix::Zero(pipeline.m(), batch);
  Matrix dA = Matrix::Zero(pipeline.m(), n);
  Matrix carry = Matrix::Zero(n, batch);
  // shared multipliers chain from module to module
  Vector lambda_carry = Vector::Zero(n);

  for (Index k = depth - 1; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const ModuleTrace& mt = t.modules[ks];
    DRMState& state = pipeline.modules[ks];
    const double rho = pipeline.rho(k);
    const bool last = k == depth - 1;
    const Matrix& x_prev = k == 0 ? t.x0 : t.modules[ks - 1].x;

    Matrix dxt;
    if (opt.hfc) {
      Matrix dx = carry;
      if (opt.mss) dx.rowwise() -= dx.colwise().mean();
      std::vector<RowMatrix> dcanvas;
      for (Index j = 0; j < n_images; ++j) {
        RowMatrix c = imaging::splice_padded(grid, dx.middleCols(j * per_image, per_image));
        if (const RowMatrix* g = module_grad(k, j)) c += pad_zero(*g, grid);
        if (last)
          if (const RowMatrix* g = final_grad(j)) c += pad_zero(*g, grid);
        dcanvas.push_back(std::move(c));
      }
      const FeatureMap din = state.hfc.backward(t.hfc_cache[ks], canvases_to_map(dcanvas));
      const auto din_canvases = map_to_canvases(din);
      dxt.resize(n, batch);
      for (Index j = 0; j < n_images; ++j)
        dxt.middleCols(j * per_image, per_image) = imaging::split_padded(grid, din_canvases[static_cast<std::size_t>(j)]);
    } else {
      dxt = carry + patches_from_image_grads([&](Index j) { return module_grad(k, j); });
      if (last) dxt += patches_from_image_grads(final_grad);
    }

    // x-update: x~ = H^{-1} r with H = A^T A + rho I, r = A^T y + lambda + rho z
    const Matrix u = t.solvers[ks].solve(dxt);
    const Matrix au = A * u;
    const Matrix axt = A * mt.x_tilde;
    dY += au;
    dA.noalias() += t.y * u.transpose();
    dA.noalias() -= au * mt.x_tilde.transpose();
    dA.noalias() -= axt * u.transpose();
    double drho = (u.array() * (mt.z - mt.x_tilde).array()).sum();

    Matrix dz = rho * u;
    Matrix dx_prev;
    const Matrix residual = mt.z - x_prev;
    if (opt.lambda_mode == LambdaMode::per_sample_zero_init) {
      dz += rho * u;
      dx_prev = -rho * u;
      drho += (u.array() * residual.array()).sum();
    } else {
      const Vector dl = u.rowwise().sum() + lambda_carry;
      const double scale = rho / static_cast<double>(batch);
      drho += dl.dot(residual.rowwise().mean());
      dz.colwise() += scale * dl;
      dx_prev = Matrix::Zero(n, batch);
      dx_prev.colwise() -= scale * dl;
    }

    // z-update: z = Net_z(x_prev + lambda_in / rho)
    const Matrix dv = map_to_patches(state.prox.backward(t.prox_cache[ks], patches_to_map(dz)));
    dx_prev += dv;
    const Vector& lam_in = t.lambda_in[ks];
    if (opt.lambda_mode != LambdaMode::per_sample_zero_init)
      drho -= dv.rowwise().sum().dot(lam_in) / (rho * rho);
    if (opt.lambda_mode == LambdaMode::shared && k > 0 && opt.coupling == Coupling::end2end)
      lambda_carry = u.rowwise().sum() + lambda_carry + dv.rowwise().sum() / rho;
    else
      lambda_carry.setZero();

    nn::Param& rp = pipeline.rho_param(k);
    rp.grad(0, 0) += drho * sigmoid(rp.value(0, 0));

    // The initial reconstruction always feeds module 1; detachment applies
    // between reconstruction modules.
    if (k == 0 || opt.coupling == Coupling::end2end)
      carry = std::move(dx_prev);
    else
      carry.setZero();
  }

  Matrix dx0 = depth == 0 ? patches_from_image_grads(final_grad) : carry;
  pipeline.irm.weight.grad.noalias() += dx0 * t.y.transpose();
  pipeline.irm.bias.grad.col(0) += dx0.rowwise().sum();
  dY.noalias() += pipeline.irm.weight.value.transpose() * dx0;

  if (pipeline.sampling.trainable) {
    if (t.x_sampled.size() != 0) dA.noalias() += dY * t.x_sampled.transpose();
    pipeline.sampling_grad += dA;
  }
}

void commit_state(Pipeline& pipeline, const ReconstructionTrace& trace) {
  if (trace.mode != nn::Mode::train) return;
  const Index depth = pipeline.depth();
  switch (pipeline.options.lambda_mode) {
    case LambdaMode::buffer_mean:
      for (Index k = 0; k < depth && k < static_cast<Index>(trace.lambda_updates.size()); ++k)
        pipeline.modules[static_cast<std::size_t>(k)].lambda_buf = trace.lambda_updates[static_cast<std::size_t>(k)];
      break;
    case LambdaMode::shared:
      if (!trace.lambda_updates.empty()) pipeline.modules.front().lambda_buf = trace.lambda_updates.back();
      break;
    case LambdaMode::per_sample_zero_init: break;
  }
  for (Index k = 0; k < depth; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (ks < trace.prox_stats.size()) pipeline.modules[ks].prox.commit(trace.prox_stats[ks]);
    if (pipeline.options.hfc && ks < trace.hfc_stats.size()) pipeline.modules[ks].hfc.commit(trace.hfc_stats[ks]);
  }
}

}  // namespace pipo::unfolding
