#pragma once

#include "pipo/common.hpp"
#include "pipo/imaging.hpp"
#include "pipo/nn.hpp"
#include "pipo/sampling.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pipo::unfolding {

/// Whether module k's output carries gradient back into module k-1.
enum class Coupling { detached, end2end };
enum class RhoMode { per_module, shared };
/// buffer_mean: one persistent multiplier per module, overwritten with the
/// batch mean of the per-sample multipliers every training round.
/// per_sample_zero_init: no memory; each sample starts from zero.
/// shared: one persistent multiplier read and overwritten by every module.
/// The persistent modes grow geometrically once Net_z is close to the
/// identity, since then z - x ~ lambda / rho and each round doubles lambda.
enum class LambdaMode { buffer_mean, per_sample_zero_init, shared };

std::string to_string(Coupling c);
std::string to_string(RhoMode r);
std::string to_string(LambdaMode l);
Coupling parse_coupling(const std::string& s);
RhoMode parse_rho_mode(const std::string& s);
LambdaMode parse_lambda_mode(const std::string& s);

struct PipelineOptions {
  Index patch_side = 33;
  Index modules = 9;
  Index channels = 32;
  bool mss = true;
  bool hfc = true;
  Coupling coupling = Coupling::detached;
  RhoMode rho_mode = RhoMode::per_module;
  LambdaMode lambda_mode = LambdaMode::per_sample_zero_init;
  double rho_init = 0.1;
};

/// One fully connected layer: x0 = W y + b.
struct InitialReconstructor {
  nn::Param weight;  // n x m
  nn::Param bias;    // n x 1
};

/// State of one deep reconstruction module.
struct DRMState {
  nn::Param rho_raw;  // 1 x 1; rho = softplus(rho_raw) > 0
  nn::ProxNet prox;
  nn::ProxNet hfc;
  Vector lambda_buf;

  double rho() const { return softplus(rho_raw.value(0, 0)); }
};

/// Handle to a learnable tensor for optimizers and checkpoints.
struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

struct Pipeline {
  PipelineOptions options;
  sampling::SamplingOperator sampling;
  Matrix sampling_grad;
  InitialReconstructor irm;
  std::vector<DRMState> modules;

  /// Whitened A (seeded), adjoint-initialized IRM (W = A^T, b = 0), networks
  /// initialized to the identity map, rho = rho_init, zero multipliers.
  static Pipeline create(const PipelineOptions& options, Index m, std::uint64_t seed);
  /// Correctly shaped pipeline with zero sampling matrix and untouched
  /// network defaults; used when restoring from a checkpoint.
  static Pipeline allocate(const PipelineOptions& options, Index m);

  Index n() const { return sampling.n(); }
  Index m() const { return sampling.m(); }
  Index depth() const { return static_cast<Index>(modules.size()); }

  /// Honors rho_mode: in shared mode every module uses module 0's parameter.
  double rho(Index k) const;
  nn::Param& rho_param(Index k);

  /// All learnables in a stable order. The sampling matrix is included only
  /// when it is trainable.
  std::vector<ParamRef> parameters();
  /// Learnables owned by module k (its rho, Net_z and HFC network).
  std::vector<ParamRef> module_parameters(Index k);
  void zero_grad();
};

/// Solves (A^T A + rho I) x = rhs via the m x m Woodbury form
///   x = (rhs - A^T (rho I_m + A A^T)^{-1} A rhs) / rho.
/// The Cholesky factor is computed once per (A, rho) pair.
class XUpdateSolver {
 public:
  XUpdateSolver() = default;
  XUpdateSolver(const Matrix& A, double rho);

  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;
  double rho() const { return rho_; }
  const Matrix& A() const { return a_; }

 private:
  Matrix a_;
  double rho_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

// ---------------------------------------------------------------------------
// Single operations

Vector initial_reconstruct(const InitialReconstructor& irm, const Eigen::Ref<const Vector>& y);

/// Applies a proximal network to a batch of n-vectors (columns), each viewed
/// as a sqrt(n) x sqrt(n) image. Throws ConfigError for non-square n.
Matrix prox_apply(const nn::ProxNet& net, const Eigen::Ref<const Matrix>& v, nn::Mode mode = nn::Mode::eval);

/// z = Net_z(lambda / rho + x_prev), lambda broadcast over the batch.
Matrix z_update(const DRMState& state, const Eigen::Ref<const Matrix>& x_prev);

/// Overwrites state.lambda_buf with the batch mean of
/// lambda_buf + rho (z_s - x_s) and returns it.
Vector lambda_update(DRMState& state, const Eigen::Ref<const Matrix>& z, const Eigen::Ref<const Matrix>& x_prev);

/// Exact minimizer (A^T A + rho I)^{-1} (A^T y + lambda + rho z), per column.
Matrix x_update(const Matrix& A, double rho, const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& z,
                const Eigen::Ref<const Vector>& lambda);
Matrix x_update(const sampling::SamplingOperator& op, const DRMState& state, const Eigen::Ref<const Matrix>& y,
                const Eigen::Ref<const Matrix>& z, const Eigen::Ref<const Vector>& lambda);

struct HfcResult {
  Matrix patches;         // zero-mean patch vectors for the next module
  imaging::Image image;   // whole network output, cropped to the original size
  RowMatrix canvas;       // whole network output on the padded canvas
};

/// Re-adds patch means, splices the whole (padded) image, applies the HFC
/// network, and re-splits. With `subtract_means` each output patch has its
/// own mean removed.
HfcResult hfc_apply(const DRMState& state, const Eigen::Ref<const Matrix>& x_tilde,
                    const Eigen::Ref<const Vector>& patch_means, const imaging::GridShape& grid,
                    bool subtract_means = true);

using ProxFn = std::function<Matrix(const Matrix&)>;

struct DrmStep {
  Matrix z;
  Vector lambda;
  Matrix x_tilde;
};

/// z-, lambda- and x-update of one module with an arbitrary proximal map.
/// The multiplier is the batch mean (a single column gives the classical
/// per-signal update).
DrmStep drm_step(const XUpdateSolver& solver, const Eigen::Ref<const Vector>& lambda_buf,
                 const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Matrix>& x_prev, const ProxFn& prox);

// ---------------------------------------------------------------------------
// Whole pipeline

/// Measurements of one image as produced by the sampling stage.
struct SampledImage {
  std::string name;
  imaging::GridShape grid;
  Matrix y;            // m x count
  Vector patch_means;  // count (zero when mean subtraction is disabled)
  Matrix x_sampled;    // n x count: the vectors A was applied to (may be empty)
};

SampledImage sample_image(const Pipeline& pipeline, const imaging::Image& image);

struct ModuleTrace {
  Matrix z;
  Matrix lambda;   // n x 1 (shared buffers) or n x B (per-sample)
  Matrix x_tilde;
  Matrix x;
  std::vector<imaging::Image> outputs;  // whole-image module output per image
};

struct ReconstructionTrace {
  nn::Mode mode = nn::Mode::eval;
  imaging::GridShape grid;
  Index images = 0;
  Matrix y;
  Vector patch_means;
  Matrix x_sampled;
  Matrix x0;
  std::vector<ModuleTrace> modules;
  std::vector<imaging::Image> finals;

  // state updates produced by a training pass; applied by commit_state
  std::vector<Vector> lambda_updates;
  std::vector<nn::ProxNet::Stats> prox_stats;
  std::vector<nn::ProxNet::Stats> hfc_stats;

  // backward caches (only filled with keep_cache)
  bool has_cache = false;
  std::vector<Vector> lambda_in;
  std::vector<XUpdateSolver> solvers;
  std::vector<nn::ProxNet::Cache> prox_cache;
  std::vector<nn::ProxNet::Cache> hfc_cache;
};

/// Full pipeline on a batch of same-sized images. Pure: no state is mutated.
ReconstructionTrace forward(const Pipeline& pipeline, std::span<const imaging::Image> images,
                            nn::Mode mode = nn::Mode::eval, bool keep_cache = false);

/// Reconstruction stage only, starting from measurements.
ReconstructionTrace reconstruct(const Pipeline& pipeline, std::span<const SampledImage> sampled,
                                nn::Mode mode = nn::Mode::eval, bool keep_cache = false);

/// Loss gradients with respect to the trace's images (all cropped to the
/// original size). `module_outputs[k][j]` pairs with trace.modules[k].outputs[j];
/// empty vectors mean zero gradient.
struct TraceGradients {
  std::vector<RowMatrix> finals;
  std::vector<std::vector<RowMatrix>> module_outputs;
};

/// Accumulates parameter gradients for a trace computed with keep_cache.
void backward(Pipeline& pipeline, const ReconstructionTrace& trace, const TraceGradients& grads);

/// Writes multiplier buffers and batch-norm running statistics recorded by a
/// training-mode forward pass.
void commit_state(Pipeline& pipeline, const ReconstructionTrace& trace);

}  // namespace pipo::unfolding
