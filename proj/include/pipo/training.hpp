#pragma once

#include "pipo/common.hpp"
#include "pipo/config.hpp"
#include "pipo/imaging.hpp"
#include "pipo/metrics.hpp"
#include "pipo/unfolding.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pipo::training {

enum class LossMode { mse_only, total };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct TrainConfig {
  // sampling
  double ratio = 0.25;
  Index patch_side = 33;
  bool train_sampling = true;
  bool mss_enabled = true;
  // unfolding
  Index modules = 9;
  Index channels = 32;
  bool hfc_enabled = true;
  unfolding::Coupling coupling = unfolding::Coupling::detached;
  unfolding::RhoMode rho_mode = unfolding::RhoMode::per_module;
  unfolding::LambdaMode lambda_mode = unfolding::LambdaMode::per_sample_zero_init;
  double rho_init = 0.1;
  // optimization
  Index epochs = 100;
  Index batch_size = 64;
  double lr = 1e-3;
  double gamma = metrics::kDefaultGamma;
  LossMode loss_mode = LossMode::total;
  Index crop = 0;  // side of the random training crop; 0 uses whole images
  std::uint64_t seed = 0;

  void validate() const;
  Index measurements() const;
  unfolding::PipelineOptions pipeline_options() const;

  /// Writes every field as "section.key" entries.
  void store(config::IniDocument& doc) const;
  /// Reads any present fields; other keys are ignored.
  static TrainConfig load(const config::IniDocument& doc);
  static TrainConfig load(const config::IniDocument& doc, TrainConfig base);
  static const std::vector<std::string>& keys();
};

// ---------------------------------------------------------------------------

struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<unfolding::ParamRef>& params);

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  AdamState state_;
};

// ---------------------------------------------------------------------------

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  TrainConfig config;
  unfolding::Pipeline pipeline;
  AdamState optimizer;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::string rng_state;  // textual mt19937_64 state
};

Checkpoint initial_checkpoint(const TrainConfig& config);

struct HistoryRecord {
  std::string kind;  // "step" or "epoch"
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double mse = 0.0;
  double wt = 0.0;
  double total = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
};

std::string to_json_line(const HistoryRecord& r);
HistoryRecord history_from_json_line(const std::string& line);
void write_history(const std::filesystem::path& path, const std::vector<HistoryRecord>& records);
std::vector<HistoryRecord> read_history(const std::filesystem::path& path);

/// Losses of a trace against the originals together with the image-space
/// gradients of the configured objective.
struct LossEvaluation {
  metrics::LossReport report;
  unfolding::TraceGradients grads;
};

LossEvaluation evaluate_loss(const unfolding::ReconstructionTrace& trace,
                             const std::vector<imaging::Image>& originals, double gamma, LossMode mode);

struct TrainResult {
  Checkpoint last;
  Checkpoint best;
  double best_val_psnr = 0.0;
  std::vector<HistoryRecord> history;
};

using ProgressFn = std::function<void(const HistoryRecord&)>;

/// Trains from a fresh pipeline built from `config`.
TrainResult train(const TrainConfig& config, const std::vector<imaging::Image>& train_images,
                  const std::vector<imaging::Image>& val_images, const ProgressFn& progress = {});

/// Continues a run up to start.config.epochs.
TrainResult resume(Checkpoint start, const std::vector<imaging::Image>& train_images,
                   const std::vector<imaging::Image>& val_images, const ProgressFn& progress = {});

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  /// Markdown table with columns image | PSNR | SSIM and a final mean row.
  std::string to_markdown() const;
};

/// Frozen-pipeline forward on each image (one at a time).
EvalReport evaluate(const unfolding::Pipeline& pipeline, const std::vector<imaging::Image>& images);
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<imaging::Image>& images);

/// Human-readable summary of a trace, attached to numeric failures.
std::string describe_trace(const unfolding::ReconstructionTrace& trace);

// ---------------------------------------------------------------------------
// Ablations

enum class AblationSuite { independence, mss_hfc, loss };

std::string to_string(AblationSuite s);
AblationSuite parse_suite(const std::string& s);

struct AblationRow {
  std::vector<std::string> labels;
  std::vector<double> values;
};

struct AblationTable {
  std::string suite;
  std::string title;
  std::vector<std::string> label_headers;
  std::vector<std::string> value_headers;
  std::vector<AblationRow> rows;

  std::string to_markdown() const;
  std::string to_json() const;
  static AblationTable from_json(const std::string& text);
};

/// Trains every configuration of the suite with the same seed and data order
/// and reports mean test PSNR. The independence suite uses base.ratio; the
/// other suites produce one column per entry of `ratios`.
AblationTable run_ablation(const TrainConfig& base, AblationSuite suite, const std::vector<imaging::Image>& train_images,
                           const std::vector<imaging::Image>& test_images, const std::vector<double>& ratios,
                           const ProgressFn& progress = {});

/// True when the row with independent rho and lambda scores at least as high
/// as both rows where exactly one of them is shared.
bool independence_ordering_holds(const AblationTable& table);

}  // namespace pipo::training
