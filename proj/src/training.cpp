#include "pipo/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace pipo::training {

using config::IniDocument;
using imaging::Image;
using nlohmann::json;

std::string to_string(LossMode m) { return m == LossMode::mse_only ? "mse_only" : "total"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "mse_only" || s == "mse") return LossMode::mse_only;
  if (s == "total") return LossMode::total;
  throw ConfigError("unknown loss mode '" + s + "' (expected mse_only or total)");
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sampling.ratio must lie in (0, 1]");
  if (patch_side < 2) throw ConfigError("sampling.patch_side must be at least 2");
  if (modules < 0) throw ConfigError("unfolding.modules must be non-negative");
  if (channels < 1) throw ConfigError("unfolding.channels must be positive");
  if (!(rho_init > 0.0)) throw ConfigError("unfolding.rho_init must be positive");
  if (epochs < 0) throw ConfigError("training.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("training.batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("training.lr must be a finite non-negative number");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("training.gamma must be finite and non-negative");
  if (crop < 0) throw ConfigError("training.crop must be non-negative");
}

Index TrainConfig::measurements() const { return sampling::measurement_count(ratio, patch_side * patch_side); }

unfolding::PipelineOptions TrainConfig::pipeline_options() const {
  unfolding::PipelineOptions o;
  o.patch_side = patch_side;
  o.modules = modules;
  o.channels = channels;
  o.mss = mss_enabled;
  o.hfc = hfc_enabled;
  o.coupling = coupling;
  o.rho_mode = rho_mode;
  o.lambda_mode = lambda_mode;
  o.rho_init = rho_init;
  return o;
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {
      "sampling.ratio",     "sampling.patch_side",  "sampling.trainable", "sampling.mss",
      "unfolding.modules",  "unfolding.channels",   "unfolding.hfc",      "unfolding.coupling",
      "unfolding.rho_mode", "unfolding.lambda_mode", "unfolding.rho_init", "training.epochs",
      "training.batch_size", "training.lr",         "training.gamma",     "training.loss",
      "training.crop",      "training.seed"};
  return k;
}

void TrainConfig::store(IniDocument& doc) const {
  using config::format_double;
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  doc.set("sampling.ratio", format_double(ratio));
  doc.set("sampling.patch_side", std::to_string(patch_side));
  doc.set("sampling.trainable", flag(train_sampling));
  doc.set("sampling.mss", flag(mss_enabled));
  doc.set("unfolding.modules", std::to_string(modules));
  doc.set("unfolding.channels", std::to_string(channels));
  doc.set("unfolding.hfc", flag(hfc_enabled));
  doc.set("unfolding.coupling", unfolding::to_string(coupling));
  doc.set("unfolding.rho_mode", unfolding::to_string(rho_mode));
  doc.set("unfolding.lambda_mode", unfolding::to_string(lambda_mode));
  doc.set("unfolding.rho_init", format_double(rho_init));
  doc.set("training.epochs", std::to_string(epochs));
  doc.set("training.batch_size", std::to_string(batch_size));
  doc.set("training.lr", format_double(lr));
  doc.set("training.gamma", format_double(gamma));
  doc.set("training.loss", to_string(loss_mode));
  doc.set("training.crop", std::to_string(crop));
  doc.set("training.seed", std::to_string(seed));
}

TrainConfig TrainConfig::load(const IniDocument& doc) { return load(doc, TrainConfig{}); }

TrainConfig TrainConfig::load(const IniDocument& doc, TrainConfig c) {
  using config::parse_bool;
  using config::parse_double;
  using config::parse_int;
  auto with = [&](const char* key, auto&& apply) {
    if (auto v = doc.get(key)) apply(std::string(key), *v);
  };
  with("sampling.ratio", [&](const std::string& k, const std::string& v) { c.ratio = parse_double(k, v); });
  with("sampling.patch_side", [&](const std::string& k, const std::string& v) { c.patch_side = parse_int(k, v); });
  with("sampling.trainable", [&](const std::string& k, const std::string& v) { c.train_sampling = parse_bool(k, v); });
  with("sampling.mss", [&](const std::string& k, const std::string& v) { c.mss_enabled = parse_bool(k, v); });
  with("unfolding.modules", [&](const std::string& k, const std::string& v) { c.modules = parse_int(k, v); });
  with("unfolding.channels", [&](const std::string& k, const std::string& v) { c.channels = parse_int(k, v); });
  with("unfolding.hfc", [&](const std::string& k, const std::string& v) { c.hfc_enabled = parse_bool(k, v); });
  with("unfolding.coupling", [&](const std::string&, const std::string& v) { c.coupling = unfolding::parse_coupling(v); });
  with("unfolding.rho_mode", [&](const std::string&, const std::string& v) { c.rho_mode = unfolding::parse_rho_mode(v); });
  with("unfolding.lambda_mode",
       [&](const std::string&, const std::string& v) { c.lambda_mode = unfolding::parse_lambda_mode(v); });
  with("unfolding.rho_init", [&](const std::string& k, const std::string& v) { c.rho_init = parse_double(k, v); });
  with("training.epochs", [&](const std::string& k, const std::string& v) { c.epochs = parse_int(k, v); });
  with("training.batch_size", [&](const std::string& k, const std::string& v) { c.batch_size = parse_int(k, v); });
  with("training.lr", [&](const std::string& k, const std::string& v) { c.lr = parse_double(k, v); });
  with("training.gamma", [&](const std::string& k, const std::string& v) { c.gamma = parse_double(k, v); });
  with("training.loss", [&](const std::string&, const std::string& v) { c.loss_mode = parse_loss_mode(v); });
  with("training.crop", [&](const std::string& k, const std::string& v) { c.crop = parse_int(k, v); });
  with("training.seed", [&](const std::string& k, const std::string& v) {
    const long long s = parse_int(k, v);
    if (s < 0) throw ConfigError(k + " must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  });
  return c;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<unfolding::ParamRef>& params) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (const auto& p : params) {
    Matrix& m = state_.m[p.name];
    Matrix& v = state_.v[p.name];
    if (m.size() == 0) {
      m = Matrix::Zero(p.value->rows(), p.value->cols());
      v = Matrix::Zero(p.value->rows(), p.value->cols());
    }
    const Matrix& g = *p.grad;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    if (lr_ == 0.0) continue;
    p.value->array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw IoError("corrupt random-generator state in checkpoint");
  return rng;
}

}  // namespace

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.config = config;
  c.pipeline = unfolding::Pipeline::create(config.pipeline_options(), config.measurements(), config.seed);
  c.pipeline.sampling.trainable = config.train_sampling;
  c.rng_state = rng_to_string(std::mt19937_64(config.seed));
  return c;
}

// ---------------------------------------------------------------------------
// History

std::string to_json_line(const HistoryRecord& r) {
  json j;
  j["kind"] = r.kind;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["mse"] = r.mse;
  j["wt"] = r.wt;
  j["total"] = r.total;
  if (r.kind == "epoch") {
    j["val_psnr"] = r.val_psnr;
    j["val_ssim"] = r.val_ssim;
  }
  return j.dump();
}

HistoryRecord history_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    HistoryRecord r;
    r.kind = j.at("kind").get<std::string>();
    r.step = j.at("step").get<std::int64_t>();
    r.epoch = j.at("epoch").get<std::int64_t>();
    r.mse = j.at("mse").get<double>();
    r.wt = j.at("wt").get<double>();
    r.total = j.at("total").get<double>();
    r.val_psnr = j.value("val_psnr", 0.0);
    r.val_ssim = j.value("val_ssim", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed history record: ") + e.what());
  }
}

void write_history(const std::filesystem::path& path, const std::vector<HistoryRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write history " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw IoError("failed writing history " + path.string());
}

std::vector<HistoryRecord> read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history " + path.string());
  std::vector<HistoryRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(history_from_json_line(line));
  return out;
}

// ---------------------------------------------------------------------------
// Loss

LossEvaluation evaluate_loss(const unfolding::ReconstructionTrace& trace, const std::vector<Image>& originals,
                             double gamma, LossMode mode) {
  const auto n_images = static_cast<Index>(originals.size());
  if (n_images != trace.images || trace.finals.size() != originals.size())
    throw DimensionError("evaluate_loss: originals do not match the trace");
  const auto depth = static_cast<Index>(trace.modules.size());

  LossEvaluation e;
  e.report.mse = metrics::mse_loss(originals, trace.finals);
  const double numel = static_cast<double>(originals.front().numel());
  e.grads.finals.reserve(originals.size());
  for (Index j = 0; j < n_images; ++j) {
    const auto js = static_cast<std::size_t>(j);
    e.grads.finals.push_back((2.0 / (numel * static_cast<double>(n_images))) *
                             (trace.finals[js].pixels - originals[js].pixels));
  }

  if (depth > 0) {
    std::vector<std::vector<Image>> outputs(originals.size());
    for (Index j = 0; j < n_images; ++j)
      for (Index k = 0; k < depth; ++k)
        outputs[static_cast<std::size_t>(j)].push_back(trace.modules[static_cast<std::size_t>(k)].outputs[static_cast<std::size_t>(j)]);
    e.report.wt = metrics::wavelet_loss(originals, outputs);
    for (Index k = 0; k < depth; ++k) {
      double acc = 0.0;
      for (Index j = 0; j < n_images; ++j)
        acc += metrics::wavelet_distance(originals[static_cast<std::size_t>(j)].pixels,
                                         outputs[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].pixels);
      e.report.per_module_wt.push_back(acc / static_cast<double>(n_images));
    }
    if (mode == LossMode::total && gamma != 0.0) {
      const double scale = gamma / static_cast<double>(n_images * depth);
      e.grads.module_outputs.resize(static_cast<std::size_t>(depth));
      for (Index k = 0; k < depth; ++k)
        for (Index j = 0; j < n_images; ++j)
          e.grads.module_outputs[static_cast<std::size_t>(k)].push_back(
              scale * metrics::wavelet_distance_grad(originals[static_cast<std::size_t>(j)].pixels,
                                                     outputs[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].pixels));
    }
  }
  e.report.total = mode == LossMode::total ? metrics::total_loss(e.report.mse, e.report.wt, gamma) : e.report.mse;
  return e;
}

std::string describe_trace(const unfolding::ReconstructionTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(6);
  auto stats = [&](const char* label, const Matrix& m) {
    if (m.size() == 0) return;
    const bool finite = m.allFinite();
    os << "  " << label << ": " << m.rows() << "x" << m.cols();
    if (finite)
      os << " min " << m.minCoeff() << " max " << m.maxCoeff() << " rms " << std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
    else
      os << " non-finite entries " << (m.array().isFinite() == false).count();
    os << '\n';
  };
  os << "trace: " << trace.images << " image(s) of " << trace.grid.height << "x" << trace.grid.width << ", "
     << trace.grid.count() << " patch(es) each, " << trace.modules.size() << " module(s)\n";
  stats("y", trace.y);
  stats("x0", trace.x0);
  for (std::size_t k = 0; k < trace.modules.size(); ++k) {
    const auto& mt = trace.modules[k];
    os << " module " << k + 1 << '\n';
    stats("z", mt.z);
    stats("lambda", mt.lambda);
    stats("x_tilde", mt.x_tilde);
    stats("x", mt.x);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const unfolding::Pipeline& pipeline, const std::vector<Image>& images) {
  EvalReport r;
  for (const Image& img : images) {
    const auto trace = unfolding::forward(pipeline, std::span<const Image>(&img, 1));
    const Image& out = trace.finals.front();
    if (!out.pixels.allFinite()) throw NumericError("non-finite reconstruction of '" + img.name + "'\n" + describe_trace(trace));
    r.images.push_back({img.name, metrics::psnr(img, out), metrics::ssim(img, out)});
  }
  if (!r.images.empty()) {
    for (const auto& s : r.images) {
      r.mean_psnr += s.psnr;
      r.mean_ssim += s.ssim;
    }
    r.mean_psnr /= static_cast<double>(r.images.size());
    r.mean_ssim /= static_cast<double>(r.images.size());
  }
  return r;
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<Image>& images) {
  for (const Image& img : images)
    if (img.height() < 1 || img.width() < 1) throw DimensionError("image '" + img.name + "' is empty");
  return evaluate(checkpoint.pipeline, images);
}

std::string EvalReport::to_markdown() const {
  std::ostringstream os;
  os << std::fixed;
  os << "| image | PSNR | SSIM |\n|---|---:|---:|\n";
  for (const auto& s : images)
    os << "| " << s.name << " | " << std::setprecision(2) << s.psnr << " | " << std::setprecision(4) << s.ssim << " |\n";
  os << "| mean | " << std::setprecision(2) << mean_psnr << " | " << std::setprecision(4) << mean_ssim << " |\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Image random_crop(const Image& img, Index side, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> dr(0, img.height() - side);
  std::uniform_int_distribution<Index> dc(0, img.width() - side);
  const Index r0 = dr(rng);
  const Index c0 = dc(rng);
  return Image(img.pixels.block(r0, c0, side, side), img.name);
}

void check_finite(const metrics::LossReport& report, const unfolding::ReconstructionTrace& trace, std::int64_t step) {
  if (std::isfinite(report.total)) return;
  throw NumericError("non-finite training loss at step " + std::to_string(step) + "\n" + describe_trace(trace));
}

struct StepOutcome {
  metrics::LossReport report;
};

// One optimizer round: the batch is split into groups of equal image size;
// each group contributes its share of the batch-mean loss and gradient.
StepOutcome training_step(Checkpoint& ckpt, Adam& adam, const std::vector<Image>& batch) {
  unfolding::Pipeline& p = ckpt.pipeline;
  const TrainConfig& cfg = ckpt.config;
  std::vector<std::vector<Image>> groups;
  for (const Image& img : batch) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.front().height() == img.height() && g.front().width() == img.width();
    });
    if (it == groups.end())
      groups.push_back({img});
    else
      it->push_back(img);
  }

  p.zero_grad();
  StepOutcome out;
  const double total_images = static_cast<double>(batch.size());
  std::vector<unfolding::ReconstructionTrace> traces;
  std::vector<double> weights;
  for (const auto& g : groups) {
    auto trace = unfolding::forward(p, g, nn::Mode::train, true);
    auto eval = evaluate_loss(trace, g, cfg.gamma, cfg.loss_mode);
    check_finite(eval.report, trace, ckpt.step + 1);
    const double w = static_cast<double>(g.size()) / total_images;
    for (auto& m : eval.grads.finals) m *= w;
    for (auto& per : eval.grads.module_outputs)
      for (auto& m : per) m *= w;
    unfolding::backward(p, trace, eval.grads);
    out.report.mse += w * eval.report.mse;
    out.report.wt += w * eval.report.wt;
    out.report.total += w * eval.report.total;
    weights.push_back(static_cast<double>(trace.grid.count() * trace.images));
    traces.push_back(std::move(trace));
  }

  for (const auto& ref : p.parameters())
    if (!ref.grad->allFinite()) throw NumericError("non-finite gradient for " + ref.name + " at step " + std::to_string(ckpt.step + 1));

  if (traces.size() == 1) {
    unfolding::commit_state(p, traces.front());
  } else {
    // Multiplier buffers become the patch-weighted mean over groups; batch
    // statistics are folded in group by group.
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    unfolding::ReconstructionTrace merged = traces.front();
    for (std::size_t u = 0; u < merged.lambda_updates.size(); ++u) {
      Vector acc = Vector::Zero(merged.lambda_updates[u].size());
      for (std::size_t g = 0; g < traces.size(); ++g) acc += (weights[g] / wsum) * traces[g].lambda_updates[u];
      merged.lambda_updates[u] = acc;
    }
    unfolding::commit_state(p, merged);
    for (std::size_t g = 1; g < traces.size(); ++g) {
      traces[g].lambda_updates.clear();
      for (Index k = 0; k < p.depth(); ++k) {
        const auto ks = static_cast<std::size_t>(k);
        p.modules[ks].prox.commit(traces[g].prox_stats[ks]);
        if (p.options.hfc) p.modules[ks].hfc.commit(traces[g].hfc_stats[ks]);
      }
    }
  }

  adam.step(p.parameters());
  ++ckpt.step;
  ckpt.optimizer = adam.state();
  return out;
}

}  // namespace

TrainResult resume(Checkpoint start, const std::vector<Image>& train_images, const std::vector<Image>& val_images,
                   const ProgressFn& progress) {
  const TrainConfig& cfg = start.config;
  cfg.validate();
  if (train_images.empty()) throw ConfigError("training set is empty");
  if (cfg.crop > 0) {
    for (const Image& img : train_images)
      if (img.height() < cfg.crop || img.width() < cfg.crop)
        throw ConfigError("training image '" + img.name + "' is smaller than the crop size " + std::to_string(cfg.crop));
  }

  TrainResult result;
  result.last = std::move(start);
  Checkpoint& ckpt = result.last;
  ckpt.pipeline.sampling.trainable = cfg.train_sampling;
  Adam adam(cfg.lr);
  adam.state() = ckpt.optimizer;
  std::mt19937_64 rng = rng_from_string(ckpt.rng_state);

  bool have_best = false;
  const auto n_train = train_images.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n_train);

  while (ckpt.epoch < cfg.epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    metrics::LossReport epoch_sum;
    std::size_t rounds = 0;
    for (std::size_t at = 0; at < n_train; at += batch) {
      std::vector<Image> items;
      for (std::size_t i = at; i < std::min(at + batch, n_train); ++i) {
        const Image& src = train_images[order[i]];
        items.push_back(cfg.crop > 0 ? random_crop(src, cfg.crop, rng) : src);
      }
      const auto outcome = training_step(ckpt, adam, items);
      epoch_sum.mse += outcome.report.mse;
      epoch_sum.wt += outcome.report.wt;
      epoch_sum.total += outcome.report.total;
      ++rounds;
      HistoryRecord rec{"step", ckpt.step, ckpt.epoch + 1, outcome.report.mse, outcome.report.wt, outcome.report.total, 0.0, 0.0};
      result.history.push_back(rec);
      if (progress) progress(rec);
    }
    ++ckpt.epoch;
    ckpt.rng_state = rng_to_string(rng);

    HistoryRecord rec;
    rec.kind = "epoch";
    rec.step = ckpt.step;
    rec.epoch = ckpt.epoch;
    rec.mse = epoch_sum.mse / static_cast<double>(rounds);
    rec.wt = epoch_sum.wt / static_cast<double>(rounds);
    rec.total = epoch_sum.total / static_cast<double>(rounds);
    if (!val_images.empty()) {
      const EvalReport val = evaluate(ckpt.pipeline, val_images);
      rec.val_psnr = val.mean_psnr;
      rec.val_ssim = val.mean_ssim;
    }
    result.history.push_back(rec);
    if (progress) progress(rec);

    if (!have_best || rec.val_psnr > result.best_val_psnr) {
      have_best = true;
      result.best_val_psnr = rec.val_psnr;
      result.best = ckpt;
    }
  }
  if (!have_best) {
    result.best = ckpt;
    if (!val_images.empty()) result.best_val_psnr = evaluate(ckpt.pipeline, val_images).mean_psnr;
  }
  return result;
}

TrainResult train(const TrainConfig& config, const std::vector<Image>& train_images,
                  const std::vector<Image>& val_images, const ProgressFn& progress) {
  return resume(initial_checkpoint(config), train_images, val_images, progress);
}

// ---------------------------------------------------------------------------
// Ablations

std::string to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::independence: return "independence";
    case AblationSuite::mss_hfc: return "mss_hfc";
    case AblationSuite::loss: return "loss";
  }
  return "independence";
}

AblationSuite parse_suite(const std::string& s) {
  if (s == "independence") return AblationSuite::independence;
  if (s == "mss_hfc") return AblationSuite::mss_hfc;
  if (s == "loss") return AblationSuite::loss;
  throw ConfigError("unknown ablation suite '" + s + "' (expected independence, mss_hfc or loss)");
}

namespace {

std::string ratio_header(double r) {
  std::ostringstream os;
  os << std::setprecision(6) << r * 100.0 << "%";
  return os.str();
}

std::string mark(bool b) { return b ? "yes" : "no"; }

double trained_score(const TrainConfig& cfg, const std::vector<Image>& train_images,
                     const std::vector<Image>& test_images, const ProgressFn& progress) {
  const TrainResult r = train(cfg, train_images, {}, progress);
  return evaluate(r.last.pipeline, test_images).mean_psnr;
}

}  // namespace

AblationTable run_ablation(const TrainConfig& base, AblationSuite suite, const std::vector<Image>& train_images,
                           const std::vector<Image>& test_images, const std::vector<double>& ratios,
                           const ProgressFn& progress) {
  if (test_images.empty()) throw ConfigError("ablation needs a non-empty test set");
  AblationTable t;
  t.suite = to_string(suite);
  switch (suite) {
    case AblationSuite::independence: {
      t.title = "Mean PSNR under shared or independent updates of rho and lambda";
      t.label_headers = {"Independent rho", "Independent lambda"};
      t.value_headers = {"PSNR"};
      const auto indep_lambda =
          base.lambda_mode == unfolding::LambdaMode::shared ? unfolding::LambdaMode::buffer_mean : base.lambda_mode;
      for (const bool rho_indep : {false, true}) {
        for (const bool lambda_indep : {false, true}) {
          TrainConfig c = base;
          c.rho_mode = rho_indep ? unfolding::RhoMode::per_module : unfolding::RhoMode::shared;
          c.lambda_mode = lambda_indep ? indep_lambda : unfolding::LambdaMode::shared;
          t.rows.push_back({{mark(rho_indep), mark(lambda_indep)}, {trained_score(c, train_images, test_images, progress)}});
        }
      }
      break;
    }
    case AblationSuite::mss_hfc: {
      if (ratios.empty()) throw ConfigError("the mss_hfc suite needs at least one ratio");
      t.title = "Mean PSNR with and without mean subtraction and the high-frequency complement";
      t.label_headers = {"MSS", "HFC"};
      for (double r : ratios) t.value_headers.push_back(ratio_header(r));
      for (const bool mss : {false, true}) {
        for (const bool hfc : {false, true}) {
          AblationRow row{{mark(mss), mark(hfc)}, {}};
          for (double r : ratios) {
            TrainConfig c = base;
            c.ratio = r;
            c.mss_enabled = mss;
            c.hfc_enabled = hfc;
            row.values.push_back(trained_score(c, train_images, test_images, progress));
          }
          t.rows.push_back(std::move(row));
        }
      }
      break;
    }
    case AblationSuite::loss: {
      if (ratios.empty()) throw ConfigError("the loss suite needs at least one ratio");
      t.title = "Mean PSNR for each training loss";
      t.label_headers = {"Loss function"};
      for (double r : ratios) t.value_headers.push_back(ratio_header(r));
      for (const LossMode mode : {LossMode::mse_only, LossMode::total}) {
        AblationRow row{{mode == LossMode::mse_only ? "L_MSE" : "L_total"}, {}};
        for (double r : ratios) {
          TrainConfig c = base;
          c.ratio = r;
          c.loss_mode = mode;
          row.values.push_back(trained_score(c, train_images, test_images, progress));
        }
        t.rows.push_back(std::move(row));
      }
      break;
    }
  }
  return t;
}

bool independence_ordering_holds(const AblationTable& table) {
  const AblationRow* both = nullptr;
  std::vector<const AblationRow*> single;
  for (const auto& row : table.rows) {
    if (row.labels.size() != 2 || row.values.empty()) continue;
    const bool a = row.labels[0] == "yes";
    const bool b = row.labels[1] == "yes";
    if (a && b) both = &row;
    else if (a != b) single.push_back(&row);
  }
  if (both == nullptr || single.size() != 2) throw DimensionError("table is not an independence ablation");
  return std::all_of(single.begin(), single.end(), [&](const AblationRow* r) { return both->values[0] >= r->values[0]; });
}

std::string AblationTable::to_markdown() const {
  std::ostringstream os;
  os << "**" << title << "**\n\n|";
  for (const auto& h : label_headers) os << ' ' << h << " |";
  for (const auto& h : value_headers) os << ' ' << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < label_headers.size(); ++i) os << ":---:|";
  for (std::size_t i = 0; i < value_headers.size(); ++i) os << "---:|";
  os << '\n' << std::fixed << std::setprecision(2);
  for (const auto& row : rows) {
    os << '|';
    for (const auto& l : row.labels) os << ' ' << l << " |";
    for (double v : row.values) os << ' ' << v << " |";
    os << '\n';
  }
  return os.str();
}

std::string AblationTable::to_json() const {
  json j;
  j["suite"] = suite;
  j["title"] = title;
  j["label_headers"] = label_headers;
  j["value_headers"] = value_headers;
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back({{"labels", r.labels}, {"values", r.values}});
  return j.dump(2);
}

AblationTable AblationTable::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    AblationTable t;
    t.suite = j.at("suite").get<std::string>();
    t.title = j.at("title").get<std::string>();
    t.label_headers = j.at("label_headers").get<std::vector<std::string>>();
    t.value_headers = j.at("value_headers").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows"))
      t.rows.push_back({r.at("labels").get<std::vector<std::string>>(), r.at("values").get<std::vector<double>>()});
    return t;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed ablation table: ") + e.what());
  }
}

}  // namespace pipo::training
