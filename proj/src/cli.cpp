#include "pipo/cli.hpp"

#include "pipo/archive.hpp"
#include "pipo/checkpoint.hpp"
#include "pipo/imaging.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace pipo::cli {

namespace fs = std::filesystem;
using config::IniDocument;
using imaging::Image;
using training::TrainConfig;

// ---------------------------------------------------------------------------
// RunConfig

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + config::format_double(v[i]);
  return s;
}

}  // namespace

std::set<std::string> RunConfig::known_keys() {
  std::set<std::string> k(TrainConfig::keys().begin(), TrainConfig::keys().end());
  for (const char* key : {"paths.data", "paths.checkpoint", "paths.out", "data.split", "data.split_seed", "ablation.suite",
                          "ablation.ratios", "ablation.seeds"})
    k.insert(key);
  return k;
}

void RunConfig::store(IniDocument& doc) const {
  train.store(doc);
  doc.set("paths.data", data.string());
  doc.set("paths.checkpoint", checkpoint.string());
  doc.set("paths.out", out.string());
  doc.set("data.split", join_doubles(split));
  doc.set("data.split_seed", std::to_string(effective_split_seed()));
  doc.set("ablation.suite", suite);
  doc.set("ablation.ratios", join_doubles(ablation_ratios));
  doc.set("ablation.seeds", std::to_string(ablation_seeds));
}

namespace {

RunConfig apply(const IniDocument& doc, RunConfig c) {
  doc.reject_unknown(RunConfig::known_keys());
  c.train = TrainConfig::load(doc, c.train);
  if (auto v = doc.get("paths.data")) c.data = *v;
  if (auto v = doc.get("paths.checkpoint")) c.checkpoint = *v;
  if (auto v = doc.get("paths.out")) c.out = *v;
  if (auto v = doc.get("data.split")) c.split = config::parse_double_list("data.split", *v);
  if (auto v = doc.get("data.split_seed")) {
    const long long s = config::parse_int("data.split_seed", *v);
    if (s < 0) throw ConfigError("data.split_seed must be non-negative");
    c.split_seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = doc.get("ablation.suite")) c.suite = *v;
  if (auto v = doc.get("ablation.ratios")) c.ablation_ratios = config::parse_double_list("ablation.ratios", *v);
  if (auto v = doc.get("ablation.seeds")) c.ablation_seeds = config::parse_int("ablation.seeds", *v);
  return c;
}

}  // namespace

RunConfig RunConfig::load(const IniDocument& doc) { return apply(doc, RunConfig{}); }

// ---------------------------------------------------------------------------
// SVG chart

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  constexpr double W = 720, H = 440, L = 70, R = 180, T = 40, B = 60;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << std::setprecision(3)
       << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
    os << std::setprecision(2);
    os << "<line x1=\"" << L << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << py(yv)
       << "\" stroke=\"#dddddd\"/>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = colours[k % (sizeof colours / sizeof *colours)];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Flags {
  std::string config;
  double ratio = 0;
  long long modules = 0;
  long long seed = 0;
  std::string out;
  bool overwrite = false;
  std::string checkpoint;
  std::string lambda_mode;
  std::string coupling;
  std::string data;
  long long epochs = 0;
  long long batch_size = 0;
  long long channels = 0;
  std::string suite;
  std::string ratios;
  long long seeds = 0;

  std::map<std::string, CLI::Option*> opts;
  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_flags(CLI::App& sub, Flags& f) {
  f.opts["config"] = sub.add_option("--config", f.config, "Configuration file ([section] key = value)");
  f.opts["ratio"] = sub.add_option("--ratio", f.ratio, "Compression ratio m/n in (0, 1]");
  f.opts["modules"] = sub.add_option("--modules,-K", f.modules, "Number of reconstruction modules");
  f.opts["seed"] = sub.add_option("--seed", f.seed, "Random seed");
  f.opts["out"] = sub.add_option("--out,-o", f.out, "Output directory");
  sub.add_flag("--overwrite", f.overwrite, "Replace existing artifacts in the output directory");
  f.opts["checkpoint"] = sub.add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  f.opts["lambda-mode"] = sub.add_option("--lambda-mode", f.lambda_mode, "buffer_mean, per_sample_zero_init or shared");
  f.opts["coupling"] = sub.add_option("--coupling", f.coupling, "detached or end2end");
  f.opts["data"] = sub.add_option("--data", f.data, std::string("Input directory or file (default $") + kDataRootEnv + ")");
  f.opts["epochs"] = sub.add_option("--epochs", f.epochs, "Training epochs");
  f.opts["batch-size"] = sub.add_option("--batch-size", f.batch_size, "Images per optimizer step");
  f.opts["channels"] = sub.add_option("--channels", f.channels, "Feature channels of each network");
  f.opts["suite"] = sub.add_option("--suite", f.suite, "Ablation suite: independence, mss_hfc or loss");
  f.opts["ratios"] = sub.add_option("--ratios", f.ratios, "Comma-separated ratios for the ablation columns");
  f.opts["seeds"] = sub.add_option("--seeds", f.seeds, "Number of seeds for the ablation");
}

// Defaults, then the config file, then flags.
RunConfig resolve(const Flags& f, RunConfig base = {}) {
  RunConfig c = std::move(base);
  if (!f.config.empty()) c = apply(IniDocument::load(f.config), std::move(c));
  if (f.given("ratio")) c.train.ratio = f.ratio;
  if (f.given("modules")) c.train.modules = f.modules;
  if (f.given("seed")) {
    if (f.seed < 0) throw ConfigError("--seed must be non-negative");
    c.train.seed = static_cast<std::uint64_t>(f.seed);
  }
  if (f.given("out")) c.out = f.out;
  if (f.given("checkpoint")) c.checkpoint = f.checkpoint;
  if (f.given("lambda-mode")) c.train.lambda_mode = unfolding::parse_lambda_mode(f.lambda_mode);
  if (f.given("coupling")) c.train.coupling = unfolding::parse_coupling(f.coupling);
  if (f.given("data")) c.data = f.data;
  if (f.given("epochs")) c.train.epochs = f.epochs;
  if (f.given("batch-size")) c.train.batch_size = f.batch_size;
  if (f.given("channels")) c.train.channels = f.channels;
  if (f.given("suite")) c.suite = f.suite;
  if (f.given("ratios")) c.ablation_ratios = config::parse_double_list("--ratios", f.ratios);
  if (f.given("seeds")) c.ablation_seeds = f.seeds;
  c.overwrite = f.overwrite;
  if (c.data.empty())
    if (const char* root = std::getenv(kDataRootEnv)) c.data = root;
  c.train.validate();
  if (c.ablation_seeds < 1) throw ConfigError("ablation.seeds must be at least 1");
  return c;
}

void require_data(const RunConfig& c) {
  if (c.data.empty())
    throw ConfigError(std::string("no input given: pass --data or set ") + kDataRootEnv);
  if (!fs::exists(c.data)) throw ConfigError("input path does not exist: " + c.data.string());
}

void require_checkpoint(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("this command needs --checkpoint");
  if (!fs::is_regular_file(c.checkpoint)) throw ConfigError("checkpoint not found: " + c.checkpoint.string());
}

/// Output files of one command, checked before any computation.
class Artifacts {
 public:
  Artifacts(const RunConfig& c, std::vector<std::string> names) : dir_(c.out), overwrite_(c.overwrite) {
    for (auto& n : names) {
      const fs::path p = dir_ / n;
      if (fs::exists(p) && !overwrite_)
        throw ConfigError(p.string() + " already exists; pass --overwrite to replace it");
    }
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  /// For names only known after computing (per-image outputs).
  fs::path fresh(const fs::path& rel) const {
    const fs::path p = dir_ / rel;
    if (fs::exists(p) && !overwrite_) throw ConfigError(p.string() + " already exists; pass --overwrite to replace it");
    fs::create_directories(p.parent_path());
    return p;
  }

  void text(const std::string& name, const std::string& body) const {
    std::ofstream o(path(name), std::ios::trunc);
    if (!o) throw IoError("cannot write " + path(name).string());
    o << body;
    if (!o) throw IoError("failed writing " + path(name).string());
  }

 private:
  fs::path dir_;
  bool overwrite_;
};

void echo_config(const Artifacts& a, const RunConfig& c) {
  IniDocument doc;
  c.store(doc);
  a.text("config.ini", doc.render());
}

std::vector<Image> load_inputs(const fs::path& p) {
  if (fs::is_regular_file(p)) {
    Image img = imaging::load_image(p);
    img.name = p.filename().string();
    return {img};
  }
  return imaging::load_dataset(p, {{1.0}, 0}).front();
}

// ---------------------------------------------------------------------------

int cmd_sample(const RunConfig& c, std::ostream& out) {
  require_data(c);
  if (!c.checkpoint.empty()) require_checkpoint(c);
  const Artifacts a(c, {"measurements.pma", "config.ini"});
  const unfolding::Pipeline pipeline =
      c.checkpoint.empty()
          ? unfolding::Pipeline::create(c.train.pipeline_options(), c.train.measurements(), c.train.seed)
          : training::load_checkpoint(c.checkpoint).pipeline;
  std::vector<archive::MeasurementRecord> records;
  for (const Image& img : load_inputs(c.data)) records.push_back(archive::record_image(pipeline, img));
  archive::save(a.path("measurements.pma"), records);
  echo_config(a, c);
  out << "sampled " << records.size() << " image(s): n = " << pipeline.n() << ", m = " << pipeline.m() << " -> "
      << a.path("measurements.pma").string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  require_data(c);
  const Artifacts a(c, {"last.ckpt", "best.ckpt", "history.jsonl", "config.ini"});
  const auto splits = imaging::load_dataset(c.data, {c.split, c.effective_split_seed()});
  const auto& train_set = splits.front();
  const std::vector<Image> val_set = splits.size() > 1 ? splits[1] : std::vector<Image>{};
  out << "training on " << train_set.size() << " image(s), validating on " << val_set.size() << '\n';

  auto progress = [&](const training::HistoryRecord& r) {
    if (r.kind != "epoch") return;
    out << "epoch " << r.epoch << " step " << r.step << " loss " << std::setprecision(6) << r.total;
    if (!val_set.empty()) out << " val PSNR " << std::fixed << std::setprecision(2) << r.val_psnr << std::defaultfloat;
    out << '\n';
  };

  training::TrainResult result;
  if (!c.checkpoint.empty()) {
    training::Checkpoint start = training::load_checkpoint(c.checkpoint);
    start.config.epochs = c.train.epochs;
    out << "resuming from epoch " << start.epoch << '\n';
    result = training::resume(std::move(start), train_set, val_set, progress);
  } else {
    result = training::train(c.train, train_set, val_set, progress);
  }
  training::save_checkpoint(a.path("last.ckpt"), result.last);
  training::save_checkpoint(a.path("best.ckpt"), result.best);
  training::write_history(a.path("history.jsonl"), result.history);
  echo_config(a, c);
  out << "wrote " << a.path("last.ckpt").string() << " and " << a.path("best.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  require_checkpoint(c);
  require_data(c);
  const Artifacts a(c, {"eval.md", "eval.json", "config.ini"});
  const auto ckpt = training::load_checkpoint(c.checkpoint);
  const auto report = training::evaluate(ckpt, load_inputs(c.data));
  a.text("eval.md", report.to_markdown());
  nlohmann::json j;
  j["checkpoint"] = c.checkpoint.string();
  j["mean_psnr"] = report.mean_psnr;
  j["mean_ssim"] = report.mean_ssim;
  j["images"] = nlohmann::json::array();
  for (const auto& s : report.images) j["images"].push_back({{"image", s.name}, {"psnr", s.psnr}, {"ssim", s.ssim}});
  a.text("eval.json", j.dump(2) + "\n");
  echo_config(a, c);
  out << report.to_markdown();
  return 0;
}

bool is_archive(const fs::path& p) { return fs::is_regular_file(p) && p.extension() == ".pma"; }

fs::path output_name(const std::string& name) {
  fs::path p(name);
  p.replace_extension(".png");
  return p;
}

int cmd_reconstruct(const RunConfig& c, std::ostream& out) {
  require_checkpoint(c);
  require_data(c);
  const Artifacts a(c, {"config.ini"});
  const auto ckpt = training::load_checkpoint(c.checkpoint);
  const auto& pipeline = ckpt.pipeline;
  std::size_t written = 0;
  if (is_archive(c.data)) {
    for (const auto& rec : archive::load(c.data)) {
      if (rec.grid.n() != pipeline.n() || rec.m() != pipeline.m())
        throw ConfigError("archive record '" + rec.name + "' has n = " + std::to_string(rec.grid.n()) + ", m = " +
                          std::to_string(rec.m()) + " but the checkpoint expects n = " + std::to_string(pipeline.n()) +
                          ", m = " + std::to_string(pipeline.m()));
      if (rec.mean_subtracted != pipeline.options.mss)
        throw ConfigError("archive record '" + rec.name + "' does not match the checkpoint's mean-subtraction setting");
      const unfolding::SampledImage s = archive::to_sampled(rec);
      const auto trace = unfolding::reconstruct(pipeline, std::span<const unfolding::SampledImage>(&s, 1));
      imaging::save_image(a.fresh(output_name(rec.name)), trace.finals.front());
      ++written;
    }
  } else {
    for (const Image& img : load_inputs(c.data)) {
      const auto trace = unfolding::forward(pipeline, std::span<const Image>(&img, 1));
      imaging::save_image(a.fresh(output_name(img.name)), trace.finals.front());
      out << img.name << ": PSNR " << std::fixed << std::setprecision(2) << metrics::psnr(img, trace.finals.front())
          << " dB\n" << std::defaultfloat;
      ++written;
    }
  }
  echo_config(a, c);
  out << "reconstructed " << written << " image(s) into " << c.out.string() << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& c, std::ostream& out) {
  require_data(c);
  const auto suite = training::parse_suite(c.suite);
  const std::string stem = "ablation_" + training::to_string(suite);
  std::vector<std::string> names{stem + ".md", stem + ".json", "config.ini"};
  if (suite == training::AblationSuite::independence) names.push_back(stem + "_ordering.txt");
  const Artifacts a(c, names);

  const auto splits = imaging::load_dataset(c.data, {c.split, c.effective_split_seed()});
  if (splits.size() < 2) throw ConfigError("ablation needs a train/test split (data.split with at least two parts)");
  const auto& train_set = splits.front();
  const auto& test_set = splits.back();

  training::AblationTable mean;
  std::ostringstream ordering;
  for (Index s = 0; s < c.ablation_seeds; ++s) {
    TrainConfig base = c.train;
    base.seed = c.train.seed + static_cast<std::uint64_t>(s);
    out << "suite " << c.suite << ", seed " << base.seed << '\n';
    auto table = training::run_ablation(base, suite, train_set, test_set, c.ablation_ratios);
    if (suite == training::AblationSuite::independence) {
      const bool holds = training::independence_ordering_holds(table);
      ordering << "seed " << base.seed << ": independent rho and lambda "
               << (holds ? "scores at least" : "scores below") << " both single-shared rows (";
      for (std::size_t r = 0; r < table.rows.size(); ++r)
        ordering << (r ? ", " : "") << table.rows[r].labels[0] << "/" << table.rows[r].labels[1] << " "
                 << std::fixed << std::setprecision(2) << table.rows[r].values[0] << std::defaultfloat;
      ordering << ")\n";
    }
    if (s == 0) {
      mean = table;
    } else {
      for (std::size_t r = 0; r < mean.rows.size(); ++r)
        for (std::size_t v = 0; v < mean.rows[r].values.size(); ++v) mean.rows[r].values[v] += table.rows[r].values[v];
    }
  }
  for (auto& row : mean.rows)
    for (auto& v : row.values) v /= static_cast<double>(c.ablation_seeds);
  if (c.ablation_seeds > 1) mean.title += " (mean of " + std::to_string(c.ablation_seeds) + " seeds)";

  a.text(stem + ".md", mean.to_markdown());
  a.text(stem + ".json", mean.to_json() + "\n");
  if (suite == training::AblationSuite::independence) {
    std::size_t held = 0, total = 0;
    std::istringstream lines(ordering.str());
    for (std::string line; std::getline(lines, line); ++total) held += line.find("at least") != std::string::npos;
    ordering << "ordering held in " << held << " of " << total << " seed(s)\n";
    a.text(stem + "_ordering.txt", ordering.str());
    out << ordering.str();
  }
  echo_config(a, c);
  out << mean.to_markdown();
  return 0;
}

double parse_ratio_header(const std::string& h) {
  try {
    std::size_t used = 0;
    const double v = std::stod(h, &used);
    return h.substr(used) == "%" ? v : std::nan("");
  } catch (const std::exception&) {
    return std::nan("");
  }
}

int cmd_report(const RunConfig& c, std::ostream& out) {
  const fs::path root = c.data.empty() ? c.out : c.data;
  if (!fs::is_directory(root)) throw ConfigError("report input is not a directory: " + root.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<training::AblationTable> tables;
  std::vector<std::pair<std::string, std::vector<training::HistoryRecord>>> runs;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    if (name.rfind("ablation_", 0) == 0 && f.extension() == ".json") {
      std::ifstream in(f);
      std::stringstream ss;
      ss << in.rdbuf();
      tables.push_back(training::AblationTable::from_json(ss.str()));
    } else if (name == "history.jsonl") {
      runs.emplace_back(fs::relative(f.parent_path(), root).generic_string(), training::read_history(f));
    }
  }
  if (tables.empty() && runs.empty())
    throw ConfigError("no ablation tables or training histories found under " + root.string());
  const auto order = [](const std::string& s) { return s == "independence" ? 0 : s == "mss_hfc" ? 1 : 2; };
  std::stable_sort(tables.begin(), tables.end(),
                   [&](const auto& x, const auto& y) { return order(x.suite) < order(y.suite); });

  std::vector<std::string> names{"report.md", "config.ini"};
  std::vector<Series> ratio_series;
  for (const auto& t : tables)
    for (const auto& row : t.rows) {
      Series s;
      for (const auto& l : row.labels) s.label += (s.label.empty() ? "" : " ") + l;
      s.label = t.suite + ": " + s.label;
      for (std::size_t v = 0; v < row.values.size() && v < t.value_headers.size(); ++v) {
        const double r = parse_ratio_header(t.value_headers[v]);
        if (std::isfinite(r)) {
          s.x.push_back(r);
          s.y.push_back(row.values[v]);
        }
      }
      if (!s.x.empty()) ratio_series.push_back(std::move(s));
    }
  if (!ratio_series.empty()) names.push_back("psnr_vs_ratio.svg");
  if (!runs.empty()) names.push_back("training_curves.svg");
  const Artifacts a(c, names);

  std::ostringstream md;
  md << "# Experiment report\n\n";
  if (!tables.empty()) {
    md << "## Ablations\n\n";
    for (const auto& t : tables) md << t.to_markdown() << '\n';
  }
  if (!runs.empty()) {
    md << "## Training runs\n\n| run | epochs | steps | final train loss | best val PSNR | final val SSIM |\n"
       << "|---|---:|---:|---:|---:|---:|\n";
    for (const auto& [name, hist] : runs) {
      const training::HistoryRecord* last = nullptr;
      double best = -1e300;
      for (const auto& r : hist)
        if (r.kind == "epoch") {
          last = &r;
          best = std::max(best, r.val_psnr);
        }
      md << "| " << (name.empty() ? "." : name) << " | ";
      if (last == nullptr) {
        md << "0 | 0 | - | - | - |\n";
        continue;
      }
      md << last->epoch << " | " << last->step << " | " << std::setprecision(6) << last->total << " | " << std::fixed
         << std::setprecision(2) << best << " | " << std::setprecision(4) << last->val_ssim << " |\n"
         << std::defaultfloat;
    }
    md << '\n';
  }
  if (!ratio_series.empty()) {
    a.text("psnr_vs_ratio.svg", svg_line_chart("Mean PSNR against compression ratio", "ratio (%)", "PSNR (dB)", ratio_series));
    md << "![PSNR against ratio](psnr_vs_ratio.svg)\n\n";
  }
  if (!runs.empty()) {
    std::vector<Series> curves;
    for (const auto& [name, hist] : runs) {
      Series s{name.empty() ? "." : name, {}, {}};
      for (const auto& r : hist)
        if (r.kind == "epoch") {
          s.x.push_back(static_cast<double>(r.epoch));
          s.y.push_back(r.val_psnr);
        }
      curves.push_back(std::move(s));
    }
    a.text("training_curves.svg", svg_line_chart("Validation PSNR per epoch", "epoch", "PSNR (dB)", curves));
    md << "![Validation PSNR per epoch](training_curves.svg)\n";
  }
  a.text("report.md", md.str());
  echo_config(a, c);
  out << "wrote " << a.path("report.md").string() << " (" << tables.size() << " table(s), " << runs.size()
      << " run(s))\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressive-sensing reconstruction with unfolded penalty modules"};
  app.require_subcommand(1);
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&);
  };
  const Cmd cmds[] = {
      {"sample", "Write mean-subtracted measurements of images to an archive", cmd_sample},
      {"train", "Train a pipeline (or resume from --checkpoint)", cmd_train},
      {"eval", "Report PSNR/SSIM of a checkpoint on images", cmd_eval},
      {"reconstruct", "Reconstruct images or a measurement archive", cmd_reconstruct},
      {"ablate", "Run an ablation suite", cmd_ablate},
      {"report", "Render tables and plots from stored results", cmd_report},
  };
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : cmds) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_flags(*sub, flags[cmd.name]);
    subs[cmd.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (const auto& cmd : cmds) {
    if (!subs[cmd.name]->parsed()) continue;
    const Flags& f = flags[cmd.name];
    try {
      RunConfig c = resolve(f);
      if (std::string(cmd.name) == "train" && !c.checkpoint.empty()) {
        // resuming: architecture comes from the checkpoint; the run config may
        // only change the epoch budget and paths
        require_checkpoint(c);
        const TrainConfig stored = training::load_checkpoint(c.checkpoint).config;
        RunConfig base;
        base.train = stored;
        c = resolve(f, base);
        IniDocument want, have;
        TrainConfig probe = c.train;
        probe.epochs = stored.epochs;
        probe.store(want);
        stored.store(have);
        if (want.render() != have.render())
          throw ConfigError("resuming: settings other than training.epochs differ from the checkpoint's");
      }
      return cmd.fn(c, out);
    } catch (const ConfigError& e) {
      err << "pipo " << cmd.name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "pipo " << cmd.name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace pipo::cli
