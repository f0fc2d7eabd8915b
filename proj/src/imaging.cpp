#include "pipo/imaging.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pipo::imaging {

namespace fs = std::filesystem;

Image::Image(Index height, Index width, double fill) : pixels(RowMatrix::Constant(height, width, fill)) {}

Image::Image(RowMatrix px, std::string image_name) : pixels(std::move(px)), name(std::move(image_name)) {}

GridShape GridShape::for_image(Index height, Index width, Index patch_side) {
  if (patch_side < 2) throw ConfigError("patch_side must be at least 2, got " + std::to_string(patch_side));
  if (height < 1 || width < 1) throw DimensionError("image must be at least 1x1");
  GridShape s;
  s.patch_side = patch_side;
  s.height = height;
  s.width = width;
  s.rows = (height + patch_side - 1) / patch_side;
  s.cols = (width + patch_side - 1) / patch_side;
  s.pad_bottom = s.rows * patch_side - height;
  s.pad_right = s.cols * patch_side - width;
  return s;
}

Index reflect_index(Index i, Index len) {
  if (len == 1) return 0;
  const Index period = 2 * (len - 1);
  Index r = i % period;
  if (r < 0) r += period;
  return r < len ? r : period - r;
}

RowMatrix reflect_pad(const Eigen::Ref<const RowMatrix>& img, Index pad_bottom, Index pad_right) {
  const Index h = img.rows(), w = img.cols();
  RowMatrix out(h + pad_bottom, w + pad_right);
  for (Index r = 0; r < out.rows(); ++r) {
    const Index sr = reflect_index(r, h);
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = img(sr, reflect_index(c, w));
  }
  return out;
}

RowMatrix splice_padded(const GridShape& shape, const Eigen::Ref<const Matrix>& patches) {
  const Index side = shape.patch_side;
  if (patches.rows() != shape.n() || patches.cols() != shape.count())
    throw DimensionError("patch matrix " + std::to_string(patches.rows()) + "x" + std::to_string(patches.cols()) +
                         " does not match grid of " + std::to_string(shape.count()) + " patches of size " +
                         std::to_string(shape.n()));
  RowMatrix canvas(shape.padded_height(), shape.padded_width());
  for (Index pr = 0; pr < shape.rows; ++pr) {
    for (Index pc = 0; pc < shape.cols; ++pc) {
      const auto col = patches.col(pr * shape.cols + pc);
      for (Index r = 0; r < side; ++r)
        for (Index c = 0; c < side; ++c) canvas(pr * side + r, pc * side + c) = col(r * side + c);
    }
  }
  return canvas;
}

Matrix split_padded(const GridShape& shape, const Eigen::Ref<const RowMatrix>& canvas) {
  const Index side = shape.patch_side;
  if (canvas.rows() != shape.padded_height() || canvas.cols() != shape.padded_width())
    throw DimensionError("canvas does not match padded grid size");
  Matrix patches(shape.n(), shape.count());
  for (Index pr = 0; pr < shape.rows; ++pr) {
    for (Index pc = 0; pc < shape.cols; ++pc) {
      auto col = patches.col(pr * shape.cols + pc);
      for (Index r = 0; r < side; ++r)
        for (Index c = 0; c < side; ++c) col(r * side + c) = canvas(pr * side + r, pc * side + c);
    }
  }
  return patches;
}

PatchGrid extract_patches(const Image& image, Index patch_side) {
  PatchGrid grid;
  grid.shape = GridShape::for_image(image.height(), image.width(), patch_side);
  const RowMatrix padded = reflect_pad(image.pixels, grid.shape.pad_bottom, grid.shape.pad_right);
  grid.patches = split_padded(grid.shape, padded);
  return grid;
}

Image splice_patches(const PatchGrid& grid) {
  const RowMatrix canvas = splice_padded(grid.shape, grid.patches);
  return Image(canvas.topLeftCorner(grid.shape.height, grid.shape.width));
}

// ---------------------------------------------------------------------------

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".bmp" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".tif" ||
         ext == ".tiff";
}

namespace {

double full_scale(int depth) {
  switch (depth) {
    case CV_8U: return 255.0;
    case CV_16U: return 65535.0;
    case CV_8S: return 127.0;
    case CV_16S: return 32767.0;
    default: return 1.0;
  }
}

}  // namespace

Image load_image(const fs::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  } catch (const cv::Exception& e) {
    throw IngestionError("cannot decode image '" + path.string() + "': " + e.what());
  }
  if (raw.empty()) throw IngestionError("cannot decode image '" + path.string() + "'");

  const double scale = full_scale(raw.depth());
  cv::Mat f;
  raw.convertTo(f, CV_64F, 1.0 / scale);

  const int channels = f.channels();
  RowMatrix px(f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r) {
    const double* row = f.ptr<double>(r);
    for (int c = 0; c < f.cols; ++c) {
      double v;
      if (channels == 1) {
        v = row[c];
      } else if (channels == 2) {  // gray + alpha
        v = row[2 * c];
      } else {  // BGR or BGRA, BT.601 luma
        const double* p = row + channels * c;
        v = 0.299 * p[2] + 0.587 * p[1] + 0.114 * p[0];
      }
      if (!std::isfinite(v)) throw IngestionError("non-finite pixel in '" + path.string() + "'");
      px(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return Image(std::move(px), path.filename().string());
}

void save_image(const fs::path& path, const Image& image) {
  cv::Mat out(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8U);
  for (Index r = 0; r < image.height(); ++r) {
    auto* row = out.ptr<unsigned char>(static_cast<int>(r));
    for (Index c = 0; c < image.width(); ++c)
      row[c] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels(r, c), 0.0, 1.0) * 255.0));
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image '" + path.string() + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write image '" + path.string() + "'");
}

std::vector<std::size_t> split_counts(std::size_t total, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ConfigError("split needs at least one fraction");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    // nudge so that e.g. 0.8 * 10 = 7.999... still floors to 8
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

std::vector<std::vector<Image>> load_dataset(const fs::path& root, const SplitSpec& split) {
  if (!fs::exists(root)) throw ConfigError("dataset path does not exist: " + root.string());

  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  if (files.empty()) throw ConfigError("no images found under " + root.string());
  std::sort(files.begin(), files.end());

  const auto counts = split_counts(files.size(), split.fractions);

  std::mt19937_64 rng(split.seed);
  std::shuffle(files.begin(), files.end(), rng);

  std::vector<std::vector<Image>> out(counts.size());
  std::size_t at = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    // keep each split in a stable (sorted) order independent of the shuffle
    std::vector<fs::path> part(files.begin() + at, files.begin() + at + counts[s]);
    at += counts[s];
    std::sort(part.begin(), part.end());
    for (const auto& p : part) {
      Image img = load_image(p);
      img.name = fs::relative(p, fs::is_directory(root) ? root : root.parent_path()).string();
      out[s].push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace pipo::imaging
