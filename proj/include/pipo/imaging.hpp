#pragma once

#include "pipo/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pipo::imaging {

/// Grayscale image with intensities in [0, 1]. Stored row-major so that the
/// raw buffer matches the project-wide rasterization order.
struct Image {
  RowMatrix pixels;
  std::string name;

  Image() = default;
  Image(Index height, Index width, double fill = 0.0);
  explicit Image(RowMatrix px, std::string image_name = {});

  Index height() const { return pixels.rows(); }
  Index width() const { return pixels.cols(); }
  Index numel() const { return pixels.size(); }
};

/// Geometry of a patch tiling: the image is reflect-padded on the bottom and
/// right edges up to the next multiple of `patch_side`.
struct GridShape {
  Index patch_side = 0;
  Index height = 0;  // original (unpadded) size
  Index width = 0;
  Index rows = 0;  // patch counts
  Index cols = 0;
  Index pad_bottom = 0;
  Index pad_right = 0;

  static GridShape for_image(Index height, Index width, Index patch_side);

  Index n() const { return patch_side * patch_side; }
  Index count() const { return rows * cols; }
  Index padded_height() const { return rows * patch_side; }
  Index padded_width() const { return cols * patch_side; }

  bool operator==(const GridShape&) const = default;
};

/// Patch vectors of one image. Column `r * cols + c` holds the patch at grid
/// position (r, c), rasterized row-major into an n-vector.
struct PatchGrid {
  GridShape shape;
  Matrix patches;  // n x count
};

PatchGrid extract_patches(const Image& image, Index patch_side);

/// Crops the padding away. Throws DimensionError if the patch matrix does not
/// match the grid shape.
Image splice_patches(const PatchGrid& grid);

/// Tiles patch vectors into the full padded canvas (no cropping).
RowMatrix splice_padded(const GridShape& shape, const Eigen::Ref<const Matrix>& patches);

/// Inverse of splice_padded: cuts a padded canvas into patch vectors.
Matrix split_padded(const GridShape& shape, const Eigen::Ref<const RowMatrix>& canvas);

/// Reflect-pads (mirror without edge repetition) on the bottom and right.
/// Pads longer than the image fold back repeatedly.
RowMatrix reflect_pad(const Eigen::Ref<const RowMatrix>& img, Index pad_bottom, Index pad_right);

/// Index into a reflected sequence of length `len` (period 2*(len-1)).
Index reflect_index(Index i, Index len);

// ---------------------------------------------------------------------------
// File I/O

/// Decodes one image, converts colour to luma (BT.601) and scales integer
/// data by its full-scale value. Throws IngestionError naming the file.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit grayscale image; values are clamped to [0, 1].
void save_image(const std::filesystem::path& path, const Image& image);

bool is_image_file(const std::filesystem::path& path);

struct SplitSpec {
  std::vector<double> fractions{1.0};
  std::uint64_t seed = 0;
};

/// Loads every image under `root` (recursively), shuffles under the seed and
/// partitions according to the fractions (largest-remainder rounding).
std::vector<std::vector<Image>> load_dataset(const std::filesystem::path& root,
                                             const SplitSpec& split);

/// Row counts for each split fraction; exposed for tests.
std::vector<std::size_t> split_counts(std::size_t total, const std::vector<double>& fractions);

}  // namespace pipo::imaging
