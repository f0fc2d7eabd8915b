#pragma once

#include "pipo/imaging.hpp"
#include "pipo/unfolding.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace pipo::test {

/// Smooth blobs, a tilted ramp and a couple of soft-edged rectangles, scaled
/// into [0.05, 0.95]. Deterministic in the seed.
imaging::Image synthetic_image(Index height, Index width, std::uint64_t seed);
std::vector<imaging::Image> synthetic_set(std::size_t count, Index height, Index width, std::uint64_t seed);

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng);
Vector gaussian_vector(Index size, std::mt19937_64& rng);
RowMatrix uniform_image(Index rows, Index cols, std::mt19937_64& rng);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

void write_images(const std::filesystem::path& dir, const std::vector<imaging::Image>& images);

/// Quantizes to 8 bits, matching what a PNG round trip produces.
imaging::Image quantized(const imaging::Image& img);

/// Randomizes every learnable of the pipeline's networks (including the final
/// convolutions that init() leaves at zero) with the given scale.
void perturb_networks(unfolding::Pipeline& p, double scale, std::mt19937_64& rng);

}  // namespace pipo::test
