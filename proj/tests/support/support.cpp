#include "support.hpp"

#include <atomic>
#include <chrono>
#include <cmath>

namespace pipo::test {

namespace fs = std::filesystem;

imaging::Image synthetic_image(Index height, Index width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix px = RowMatrix::Zero(height, width);
  const double gx = u(rng) - 0.5, gy = u(rng) - 0.5;
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c) px(r, c) = gx * c / width + gy * r / height;
  for (int b = 0; b < 5; ++b) {
    const double cr = u(rng) * height, cc = u(rng) * width;
    const double s = (0.1 + 0.25 * u(rng)) * static_cast<double>(std::min(height, width));
    const double amp = u(rng) - 0.5;
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        px(r, c) += amp * std::exp(-d2 / (2 * s * s));
      }
  }
  for (int k = 0; k < 2; ++k) {
    const double r0 = u(rng) * height, r1 = r0 + (0.2 + 0.4 * u(rng)) * height;
    const double c0 = u(rng) * width, c1 = c0 + (0.2 + 0.4 * u(rng)) * width;
    const double amp = 0.6 * (u(rng) - 0.5);
    auto edge = [](double t) { return 1.0 / (1.0 + std::exp(-2.0 * t)); };
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c)
        px(r, c) += amp * edge(r - r0) * edge(r1 - r) * edge(c - c0) * edge(c1 - c);
  }
  const double lo = px.minCoeff(), hi = px.maxCoeff();
  px = ((px.array() - lo) / std::max(hi - lo, 1e-12) * 0.9 + 0.05).matrix();
  return imaging::Image(px, "synthetic_" + std::to_string(seed) + ".png");
}

std::vector<imaging::Image> synthetic_set(std::size_t count, Index height, Index width, std::uint64_t seed) {
  std::vector<imaging::Image> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto img = synthetic_image(height, width, seed * 1000 + i);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", i);
    img.name = name;
    out.push_back(std::move(img));
  }
  return out;
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

Vector gaussian_vector(Index size, std::mt19937_64& rng) { return gaussian_matrix(size, 1, rng).col(0); }

RowMatrix uniform_image(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("pipo_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_images(const fs::path& dir, const std::vector<imaging::Image>& images) {
  fs::create_directories(dir);
  for (const auto& img : images) imaging::save_image(dir / img.name, img);
}

imaging::Image quantized(const imaging::Image& img) {
  imaging::Image q = img;
  q.pixels = (img.pixels.array().max(0.0).min(1.0) * 255.0).round() / 255.0;
  return q;
}

void perturb_networks(unfolding::Pipeline& p, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  for (auto& s : p.modules)
    for (nn::ProxNet* net : {&s.prox, &s.hfc})
      for (nn::Param* param : net->params())
        for (Index i = 0; i < param->value.size(); ++i) param->value.data()[i] += g(rng);
}

}  // namespace pipo::test
