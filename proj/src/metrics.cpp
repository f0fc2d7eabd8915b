#include "pipo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace pipo::metrics {

using imaging::Image;

double WaveletCoeffs::energy() const {
  return ll.squaredNorm() + lh.squaredNorm() + hl.squaredNorm() + hh.squaredNorm();
}

namespace {

RowMatrix pad_even(const Eigen::Ref<const RowMatrix>& img) {
  return imaging::reflect_pad(img, img.rows() % 2, img.cols() % 2);
}

// Adjoint of pad_even: fold the reflected row/column back onto its source.
RowMatrix pad_even_adjoint(const RowMatrix& padded, Index height, Index width) {
  RowMatrix acc = padded;
  if (acc.cols() != width) {
    const Index src = imaging::reflect_index(width, width);
    acc.col(src) += acc.col(width);
  }
  if (acc.rows() != height) {
    const Index src = imaging::reflect_index(height, height);
    acc.row(src) += acc.row(height);
  }
  return acc.topLeftCorner(height, width);
}

RowMatrix idwt_even(const WaveletCoeffs& w) {
  const Index hh = w.ll.rows(), hw = w.ll.cols();
  RowMatrix out(2 * hh, 2 * hw);
  for (Index r = 0; r < hh; ++r) {
    for (Index c = 0; c < hw; ++c) {
      const double s = w.ll(r, c), v = w.lh(r, c), h = w.hl(r, c), d = w.hh(r, c);
      out(2 * r, 2 * c) = 0.5 * (s + v + h + d);
      out(2 * r, 2 * c + 1) = 0.5 * (s + v - h - d);
      out(2 * r + 1, 2 * c) = 0.5 * (s - v + h - d);
      out(2 * r + 1, 2 * c + 1) = 0.5 * (s - v - h + d);
    }
  }
  return out;
}

void check_same_shape(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DimensionError("image shapes differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

}  // namespace

WaveletCoeffs haar_dwt(const Eigen::Ref<const RowMatrix>& image) {
  if (image.size() == 0) throw DimensionError("haar_dwt: empty image");
  const RowMatrix x = pad_even(image);
  const Index hh = x.rows() / 2, hw = x.cols() / 2;
  WaveletCoeffs w;
  w.height = image.rows();
  w.width = image.cols();
  w.ll.resize(hh, hw);
  w.lh.resize(hh, hw);
  w.hl.resize(hh, hw);
  w.hh.resize(hh, hw);
  for (Index r = 0; r < hh; ++r) {
    for (Index c = 0; c < hw; ++c) {
      const double a = x(2 * r, 2 * c), b = x(2 * r, 2 * c + 1);
      const double cc = x(2 * r + 1, 2 * c), d = x(2 * r + 1, 2 * c + 1);
      w.ll(r, c) = 0.5 * (a + b + cc + d);
      w.lh(r, c) = 0.5 * (a + b - cc - d);
      w.hl(r, c) = 0.5 * (a - b + cc - d);
      w.hh(r, c) = 0.5 * (a - b - cc + d);
    }
  }
  return w;
}

RowMatrix haar_idwt(const WaveletCoeffs& coeffs) {
  return idwt_even(coeffs).topLeftCorner(coeffs.height, coeffs.width);
}

RowMatrix haar_dwt_adjoint(const WaveletCoeffs& coeffs) {
  return pad_even_adjoint(idwt_even(coeffs), coeffs.height, coeffs.width);
}

double wavelet_distance(const Eigen::Ref<const RowMatrix>& a, const Eigen::Ref<const RowMatrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("wavelet_distance: shape mismatch");
  // the transform is linear: WT(a) - WT(b) = WT(a - b)
  const RowMatrix diff = a - b;
  return haar_dwt(diff).energy();
}

RowMatrix wavelet_distance_grad(const Eigen::Ref<const RowMatrix>& a, const Eigen::Ref<const RowMatrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("wavelet_distance: shape mismatch");
  const RowMatrix diff = b - a;
  WaveletCoeffs w = haar_dwt(diff);
  w.ll *= 2.0;
  w.lh *= 2.0;
  w.hl *= 2.0;
  w.hh *= 2.0;
  return haar_dwt_adjoint(w);
}

double wavelet_loss(const std::vector<Image>& originals, const std::vector<std::vector<Image>>& outputs) {
  if (originals.size() != outputs.size()) throw DimensionError("wavelet_loss: N mismatch");
  if (originals.empty()) return 0.0;
  const std::size_t k = outputs.front().size();
  double acc = 0.0;
  for (std::size_t j = 0; j < originals.size(); ++j) {
    if (outputs[j].size() != k) throw DimensionError("wavelet_loss: ragged module outputs");
    for (const Image& out : outputs[j]) {
      check_same_shape(originals[j], out);
      acc += wavelet_distance(originals[j].pixels, out.pixels);
    }
  }
  if (k == 0) return 0.0;
  return acc / static_cast<double>(originals.size() * k);
}

double mse_loss(const std::vector<Image>& originals, const std::vector<Image>& finals) {
  if (originals.size() != finals.size()) throw DimensionError("mse_loss: N mismatch");
  if (originals.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < originals.size(); ++j) {
    check_same_shape(originals[j], finals[j]);
    acc += (originals[j].pixels - finals[j].pixels).squaredNorm() / static_cast<double>(originals[j].numel());
  }
  return acc / static_cast<double>(originals.size());
}

double psnr_from_mse(double mse) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Image& reference, const Image& candidate) {
  check_same_shape(reference, candidate);
  return psnr_from_mse((reference.pixels - candidate.pixels).squaredNorm() / static_cast<double>(reference.numel()));
}

namespace {

Vector gaussian_window(Index size, double sigma) {
  Vector w(size);
  const double c = static_cast<double>(size / 2);
  for (Index i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - c;
    w(i) = std::exp(-x * x / (2.0 * sigma * sigma));
  }
  return w / w.sum();
}

// Separable 'valid' correlation.
RowMatrix filter_valid(const RowMatrix& img, const Vector& w) {
  const Index k = w.size();
  const Index oh = img.rows() - k + 1, ow = img.cols() - k + 1;
  RowMatrix tmp = RowMatrix::Zero(img.rows(), ow);
  for (Index t = 0; t < k; ++t) tmp += w(t) * img.middleCols(t, ow);
  RowMatrix out = RowMatrix::Zero(oh, ow);
  for (Index t = 0; t < k; ++t) out += w(t) * tmp.middleRows(t, oh);
  return out;
}

}  // namespace

double ssim(const Image& reference, const Image& candidate) {
  check_same_shape(reference, candidate);
  if (reference.numel() == 0) throw DimensionError("ssim: empty image");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  Index win = std::min<Index>({11, reference.height(), reference.width()});
  if (win % 2 == 0) --win;
  const Vector w = gaussian_window(win, 1.5);

  const RowMatrix& a = reference.pixels;
  const RowMatrix& b = candidate.pixels;
  const RowMatrix mu_a = filter_valid(a, w);
  const RowMatrix mu_b = filter_valid(b, w);
  const RowMatrix aa = filter_valid(a.cwiseProduct(a), w);
  const RowMatrix bb = filter_valid(b.cwiseProduct(b), w);
  const RowMatrix ab = filter_valid(a.cwiseProduct(b), w);

  const auto mab = (mu_a.array() * mu_b.array());
  const auto var_a = aa.array() - mu_a.array().square();
  const auto var_b = bb.array() - mu_b.array().square();
  const auto cov = ab.array() - mab;
  const auto num = (2.0 * mab + kC1) * (2.0 * cov + kC2);
  const auto den = (mu_a.array().square() + mu_b.array().square() + kC1) * (var_a + var_b + kC2);
  return (num / den).mean();
}

}  // namespace pipo::metrics
