#pragma once

#include "pipo/common.hpp"
#include "pipo/imaging.hpp"

#include <vector>

namespace pipo::metrics {

/// One-level orthonormal Haar decomposition. For the 2x2 block [[a, b], [c, d]]:
///   LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2, HH = (a-b-c+d)/2.
/// Odd dimensions are reflect-padded by one row/column first; `height` and
/// `width` keep the original size.
struct WaveletCoeffs {
  RowMatrix ll, lh, hl, hh;
  Index height = 0;
  Index width = 0;

  bool padded() const { return height % 2 != 0 || width % 2 != 0; }
  /// Sum of squared coefficients over all four bands.
  double energy() const;
};

WaveletCoeffs haar_dwt(const Eigen::Ref<const RowMatrix>& image);
/// Inverse transform, cropped back to the original size.
RowMatrix haar_idwt(const WaveletCoeffs& coeffs);
/// Adjoint of haar_dwt (equals the inverse when no padding was applied).
RowMatrix haar_dwt_adjoint(const WaveletCoeffs& coeffs);

/// Squared Frobenius distance between stacked sub-bands, ||WT(a) - WT(b)||_F^2.
double wavelet_distance(const Eigen::Ref<const RowMatrix>& a, const Eigen::Ref<const RowMatrix>& b);
/// d/d(b) of wavelet_distance(a, b).
RowMatrix wavelet_distance_grad(const Eigen::Ref<const RowMatrix>& a, const Eigen::Ref<const RowMatrix>& b);

/// (1/NK) sum_j sum_k ||WT(X_j) - WT(out_jk)||_F^2 where outputs[j][k] is the
/// k-th module's whole-image output for original j.
double wavelet_loss(const std::vector<imaging::Image>& originals,
                    const std::vector<std::vector<imaging::Image>>& outputs);

/// (1/(numel N)) sum_j ||X_j - Xhat_j||_F^2.
double mse_loss(const std::vector<imaging::Image>& originals, const std::vector<imaging::Image>& finals);

inline constexpr double kDefaultGamma = 0.01;

inline double total_loss(double mse, double wt, double gamma = kDefaultGamma) { return mse + gamma * wt; }

struct LossReport {
  double mse = 0.0;
  double wt = 0.0;
  double total = 0.0;
  std::vector<double> per_module_wt;  // (1/N) sum_j distance for module k
};

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for unit peak; capped at 100 dB (zero MSE included).
double psnr(const imaging::Image& reference, const imaging::Image& candidate);
double psnr_from_mse(double mse);

/// Single-scale SSIM: Gaussian window (11 taps, sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, mean over the valid region. Images smaller than the window
/// use the largest odd window that fits.
double ssim(const imaging::Image& reference, const imaging::Image& candidate);

}  // namespace pipo::metrics
