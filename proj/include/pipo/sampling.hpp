#pragma once

#include "pipo/common.hpp"

#include <cstdint>

namespace pipo::sampling {

/// The m x n measurement matrix A (m < n).
struct SamplingOperator {
  Matrix A;
  bool whitened = false;
  bool trainable = true;

  Index m() const { return A.rows(); }
  Index n() const { return A.cols(); }

  /// Validates m < n and finiteness.
  static SamplingOperator from_matrix(Matrix a, bool whitened = false, bool trainable = true);
};

/// Mean-subtracted measurement of one patch.
struct Measurement {
  Vector y;             // A (x* - mean 1)
  Vector y_raw;         // A x*
  double mean_channel;  // sum of pixels, the extra row of the augmented matrix
  double patch_mean;    // mean_channel / n
};

/// Mean-subtracted measurements of a batch of patches (one per column).
struct BatchMeasurement {
  Matrix y;           // m x B
  Vector patch_means; // B
};

/// Draws a Gaussian n x n matrix, orthonormalizes it (Householder QR) and keeps
/// m rows chosen uniformly at random. The result has orthonormal rows, which
/// is the maximum-likelihood-motivated form U [I_m 0] V^T of (AA^T)^{-1/2} A.
SamplingOperator init_whitened(Index m, Index n, std::uint64_t seed);

/// (A A^T)^{-1/2} A. Throws SingularityError if A is not of full row rank
/// (smallest singular value <= 1e-10 * largest).
Matrix whiten(const Matrix& A);

/// [A; 1 ... 1], the (m+1) x n augmented matrix.
Matrix augment(const SamplingOperator& op);

Measurement mss_sample(const SamplingOperator& op, const Eigen::Ref<const Vector>& x_star);

/// Column-wise mss_sample. With `subtract_mean == false` the raw measurement
/// A x* is returned and the means are reported as zero.
BatchMeasurement mss_sample_batch(const SamplingOperator& op, const Eigen::Ref<const Matrix>& x_star,
                                  bool subtract_mean = true);

/// round(ratio * n) clamped to [1, n-1].
Index measurement_count(double ratio, Index n);

}  // namespace pipo::sampling
