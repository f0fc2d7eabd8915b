#include "pipo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace pipo::sampling {

SamplingOperator SamplingOperator::from_matrix(Matrix a, bool whitened, bool trainable) {
  if (a.rows() < 1 || a.rows() >= a.cols())
    throw DimensionError("sampling matrix must satisfy 1 <= m < n, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  if (!a.allFinite()) throw NumericError("sampling matrix has non-finite entries");
  return SamplingOperator{std::move(a), whitened, trainable};
}

SamplingOperator init_whitened(Index m, Index n, std::uint64_t seed) {
  if (m < 1 || m >= n)
    throw DimensionError("init_whitened requires 1 <= m < n, got m=" + std::to_string(m) + " n=" + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) g(i, j) = gauss(rng);

  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();

  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(m));
  std::sort(rows.begin(), rows.end());

  Matrix a(m, n);
  for (Index i = 0; i < m; ++i) a.row(i) = q.row(rows[static_cast<std::size_t>(i)]);
  return SamplingOperator{std::move(a), true, true};
}

Matrix whiten(const Matrix& A) {
  if (A.rows() < 1 || A.rows() > A.cols())
    throw DimensionError("whiten requires a wide matrix with at least one row");
  if (!A.allFinite()) throw NumericError("whiten: non-finite input");
  // A = U S V1^T (thin), so (AA^T)^{-1/2} A = U S^{-1} U^T U S V1^T = U V1^T.
  const Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s(s.size() - 1) > 1e-10 * s(0)))
    throw SingularityError("whiten: matrix is rank deficient (sigma_min / sigma_max <= 1e-10)");
  return svd.matrixU() * svd.matrixV().transpose();
}

Matrix augment(const SamplingOperator& op) {
  Matrix out(op.m() + 1, op.n());
  out.topRows(op.m()) = op.A;
  out.row(op.m()).setOnes();
  return out;
}

Measurement mss_sample(const SamplingOperator& op, const Eigen::Ref<const Vector>& x_star) {
  if (x_star.size() != op.n())
    throw DimensionError("mss_sample: patch has " + std::to_string(x_star.size()) + " entries, operator expects " +
                         std::to_string(op.n()));
  Measurement out;
  out.y_raw = op.A * x_star;
  out.mean_channel = x_star.sum();
  out.patch_mean = out.mean_channel / static_cast<double>(op.n());
  // y = y_raw - (1/n) A [y_{m+1}, ..., y_{m+1}]^T
  out.y = out.y_raw - op.A.rowwise().sum() * out.patch_mean;
  return out;
}

BatchMeasurement mss_sample_batch(const SamplingOperator& op, const Eigen::Ref<const Matrix>& x_star,
                                  bool subtract_mean) {
  if (x_star.rows() != op.n()) throw DimensionError("mss_sample_batch: patch length does not match operator");
  BatchMeasurement out;
  if (!subtract_mean) {
    out.y = op.A * x_star;
    out.patch_means = Vector::Zero(x_star.cols());
    return out;
  }
  out.patch_means = x_star.colwise().sum().transpose() / static_cast<double>(op.n());
  const Vector row_sums = op.A.rowwise().sum();
  out.y = op.A * x_star;
  out.y.noalias() -= row_sums * out.patch_means.transpose();
  return out;
}

Index measurement_count(double ratio, Index n) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
  const auto m = static_cast<Index>(std::llround(ratio * static_cast<double>(n)));
  return std::clamp<Index>(m, 1, n - 1);
}

}  // namespace pipo::sampling
