#include "pipo/oracle.hpp"

#include "pipo/metrics.hpp"

#include <cmath>

namespace pipo::oracle {

Vector soft_threshold(const Eigen::Ref<const Vector>& v, double t) {
  if (!(t >= 0.0)) throw ConfigError("soft_threshold: threshold must be non-negative");
  return v.array().sign() * (v.array().abs() - t).max(0.0);
}

void ClassicalConfig::validate() const {
  if (!(rho > 0.0)) throw ConfigError("classical solver: rho must be positive");
  if (!(omega > 0.0)) throw ConfigError("classical solver: omega must be positive");
  if (iters < 1) throw ConfigError("classical solver: iters must be at least 1");
}

namespace {

Index haar_side(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n || side % 2 != 0)
    throw ConfigError("Haar thresholding needs an even square patch, got length " + std::to_string(n));
  return side;
}

metrics::WaveletCoeffs haar_of(const Eigen::Ref<const Vector>& v) {
  const Index side = haar_side(v.size());
  const Vector copy = v;
  return metrics::haar_dwt(Eigen::Map<const RowMatrix>(copy.data(), side, side));
}

void shrink(RowMatrix& band, double t) {
  band = band.array().sign() * (band.array().abs() - t).max(0.0);
}

double l1(const Eigen::Ref<const Vector>& v, ThresholdTransform transform) {
  if (transform == ThresholdTransform::identity) return v.lpNorm<1>();
  const auto w = haar_of(v);
  return w.ll.lpNorm<1>() + w.lh.lpNorm<1>() + w.hl.lpNorm<1>() + w.hh.lpNorm<1>();
}

}  // namespace

Vector threshold_prox(const Eigen::Ref<const Vector>& v, double t, ThresholdTransform transform) {
  if (transform == ThresholdTransform::identity) return soft_threshold(v, t);
  // The transform is orthonormal on even sizes, so the prox is W^T soft(W v).
  auto w = haar_of(v);
  shrink(w.ll, t);
  shrink(w.lh, t);
  shrink(w.hl, t);
  shrink(w.hh, t);
  const RowMatrix img = metrics::haar_idwt(w);
  return Eigen::Map<const Vector>(img.data(), img.size());
}

double augmented_lagrangian(const Matrix& A, const Eigen::Ref<const Vector>& y, const ClassicalConfig& cfg,
                            const ClassicalState& s) {
  const Vector d = s.z - s.x;
  return 0.5 * (y - A * s.x).squaredNorm() + cfg.omega * l1(s.z, cfg.transform) + s.lambda.dot(d) +
         0.5 * cfg.rho * d.squaredNorm();
}

ClassicalState classical_step(const Matrix& A, const Eigen::Ref<const Vector>& y, const ClassicalConfig& cfg,
                              const ClassicalState& s) {
  cfg.validate();
  const double sign = cfg.centre == ZCentre::minimizer ? -1.0 : 1.0;
  ClassicalState next;
  next.z = threshold_prox(s.x + sign * s.lambda / cfg.rho, cfg.omega / cfg.rho, cfg.transform);
  next.lambda = s.lambda + cfg.rho * (next.z - s.x);
  Matrix h = A.transpose() * A;
  h.diagonal().array() += cfg.rho;
  next.x = h.llt().solve(A.transpose() * y + next.lambda + cfg.rho * next.z);
  return next;
}

ClassicalResult classical_solve(const sampling::SamplingOperator& op, const Eigen::Ref<const Vector>& y,
                                const ClassicalConfig& cfg) {
  cfg.validate();
  const Matrix& A = op.A;
  if (y.size() != A.rows()) throw DimensionError("classical_solve: measurement length does not match A");
  const Index n = A.cols();

  // (A^T A + rho I)^{-1} through the m x m system rho I + A A^T
  Matrix small = A * A.transpose();
  small.diagonal().array() += cfg.rho;
  const Eigen::LLT<Matrix> llt(small);
  if (llt.info() != Eigen::Success) throw NumericError("classical_solve: factorization failed");
  const Vector aty = A.transpose() * y;
  const double sign = cfg.centre == ZCentre::minimizer ? -1.0 : 1.0;
  const double t = cfg.omega / cfg.rho;

  ClassicalState s{aty, Vector::Zero(n), Vector::Zero(n)};
  ClassicalResult r;
  r.lagrangian.reserve(static_cast<std::size_t>(cfg.iters));
  for (int it = 1; it <= cfg.iters; ++it) {
    s.z = threshold_prox(s.x + sign * s.lambda / cfg.rho, t, cfg.transform);
    s.lambda += cfg.rho * (s.z - s.x);
    const Vector rhs = aty + s.lambda + cfg.rho * s.z;
    s.x = (rhs - A.transpose() * llt.solve(A * rhs)) / cfg.rho;
    if (!s.x.allFinite() || !s.z.allFinite() || !s.lambda.allFinite())
      throw NumericError("classical_solve diverged at iteration " + std::to_string(it));
    r.lagrangian.push_back(augmented_lagrangian(A, y, cfg, s));
  }
  r.x = s.x;
  r.z = s.z;
  r.lambda = s.lambda;
  return r;
}

double ista_max_step(const Matrix& A) {
  const Eigen::JacobiSVD<Matrix> svd(A);
  const double s = svd.singularValues()(0);
  return 1.0 / (s * s);
}

IstaResult ista_solve(const sampling::SamplingOperator& op, const Eigen::Ref<const Vector>& y, double step, double t,
                      int iters) {
  const Matrix& A = op.A;
  if (y.size() != A.rows()) throw DimensionError("ista_solve: measurement length does not match A");
  if (!(step > 0.0)) throw ConfigError("ista_solve: step must be positive");
  if (step > ista_max_step(A) * (1.0 + 1e-12))
    throw ConfigError("ista_solve: step exceeds 1/||A||_2^2 = " + std::to_string(ista_max_step(A)));
  if (!(t >= 0.0)) throw ConfigError("ista_solve: threshold must be non-negative");
  if (iters < 0) throw ConfigError("ista_solve: iters must be non-negative");

  IstaResult r;
  r.x = Vector::Zero(A.cols());
  r.objective.reserve(static_cast<std::size_t>(iters));
  for (int it = 1; it <= iters; ++it) {
    r.x = soft_threshold(r.x + step * (A.transpose() * (y - A * r.x)), step * t);
    if (!r.x.allFinite()) throw NumericError("ista_solve diverged at iteration " + std::to_string(it));
    r.objective.push_back(0.5 * (y - A * r.x).squaredNorm() + t * r.x.lpNorm<1>());
  }
  return r;
}

}  // namespace pipo::oracle
