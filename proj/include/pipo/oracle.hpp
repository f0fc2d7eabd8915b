#pragma once

#include "pipo/common.hpp"
#include "pipo/sampling.hpp"

#include <vector>

// Non-learned reference solvers for the penalty model
//   min_x 1/2 ||y - A x||^2 + omega ||T x||_1
// split as z = x with the augmented Lagrangian
//   L(x, z, lambda) = 1/2 ||y - A x||^2 + omega ||T z||_1 + lambda^T (z - x) + rho/2 ||z - x||^2.

namespace pipo::oracle {

/// Soft thresholding sign(v) max(|v| - t, 0).
Vector soft_threshold(const Eigen::Ref<const Vector>& v, double t);

enum class ThresholdTransform { identity, haar };

/// Where the z-step is centred.
///   minimizer: z = prox(x - lambda / rho), the exact minimizer of L over z.
///   shifted:   z = prox(x + lambda / rho), the centring used by the learned
///              z-update; with lambda <- lambda + rho (z - x) this variant
///              diverges on plain l1 problems and exists for equivalence checks.
enum class ZCentre { minimizer, shifted };

struct ClassicalConfig {
  double rho = 0.05;
  double omega = 1e-3;
  int iters = 200;
  ThresholdTransform transform = ThresholdTransform::identity;
  ZCentre centre = ZCentre::minimizer;

  void validate() const;
};

struct ClassicalResult {
  Vector x;
  Vector z;
  Vector lambda;
  std::vector<double> lagrangian;  // L after each iteration
};

/// One z/lambda/x round, exposed so the learned module can be checked against it.
struct ClassicalState {
  Vector x;
  Vector z;
  Vector lambda;
};

/// Threshold map of the z-step: prox of (omega / rho) ||T .||_1.
Vector threshold_prox(const Eigen::Ref<const Vector>& v, double t, ThresholdTransform transform);

/// One round from `s`: z-step, multiplier step, exact x-step.
ClassicalState classical_step(const Matrix& A, const Eigen::Ref<const Vector>& y, const ClassicalConfig& cfg,
                              const ClassicalState& s);

double augmented_lagrangian(const Matrix& A, const Eigen::Ref<const Vector>& y, const ClassicalConfig& cfg,
                            const ClassicalState& s);

/// x starts at A^T y and lambda at zero. Throws NumericError naming the first
/// iteration that produced a non-finite iterate.
ClassicalResult classical_solve(const sampling::SamplingOperator& op, const Eigen::Ref<const Vector>& y,
                                const ClassicalConfig& cfg);

/// Largest admissible ISTA step, 1 / ||A||_2^2.
double ista_max_step(const Matrix& A);

struct IstaResult {
  Vector x;
  std::vector<double> objective;  // 1/2 ||y - A x||^2 + t ||x||_1 after each iteration
};

/// x <- soft_threshold(x + step A^T (y - A x), step t) from x = 0. Throws
/// ConfigError when step exceeds 1 / ||A||_2^2.
IstaResult ista_solve(const sampling::SamplingOperator& op, const Eigen::Ref<const Vector>& y, double step, double t,
                      int iters);

}  // namespace pipo::oracle
