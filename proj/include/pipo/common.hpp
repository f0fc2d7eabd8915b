#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pipo {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or sizes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values, unknown keys, unusable paths.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file that could not be read or decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient matrix where full rank is required.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline double softplus(double v) {
  // log(1 + e^v) without overflow
  return v > 30.0 ? v : std::log1p(std::exp(v));
}

inline double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace pipo
