#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sslprobe/error.hpp"

namespace sslprobe {

enum class BnMode { train, eval };

// Row-major real matrix used for batches inside the probe (64-bit).
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Batch() = default;
  Batch(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  Batch(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) fail(ErrorKind::shape, "batch data length does not equal rows * cols");
  }

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
};

// Feature standardization with the affine part frozen: gamma == 1, beta == 0.
// There are no trainable parameters, so gamma/beta are not stored.
//
// Running statistics start unseeded (mean 0, var 1). The first train-mode
// update copies the batch statistics; later updates blend with `momentum`.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
  bool seeded = false;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t dims, double eps = 1e-5, double mom = 0.1)
      : running_mean(dims, 0.0), running_var(dims, 1.0), epsilon(eps), momentum(mom) {}

  std::size_t dims() const { return running_mean.size(); }

  static constexpr double gamma() { return 1.0; }
  static constexpr double beta() { return 0.0; }

  void validate() const {
    if (running_var.size() != running_mean.size()) fail(ErrorKind::validation, "BN mean/var length mismatch");
    if (!(epsilon >= 0)) fail(ErrorKind::config, "BN epsilon must be >= 0");
    if (!(momentum > 0 && momentum <= 1)) fail(ErrorKind::config, "BN momentum must lie in (0, 1]");
    for (double v : running_var)
      if (!(v >= 0)) fail(ErrorKind::validation, "BN running variance must be non-negative");
  }
};

struct BatchNormResult {
  Batch output;
  BatchNormState state;
};

namespace detail {

inline void standardize(const Batch& in, std::span<const double> mean, std::span<const double> var, double eps,
                        Batch& out) {
  out = Batch(in.rows, in.cols);
  for (std::size_t j = 0; j < in.cols; ++j) {
    const double denom = std::sqrt(var[j] + eps);
    for (std::size_t i = 0; i < in.rows; ++i) {
      const double centered = in(i, j) - mean[j];
      // Constant features under eps = 0: 0/0 maps to 0 rather than NaN.
      out(i, j) = denom > 0 ? centered / denom : 0.0;
    }
  }
}

// Population mean/variance per column, two-pass.
inline void column_moments(const Batch& in, std::vector<double>& mean, std::vector<double>& var) {
  mean.assign(in.cols, 0.0);
  var.assign(in.cols, 0.0);
  for (std::size_t i = 0; i < in.rows; ++i)
    for (std::size_t j = 0; j < in.cols; ++j) mean[j] += in(i, j);
  for (auto& m : mean) m /= double(in.rows);
  for (std::size_t i = 0; i < in.rows; ++i)
    for (std::size_t j = 0; j < in.cols; ++j) {
      const double d = in(i, j) - mean[j];
      var[j] += d * d;
    }
  for (auto& v : var) v /= double(in.rows);
}

}  // namespace detail

// Normalizes without touching the state: train mode uses batch statistics,
// eval mode uses running statistics.
inline Batch batchnorm_forward(const BatchNormState& state, const Batch& batch, BnMode mode) {
  if (batch.cols != state.dims())
    fail(ErrorKind::shape, "batch has " + std::to_string(batch.cols) + " columns, BN state has " +
                               std::to_string(state.dims()));
  Batch out;
  if (mode == BnMode::eval) {
    detail::standardize(batch, state.running_mean, state.running_var, state.epsilon, out);
    return out;
  }
  if (batch.rows < 2) fail(ErrorKind::degenerate, "train-mode batch normalization needs at least 2 rows");
  std::vector<double> mean, var;
  detail::column_moments(batch, mean, var);
  detail::standardize(batch, mean, var, state.epsilon, out);
  return out;
}

inline BatchNormResult apply_batchnorm(const BatchNormState& state, const Batch& batch, BnMode mode) {
  BatchNormResult result{batchnorm_forward(state, batch, mode), state};
  if (mode == BnMode::eval) return result;

  std::vector<double> mean, var;
  detail::column_moments(batch, mean, var);
  auto& s = result.state;
  if (!s.seeded) {
    s.running_mean = mean;
    s.running_var = var;
    s.seeded = true;
  } else {
    for (std::size_t j = 0; j < s.dims(); ++j) {
      s.running_mean[j] = (1 - s.momentum) * s.running_mean[j] + s.momentum * mean[j];
      s.running_var[j] = (1 - s.momentum) * s.running_var[j] + s.momentum * var[j];
    }
  }
  return result;
}

}  // namespace sslprobe
