#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sslprobe/error.hpp"
#include "sslprobe/feature_store.hpp"

namespace sslprobe {

// Gaussian class clusters: class means live in the first `signal_dims`
// coordinates (entries ~ N(0, separation^2)); every coordinate gets
// N(0, noise^2) noise. Labels are balanced (row i has class i % n_classes).
struct SyntheticSpec {
  std::size_t n_train = 1000;
  std::size_t n_val = 200;
  std::size_t dims = 16;
  std::uint32_t classes = 4;
  std::size_t signal_dims = 8;
  double separation = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticSplit {
  FeatureMatrix train;
  FeatureMatrix val;
};

inline SyntheticSplit make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.dims < 1 || spec.n_train < 1 || spec.n_val < 1)
    fail(ErrorKind::config, "synthetic spec needs positive sizes");
  if (spec.signal_dims > spec.dims) fail(ErrorKind::config, "signal_dims exceeds dims");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(spec.classes * spec.dims, 0.0);
  for (std::uint32_t c = 0; c < spec.classes; ++c)
    for (std::size_t j = 0; j < spec.signal_dims; ++j) means[c * spec.dims + j] = spec.separation * normal(rng);

  auto draw = [&](std::size_t n, const std::string& name) {
    FeatureMatrix m;
    m.n_rows = n;
    m.n_dims = spec.dims;
    m.n_classes = spec.classes;
    m.name = name;
    m.data.resize(n * spec.dims);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::uint32_t>(i % spec.classes);
      labels[i] = c;
      for (std::size_t j = 0; j < spec.dims; ++j)
        m.data[i * spec.dims + j] = static_cast<float>(means[c * spec.dims + j] + spec.noise * normal(rng));
    }
    m.labels = std::move(labels);
    return m;
  };
  SyntheticSplit split{draw(spec.n_train, "train"), draw(spec.n_val, "val")};
  return split;
}

// Per-feature x -> scale * x + shift, computed in double and stored as float32.
struct AffineDistortion {
  std::vector<double> scale;
  std::vector<double> shift;
};

// log10(scale) ~ U(log_scale_min, log_scale_max), shift ~ U(-shift_range, shift_range).
inline AffineDistortion make_affine_distortion(std::size_t dims, double log_scale_min, double log_scale_max,
                                               double shift_range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_scale(log_scale_min, log_scale_max);
  std::uniform_real_distribution<double> shift(-shift_range, shift_range);
  AffineDistortion d;
  d.scale.resize(dims);
  d.shift.resize(dims);
  for (std::size_t j = 0; j < dims; ++j) {
    d.scale[j] = std::pow(10.0, log_scale(rng));
    d.shift[j] = shift(rng);
  }
  return d;
}

inline FeatureMatrix apply_affine(const FeatureMatrix& m, const AffineDistortion& d) {
  if (d.scale.size() != m.n_dims || d.shift.size() != m.n_dims)
    fail(ErrorKind::shape, "affine distortion dims do not match features");
  FeatureMatrix out = m;
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < m.n_dims; ++j) r[j] = static_cast<float>(d.scale[j] * double(r[j]) + d.shift[j]);
  }
  return out;
}

}  // namespace sslprobe
