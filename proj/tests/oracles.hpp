#pragma once

// Straightforward reference implementations used to check the library.
// They favour the obvious formula over speed and share no code with include/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "sslprobe/feature_store.hpp"

namespace oracle {

using sslprobe::FeatureMatrix;

inline FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint32_t classes, std::uint64_t seed,
                                     double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::uniform_int_distribution<std::uint32_t> label(0, classes - 1);
  FeatureMatrix m;
  m.n_rows = n;
  m.n_dims = d;
  m.n_classes = classes;
  m.data.resize(n * d);
  for (auto& v : m.data) v = static_cast<float>(normal(rng));
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = label(rng);
  m.labels = labels;
  return m;
}

// Cosine contract: each row divided by its double-precision norm and rounded
// to float32; similarities are double dot products of the rounded rows.
inline std::vector<std::vector<float>> unit_rows(const FeatureMatrix& m) {
  std::vector<std::vector<float>> rows(m.n_rows);
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    double sq = 0;
    for (std::size_t j = 0; j < m.n_dims; ++j) sq += double(m.at(i, j)) * double(m.at(i, j));
    const double norm = std::sqrt(sq);
    rows[i].resize(m.n_dims);
    for (std::size_t j = 0; j < m.n_dims; ++j)
      rows[i][j] = norm == 0 ? m.at(i, j) : static_cast<float>(double(m.at(i, j)) / norm);
  }
  return rows;
}

// Exhaustive k-NN: stable sort over every training row, then a vote.
inline std::vector<std::uint32_t> knn(const FeatureMatrix& train, const FeatureMatrix& query, std::size_t k,
                                      double temperature, bool weighted) {
  const auto tr = unit_rows(train);
  const auto qu = unit_rows(query);
  std::vector<std::uint32_t> out;
  for (const auto& q : qu) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < q.size(); ++j) s += double(tr[i][j]) * double(q[j]);
      scored.emplace_back(s, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::map<std::uint32_t, double> votes;
    for (std::size_t n = 0; n < k; ++n) {
      const auto [s, i] = scored[n];
      votes[train.label(i)] += weighted ? std::exp(s / temperature) : 1.0;
    }
    std::uint32_t best = 0;
    double best_votes = -1;
    for (const auto& [cls, v] : votes)  // map iterates classes in ascending order
      if (v > best_votes) {
        best = cls;
        best_votes = v;
      }
    out.push_back(best);
  }
  return out;
}

// Mean softmax cross-entropy of W x + b, no stabilisation tricks beyond a
// per-row max shift.
inline double softmax_ce(const std::vector<double>& w, const std::vector<double>& b, const std::vector<double>& x,
                         std::size_t rows, std::size_t dims, const std::vector<std::uint32_t>& labels) {
  const std::size_t classes = b.size();
  long double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> z(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = b[c];
      for (std::size_t j = 0; j < dims; ++j) z[c] += w[c * dims + j] * x[i * dims + j];
    }
    const double m = *std::max_element(z.begin(), z.end());
    long double s = 0;
    for (double v : z) s += std::exp(v - m);
    total += m + std::log(double(s)) - z[labels[i]];
  }
  return double(total / rows);
}

struct NumericGrad {
  std::vector<double> weight;
  std::vector<double> bias;
};

// Central differences of softmax_ce with step h.
inline NumericGrad finite_difference(std::vector<double> w, std::vector<double> b, const std::vector<double>& x,
                                     std::size_t rows, std::size_t dims, const std::vector<std::uint32_t>& labels,
                                     double h = 1e-5) {
  NumericGrad g{std::vector<double>(w.size()), std::vector<double>(b.size())};
  auto diff = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = softmax_ce(w, b, x, rows, dims, labels);
    param = saved - h;
    const double down = softmax_ce(w, b, x, rows, dims, labels);
    param = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < w.size(); ++i) g.weight[i] = diff(w[i]);
  for (std::size_t i = 0; i < b.size(); ++i) g.bias[i] = diff(b[i]);
  return g;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries from
// turning rounding noise into huge relative errors.
inline constexpr double kGradRelFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradRelFloor});
}

// Population-statistics standardization of each column.
inline std::vector<double> standardize(const std::vector<double>& x, std::size_t rows, std::size_t dims, double eps) {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < dims; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < rows; ++i) mean += x[i * dims + j];
    mean /= double(rows);
    double var = 0;
    for (std::size_t i = 0; i < rows; ++i) var += (x[i * dims + j] - mean) * (x[i * dims + j] - mean);
    var /= double(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const double denom = std::sqrt(var + eps);
      out[i * dims + j] = denom == 0 ? 0.0 : (x[i * dims + j] - mean) / denom;
    }
  }
  return out;
}

// Linear CKA through n x n Gram matrices: HSIC(K, L) = tr(K H L H) / (n-1)^2.
inline double cka_gram(const FeatureMatrix& x, const FeatureMatrix& y) {
  const std::size_t n = x.n_rows;
  auto gram = [n](const FeatureMatrix& m) {
    std::vector<double> g(n * n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        double s = 0;
        for (std::size_t j = 0; j < m.n_dims; ++j) s += double(m.at(a, j)) * double(m.at(b, j));
        g[a * n + b] = s;
      }
    // H K H: subtract row means, column means, add the grand mean.
    std::vector<double> rmean(n, 0), cmean(n, 0);
    double grand = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        rmean[a] += g[a * n + b] / double(n);
        cmean[b] += g[a * n + b] / double(n);
        grand += g[a * n + b] / double(n * n);
      }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) g[a * n + b] += grand - rmean[a] - cmean[b];
    return g;
  };
  const auto kx = gram(x), ky = gram(y);
  auto hsic = [n](const std::vector<double>& k, const std::vector<double>& l) {
    long double s = 0;  // tr(K~ L~) for symmetric centred Grams
    for (std::size_t i = 0; i < n * n; ++i) s += k[i] * l[i];
    return double(s) / (double(n - 1) * double(n - 1));
  };
  return hsic(kx, ky) / std::sqrt(hsic(kx, kx) * hsic(ky, ky));
}

// Spearman via Pearson of average ranks (descending scores get rank 1).
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t greater = 0, equal = 0;
    for (double u : v) {
      greater += u > v[i];
      equal += u == v[i];
    }
    r[i] = double(greater) + (double(equal) + 1) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace oracle
