#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sslprobe/error.hpp"
#include "sslprobe/feature_store.hpp"
#include "sslprobe/parallel.hpp"

namespace sslprobe {

enum class Voting { weighted, uniform };

inline const char* to_string(Voting v) { return v == Voting::weighted ? "weighted" : "uniform"; }

inline Voting parse_voting(const std::string& s) {
  if (s == "weighted") return Voting::weighted;
  if (s == "uniform") return Voting::uniform;
  fail(ErrorKind::config, "unknown voting mode '" + s + "' (expected weighted|uniform)");
}

// Cosine-similarity k-NN. Weighted voting adds exp(s / temperature) per neighbor.
struct KnnConfig {
  std::size_t k = 20;
  double temperature = 0.07;
  Voting voting = Voting::weighted;
  std::size_t threads = 1;

  void validate(std::size_t n_train) const {
    if (k < 1) fail(ErrorKind::config, "k must be >= 1");
    if (k > n_train)
      fail(ErrorKind::config, "k = " + std::to_string(k) + " exceeds the " + std::to_string(n_train) + " training rows");
    if (!(temperature > 0) || !std::isfinite(temperature)) fail(ErrorKind::config, "temperature must be positive");
  }
};

namespace detail {

inline void check_knn_inputs(const FeatureMatrix& train, const FeatureMatrix& query, const KnnConfig& cfg) {
  train.require_labels("k-NN training set");
  if (train.n_dims != query.n_dims)
    fail(ErrorKind::shape, "train has " + std::to_string(train.n_dims) + " dims, query has " +
                               std::to_string(query.n_dims));
  cfg.validate(train.n_rows);
}

// Returns, for one query, the k nearest training indices ordered by
// (similarity desc, index asc), plus their similarities.
inline void nearest(const FeatureMatrix& train_unit, std::span<const float> q, std::size_t k,
                    std::vector<std::size_t>& idx, std::vector<double>& sims) {
  const std::size_t n = train_unit.n_rows;
  sims.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = train_unit.row(i);
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += double(r[j]) * double(q[j]);
    sims[i] = s;
  }
  idx.resize(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto closer = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
  idx.resize(k);
}

}  // namespace detail

inline std::vector<std::uint32_t> knn_predict(const FeatureMatrix& train, const FeatureMatrix& query,
                                              const KnnConfig& cfg = {}) {
  detail::check_knn_inputs(train, query, cfg);
  const auto train_unit = l2_normalize_rows(train);
  const auto query_unit = l2_normalize_rows(query);
  const std::uint32_t n_classes = train.n_classes;

  std::vector<std::uint32_t> predictions(query.n_rows);
  parallel_for(query.n_rows, cfg.threads, [&](std::size_t qi) {
    std::vector<std::size_t> idx;
    std::vector<double> sims;
    detail::nearest(train_unit, query_unit.row(qi), cfg.k, idx, sims);
    std::vector<double> votes(n_classes, 0.0);
    for (auto i : idx) {
      const double w = cfg.voting == Voting::weighted ? std::exp(sims[i] / cfg.temperature) : 1.0;
      votes[train.label(i)] += w;
    }
    // max_element returns the first maximum: lowest class index on ties.
    predictions[qi] = static_cast<std::uint32_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  });
  return predictions;
}

inline double top1_accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth) {
  if (predicted.size() != truth.size()) fail(ErrorKind::shape, "prediction/label length mismatch");
  if (truth.empty()) fail(ErrorKind::empty, "accuracy over zero rows");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return double(hits) / double(truth.size());
}

inline double knn_accuracy(const FeatureMatrix& train, const FeatureMatrix& test, const KnnConfig& cfg = {}) {
  test.require_labels("k-NN accuracy");
  const auto pred = knn_predict(train, test, cfg);
  return top1_accuracy(pred, *test.labels);
}

struct KnnSweepEntry {
  std::size_t k;
  double accuracy;
};

// Neighbors are ranked once at max(ks); each k reuses the shared prefix.
inline std::vector<KnnSweepEntry> knn_sweep(const FeatureMatrix& train, const FeatureMatrix& test,
                                            std::span<const std::size_t> ks, KnnConfig cfg = {}) {
  if (ks.empty()) return {};
  test.require_labels("k-NN sweep");
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  for (auto k : ks) {
    cfg.k = k;
    cfg.validate(train.n_rows);
  }
  cfg.k = k_max;
  detail::check_knn_inputs(train, test, cfg);

  const auto train_unit = l2_normalize_rows(train);
  const auto test_unit = l2_normalize_rows(test);
  const std::uint32_t n_classes = train.n_classes;

  // hits[q][j] = 1 when query q is classified correctly at ks[j]
  std::vector<std::vector<char>> hits(test.n_rows, std::vector<char>(ks.size(), 0));
  parallel_for(test.n_rows, cfg.threads, [&](std::size_t qi) {
    std::vector<std::size_t> idx;
    std::vector<double> sims;
    detail::nearest(train_unit, test_unit.row(qi), k_max, idx, sims);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      std::vector<double> votes(n_classes, 0.0);
      for (std::size_t n = 0; n < ks[j]; ++n) {
        const auto i = idx[n];
        votes[train.label(i)] += cfg.voting == Voting::weighted ? std::exp(sims[i] / cfg.temperature) : 1.0;
      }
      const auto pred = static_cast<std::uint32_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      hits[qi][j] = pred == test.label(qi);
    }
  });

  std::vector<KnnSweepEntry> out;
  out.reserve(ks.size());
  for (std::size_t j = 0; j < ks.size(); ++j) {
    std::size_t correct = 0;
    for (const auto& h : hits) correct += h[j];
    out.push_back({ks[j], double(correct) / double(test.n_rows)});
  }
  return out;
}

}  // namespace sslprobe
