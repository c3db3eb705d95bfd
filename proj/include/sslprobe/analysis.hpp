#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslprobe/batchnorm.hpp"
#include "sslprobe/error.hpp"
#include "sslprobe/feature_store.hpp"
#include "sslprobe/parallel.hpp"

namespace sslprobe {

// ---------------------------------------------------------------------------
// Rank consistency between two evaluation protocols.

struct NamedScore {
  std::string name;
  double score;
};

struct RankConsistency {
  double spearman = 0;
  double kendall_tau = 0;
  std::vector<std::string> names;                    // order of scores_a
  std::vector<std::pair<double, double>> rank_pairs;  // (rank in a, rank in b)
  bool has_ties = false;
};

// Descending ranks (1 = highest score); tied scores share their average rank.
inline std::vector<double> descending_ranks(std::span<const double> scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) fail(ErrorKind::degenerate, "correlation of a constant ranking");
  return sab / std::sqrt(saa * sbb);
}

// Kendall tau-b.
inline double kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) ++ties_a;
      else if (db == 0) ++ties_b;
      else if ((da > 0) == (db > 0)) ++concordant;
      else ++discordant;
    }
  }
  const double denom = std::sqrt(double(concordant + discordant + ties_a) * double(concordant + discordant + ties_b));
  if (denom == 0) fail(ErrorKind::degenerate, "Kendall tau of a constant ranking");
  return double(concordant - discordant) / denom;
}

}  // namespace detail

// Items are aligned by name. Spearman uses the closed form 1 - 6 sum d^2 / (n (n^2 - 1))
// for tie-free data and the Pearson correlation of ranks otherwise.
inline RankConsistency rank_consistency(std::span<const NamedScore> scores_a, std::span<const NamedScore> scores_b) {
  const std::size_t n = scores_a.size();
  if (n != scores_b.size()) fail(ErrorKind::alignment, "score lists have different lengths");
  if (n < 2) fail(ErrorKind::degenerate, "rank consistency needs at least 2 items");

  std::vector<double> a(n), b(n);
  std::vector<char> used(n, 0);
  RankConsistency out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = scores_a[i];
    auto it = std::find_if(scores_b.begin(), scores_b.end(), [&](const NamedScore& s) { return s.name == item.name; });
    if (it == scores_b.end()) fail(ErrorKind::alignment, "item '" + item.name + "' missing from the second list");
    const auto j = static_cast<std::size_t>(it - scores_b.begin());
    if (used[j]) fail(ErrorKind::alignment, "duplicate item '" + item.name + "'");
    used[j] = 1;
    if (!std::isfinite(item.score) || !std::isfinite(it->score))
      fail(ErrorKind::validation, "missing or non-finite score for '" + item.name + "'");
    a[i] = item.score;
    b[i] = it->score;
    out.names.push_back(item.name);
  }

  const auto ra = descending_ranks(a);
  const auto rb = descending_ranks(b);
  for (std::size_t i = 0; i < n; ++i) out.rank_pairs.emplace_back(ra[i], rb[i]);
  for (std::size_t i = 0; i < n && !out.has_ties; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a[i] == a[j] || b[i] == b[j]) {
        out.has_ties = true;
        break;
      }

  if (out.has_ties) {
    out.spearman = detail::pearson(ra, rb);
  } else {
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double nn = double(n);
    out.spearman = 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
  }
  out.kendall_tau = detail::kendall_tau_b(ra, rb);
  return out;
}

inline nlohmann::json to_json(const RankConsistency& rc) {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < rc.names.size(); ++i)
    pairs.push_back({{"name", rc.names[i]}, {"rank_a", rc.rank_pairs[i].first}, {"rank_b", rc.rank_pairs[i].second}});
  return {{"spearman", rc.spearman}, {"kendall_tau", rc.kendall_tau}, {"has_ties", rc.has_ties}, {"rank_pairs", pairs}};
}

// ---------------------------------------------------------------------------
// Linear CKA (biased HSIC), feature-space form:
//   ||Xc^T Yc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F)

struct CkaResult {
  double value = 0;
  std::size_t n_samples = 0;
  std::size_t dims_x = 0;
  std::size_t dims_y = 0;
};

namespace detail {

inline std::vector<double> centered_columns(const Batch& m) {
  std::vector<double> c = m.values;
  for (std::size_t j = 0; j < m.cols; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < m.rows; ++i) mean += c[i * m.cols + j];
    mean /= double(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) c[i * m.cols + j] -= mean;
  }
  return c;
}

inline Batch widen(const FeatureMatrix& m) { return Batch(m.n_rows, m.n_dims, std::vector<double>(m.data.begin(), m.data.end())); }

// ||A^T B||_F^2 for row-major A (n x p), B (n x q).
inline double cross_frobenius_sq(std::span<const double> a, std::size_t p, std::span<const double> b, std::size_t q,
                                 std::size_t n) {
  std::vector<double> prod(p * q, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * p;
    const double* bi = b.data() + i * q;
    for (std::size_t r = 0; r < p; ++r) {
      const double v = ai[r];
      double* row = prod.data() + r * q;
      for (std::size_t s = 0; s < q; ++s) row[s] += v * bi[s];
    }
  }
  double sum = 0;
  for (double v : prod) sum += v * v;
  return sum;
}

}  // namespace detail

inline CkaResult linear_cka(const Batch& x, const Batch& y) {
  if (x.rows != y.rows) fail(ErrorKind::shape, "CKA inputs must have the same number of rows");
  if (x.rows < 2) fail(ErrorKind::degenerate, "CKA needs at least 2 rows");
  const auto xc = detail::centered_columns(x);
  const auto yc = detail::centered_columns(y);
  const std::size_t n = x.rows;
  const double xy = detail::cross_frobenius_sq(xc, x.cols, yc, y.cols, n);
  const double xx = detail::cross_frobenius_sq(xc, x.cols, xc, x.cols, n);
  const double yy = detail::cross_frobenius_sq(yc, y.cols, yc, y.cols, n);
  if (xx == 0 || yy == 0) fail(ErrorKind::degenerate, "CKA input is constant across all rows");
  return {xy / (std::sqrt(xx) * std::sqrt(yy)), n, x.cols, y.cols};
}

inline CkaResult linear_cka(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.n_rows != y.n_rows) fail(ErrorKind::shape, "CKA inputs must have the same number of rows");
  return linear_cka(detail::widen(x), detail::widen(y));
}

inline std::vector<double> cka_layerwise(std::span<const FeatureMatrix> before, std::span<const FeatureMatrix> after) {
  if (before.size() != after.size()) fail(ErrorKind::shape, "layerwise CKA needs lists of equal length");
  std::vector<double> out;
  out.reserve(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) out.push_back(linear_cka(before[i], after[i]).value);
  return out;
}

inline std::string cka_to_csv(std::span<const double> values) {
  std::ostringstream out;
  out << "block,cka\n" << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// 2D loss landscape around theta along two seeded random directions.

enum class DirectionNorm {
  group,  // rescale each parameter group of a direction to the norm of that group of theta
  none,   // raw standard-normal directions (after orthogonalization)
};

inline const char* to_string(DirectionNorm n) { return n == DirectionNorm::group ? "group" : "none"; }

struct LandscapeAxes {
  std::size_t alpha_points = 25;
  std::size_t beta_points = 25;
  double alpha_min = -1, alpha_max = 1;
  double beta_min = -1, beta_max = 1;
};

struct LandscapeGrid {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> loss;  // alpha-major: loss[a * beta.size() + b]; NaN marks a missing cell
  std::uint64_t seed = 0;
  DirectionNorm normalization = DirectionNorm::group;
  std::vector<std::size_t> group_bounds;
  double origin_loss = 0;
  std::vector<double> delta;  // the two directions actually used
  std::vector<double> eta;

  double at(std::size_t a, std::size_t b) const { return loss[a * beta.size() + b]; }
  std::size_t missing_cells() const {
    return static_cast<std::size_t>(std::count_if(loss.begin(), loss.end(), [](double v) { return std::isnan(v); }));
  }
};

using LossEvaluator = std::function<double(std::span<const double>)>;

namespace detail {

inline std::vector<double> make_axis(std::size_t n, double lo, double hi) {
  std::vector<double> axis(n);
  for (std::size_t i = 0; i < n; ++i) axis[i] = lo + (hi - lo) * double(i) / double(n - 1);
  // Snap the point nearest zero when it is zero up to rounding, so the
  // origin cell evaluates theta itself.
  const auto nearest = std::min_element(axis.begin(), axis.end(),
                                        [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (std::abs(*nearest) <= 1e-12 * std::max(1.0, hi - lo)) *nearest = 0.0;
  return axis;
}

}  // namespace detail

// Directions delta, eta ~ N(0, I) from mt19937_64(seed); eta is made
// orthogonal to delta (Gram-Schmidt) before per-group rescaling.
// `group_bounds` are the start offsets of each parameter group after the first,
// e.g. {C*D} for a probe head (weight, then bias).
inline LandscapeGrid loss_landscape(const LossEvaluator& loss_at, std::span<const double> theta,
                                    std::span<const std::size_t> group_bounds, const LandscapeAxes& axes = {},
                                    std::uint64_t seed = 0, DirectionNorm norm = DirectionNorm::group,
                                    std::size_t threads = 1) {
  if (axes.alpha_points < 2 || axes.beta_points < 2) fail(ErrorKind::config, "landscape needs >= 2 points per axis");
  if (!(axes.alpha_min <= 0 && axes.alpha_max >= 0 && axes.beta_min <= 0 && axes.beta_max >= 0) ||
      !(axes.alpha_min < axes.alpha_max && axes.beta_min < axes.beta_max))
    fail(ErrorKind::config, "landscape ranges must be non-empty and include 0");
  if (theta.empty()) fail(ErrorKind::empty, "landscape over an empty parameter vector");
  std::vector<std::size_t> bounds{0};
  for (auto b : group_bounds) {
    if (b <= bounds.back() || b >= theta.size()) fail(ErrorKind::config, "group bounds must be increasing and inside theta");
    bounds.push_back(b);
  }
  bounds.push_back(theta.size());

  LandscapeGrid grid;
  grid.seed = seed;
  grid.normalization = norm;
  grid.group_bounds.assign(group_bounds.begin(), group_bounds.end());
  grid.alpha = detail::make_axis(axes.alpha_points, axes.alpha_min, axes.alpha_max);
  grid.beta = detail::make_axis(axes.beta_points, axes.beta_min, axes.beta_max);

  const std::size_t p = theta.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  grid.delta.resize(p);
  grid.eta.resize(p);
  for (auto& v : grid.delta) v = normal(rng);
  for (auto& v : grid.eta) v = normal(rng);

  const double dd = std::inner_product(grid.delta.begin(), grid.delta.end(), grid.delta.begin(), 0.0);
  const double de = std::inner_product(grid.delta.begin(), grid.delta.end(), grid.eta.begin(), 0.0);
  for (std::size_t i = 0; i < p; ++i) grid.eta[i] -= de / dd * grid.delta[i];

  if (norm == DirectionNorm::group) {
    for (std::size_t g = 0; g + 1 < bounds.size(); ++g) {
      const std::size_t lo = bounds[g], hi = bounds[g + 1];
      double theta_sq = 0, d_sq = 0, e_sq = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        theta_sq += theta[i] * theta[i];
        d_sq += grid.delta[i] * grid.delta[i];
        e_sq += grid.eta[i] * grid.eta[i];
      }
      const double t = std::sqrt(theta_sq);
      const double sd = d_sq > 0 ? t / std::sqrt(d_sq) : 0.0;
      const double se = e_sq > 0 ? t / std::sqrt(e_sq) : 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        grid.delta[i] *= sd;
        grid.eta[i] *= se;
      }
    }
  }

  const double origin = loss_at(theta);
  grid.origin_loss = std::isfinite(origin) ? origin : std::numeric_limits<double>::quiet_NaN();

  const std::size_t nb = grid.beta.size();
  grid.loss.assign(grid.alpha.size() * nb, std::numeric_limits<double>::quiet_NaN());
  parallel_for(grid.loss.size(), threads, [&](std::size_t idx) {
    const double a = grid.alpha[idx / nb], b = grid.beta[idx % nb];
    std::vector<double> point(p);
    for (std::size_t i = 0; i < p; ++i) point[i] = theta[i] + a * grid.delta[i] + b * grid.eta[i];
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = loss_at(point);
    } catch (const Error&) {
    }
    grid.loss[idx] = std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
  });
  return grid;
}

inline std::string landscape_to_csv(const LandscapeGrid& g) {
  std::ostringstream out;
  out << "alpha,beta,loss\n" << std::setprecision(17);
  for (std::size_t a = 0; a < g.alpha.size(); ++a)
    for (std::size_t b = 0; b < g.beta.size(); ++b) {
      out << g.alpha[a] << ',' << g.beta[b] << ',';
      const double v = g.at(a, b);
      if (std::isnan(v)) out << "nan";
      else out << v;
      out << '\n';
    }
  return out.str();
}

inline nlohmann::json to_json(const LandscapeGrid& g) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t a = 0; a < g.alpha.size(); ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t b = 0; b < g.beta.size(); ++b) {
      const double v = g.at(a, b);
      row.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    }
    values.push_back(std::move(row));
  }
  return {{"seed", g.seed},
          {"direction_sampler", "mt19937_64 + std::normal_distribution<double>, delta then eta"},
          {"normalization", to_string(g.normalization)},
          {"group_bounds", g.group_bounds},
          {"alpha", g.alpha},
          {"beta", g.beta},
          {"origin_loss", std::isnan(g.origin_loss) ? nlohmann::json(nullptr) : nlohmann::json(g.origin_loss)},
          {"missing_cells", g.missing_cells()},
          {"loss", values}};
}

}  // namespace sslprobe
