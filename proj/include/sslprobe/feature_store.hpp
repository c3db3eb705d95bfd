#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslprobe/binary_io.hpp"
#include "sslprobe/error.hpp"

namespace sslprobe {

// N x D frozen representations, row-major float32, with optional class labels.
struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::size_t n_dims = 0;
  std::vector<float> data;
  std::optional<std::vector<std::uint32_t>> labels;
  std::uint32_t n_classes = 0;
  std::string name;

  bool has_labels() const { return labels.has_value(); }

  std::span<const float> row(std::size_t i) const { return {data.data() + i * n_dims, n_dims}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * n_dims, n_dims}; }

  float at(std::size_t i, std::size_t j) const { return data[i * n_dims + j]; }

  std::uint32_t label(std::size_t i) const { return (*labels)[i]; }

  // Throws on any broken invariant.
  void validate() const {
    if (n_rows < 1 || n_dims < 1) fail(ErrorKind::validation, "feature matrix must have n_rows >= 1 and n_dims >= 1");
    if (data.size() != n_rows * n_dims) fail(ErrorKind::validation, "data length does not equal n_rows * n_dims");
    if (labels) {
      if (labels->size() != n_rows) fail(ErrorKind::validation, "label count does not equal n_rows");
      for (std::size_t i = 0; i < n_rows; ++i) {
        if ((*labels)[i] >= n_classes) {
          fail(ErrorKind::validation, "label " + std::to_string((*labels)[i]) + " at row " + std::to_string(i) +
                                          " is not < n_classes = " + std::to_string(n_classes));
        }
      }
    } else if (n_classes != 0) {
      fail(ErrorKind::validation, "n_classes must be 0 when labels are absent");
    }
  }

  void require_labels(const char* what) const {
    if (!labels) fail(ErrorKind::validation, std::string(what) + " requires labeled features ('" + name + "' has none)");
  }
};

// Bitwise equality of the payload; the name is metadata and not compared.
inline bool bitwise_equal(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.n_rows == b.n_rows && a.n_dims == b.n_dims && a.n_classes == b.n_classes && a.labels == b.labels &&
         a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

inline FeatureMatrix make_features(std::size_t n_rows, std::size_t n_dims, std::vector<float> data,
                                   std::optional<std::vector<std::uint32_t>> labels = std::nullopt,
                                   std::uint32_t n_classes = 0, std::string name = {}) {
  if (labels && n_classes == 0) {
    for (auto l : *labels) n_classes = std::max(n_classes, l + 1);
  }
  FeatureMatrix m{n_rows, n_dims, std::move(data), std::move(labels), n_classes, std::move(name)};
  m.validate();
  return m;
}

struct DistributionStats {
  std::vector<double> per_dim_mean;
  std::vector<double> per_dim_std;  // population
  std::vector<double> hist_edges;   // n_bins + 1 edges over [min, max]
  std::vector<std::uint64_t> hist_counts;
  double global_mean = 0;
  double global_std = 0;
  double global_min = 0;
  double global_max = 0;
};

// ---------------------------------------------------------------------------
// SSLF on-disk format (little-endian):
//   0..3  magic "SSLF"          4..7  version (u32) = 1
//   8..15 n_rows (u64)         16..23 n_dims (u64)
//   24    dtype (1 = f32)      25     labels flag
//   26..29 n_classes (u32)     30..31 reserved, zero
//   payload: n_rows*n_dims f32 row-major, then n_rows u32 labels if flagged.

inline constexpr char kFeatureMagic[4] = {'S', 'S', 'L', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 32;

inline std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  m.validate();
  detail::ByteWriter w;
  w.raw({kFeatureMagic, 4});
  w.u32(kFeatureVersion);
  w.u64(m.n_rows);
  w.u64(m.n_dims);
  w.u8(kDtypeFloat32);
  w.u8(m.has_labels() ? 1 : 0);
  w.u32(m.has_labels() ? m.n_classes : 0);
  w.zeros(2);
  for (float v : m.data) w.f32(v);
  if (m.labels) {
    for (auto l : *m.labels) w.u32(l);
  }
  return w.bytes();
}

inline FeatureMatrix decode_features(std::span<const std::uint8_t> bytes, std::string name = {}) {
  if (bytes.size() < kFeatureHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
      fail(ErrorKind::format, "bad magic (not an SSLF file)");
    fail(ErrorKind::corruption, "file shorter than the SSLF header");
  }
  detail::ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kFeatureMagic, 4)) fail(ErrorKind::format, "bad magic (not an SSLF file)");
  const auto version = r.u32();
  if (version != kFeatureVersion) fail(ErrorKind::format, "unsupported SSLF version " + std::to_string(version));

  FeatureMatrix m;
  m.name = std::move(name);
  const auto n_rows = r.u64();
  const auto n_dims = r.u64();
  const auto dtype = r.u8();
  const auto labels_flag = r.u8();
  m.n_classes = r.u32();
  r.skip(2);
  if (dtype != kDtypeFloat32) fail(ErrorKind::format, "unsupported dtype code " + std::to_string(dtype));
  if (labels_flag > 1) fail(ErrorKind::format, "labels flag must be 0 or 1");
  if (n_rows < 1 || n_dims < 1) fail(ErrorKind::validation, "n_rows and n_dims must be >= 1");

  // Checked without overflow before allocating.
  const std::size_t remaining = r.remaining();
  const bool dims_fit = n_dims <= remaining / 4;
  const std::size_t per_row = dims_fit ? 4 * n_dims + (labels_flag ? 4 : 0) : 0;
  if (!dims_fit || n_rows > remaining / per_row || n_rows * per_row != remaining) {
    fail(ErrorKind::corruption, "payload length does not match header (n_rows=" + std::to_string(n_rows) +
                                    ", n_dims=" + std::to_string(n_dims) + ", payload bytes=" +
                                    std::to_string(remaining) + ")");
  }
  m.n_rows = n_rows;
  m.n_dims = n_dims;
  m.data.resize(n_rows * n_dims);
  for (auto& v : m.data) v = r.f32();
  if (labels_flag) {
    std::vector<std::uint32_t> labels(n_rows);
    for (auto& l : labels) l = r.u32();
    m.labels = std::move(labels);
  } else if (m.n_classes != 0) {
    fail(ErrorKind::format, "n_classes must be 0 when labels flag is 0");
  }
  m.validate();
  return m;
}

inline FeatureMatrix load_features(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_features(bytes, std::filesystem::path(path).stem().string());
}

inline void write_features(const FeatureMatrix& m, const std::string& path) {
  detail::write_file_bytes(path, encode_features(m));
}

inline std::string sidecar_path(const std::string& path) { return path + ".meta.json"; }

inline void write_sidecar(const std::string& path, const nlohmann::json& meta) {
  detail::write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

inline std::optional<nlohmann::json> read_sidecar(const std::string& path) {
  const auto p = sidecar_path(path);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return nlohmann::json::parse(detail::read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "malformed sidecar '" + p + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

// Rows with zero norm are returned unchanged.
inline FeatureMatrix l2_normalize_rows(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    auto src = m.row(i);
    double sq = 0;
    for (float v : src) sq += double(v) * double(v);
    if (sq == 0) continue;
    const double norm = std::sqrt(sq);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < m.n_dims; ++j) dst[j] = static_cast<float>(double(src[j]) / norm);
  }
  return out;
}

inline DistributionStats feature_stats(const FeatureMatrix& m, std::size_t n_bins = 200) {
  if (n_bins < 1) fail(ErrorKind::config, "n_bins must be >= 1");
  m.validate();
  const std::size_t n = m.n_rows, d = m.n_dims;

  DistributionStats s;
  s.per_dim_mean.assign(d, 0.0);
  s.per_dim_std.assign(d, 0.0);
  double total = 0;
  s.global_min = std::numeric_limits<double>::infinity();
  s.global_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = r[j];
      s.per_dim_mean[j] += v;
      total += v;
      s.global_min = std::min(s.global_min, v);
      s.global_max = std::max(s.global_max, v);
    }
  }
  for (auto& mu : s.per_dim_mean) mu /= double(n);
  s.global_mean = total / double(n * d);

  double global_sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = r[j] - s.per_dim_mean[j];
      s.per_dim_std[j] += dv * dv;
      const double dg = r[j] - s.global_mean;
      global_sq += dg * dg;
    }
  }
  for (auto& sd : s.per_dim_std) sd = std::sqrt(sd / double(n));
  s.global_std = std::sqrt(global_sq / double(n * d));

  s.hist_edges.resize(n_bins + 1);
  const double width = (s.global_max - s.global_min) / double(n_bins);
  for (std::size_t b = 0; b <= n_bins; ++b) s.hist_edges[b] = s.global_min + width * double(b);
  s.hist_edges.back() = s.global_max;
  s.hist_counts.assign(n_bins, 0);
  for (float v : m.data) {
    std::size_t bin = 0;
    if (width > 0) {
      const double pos = (double(v) - s.global_min) / width;
      bin = std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, pos)));
    }
    ++s.hist_counts[bin];
  }
  return s;
}

inline FeatureMatrix concat_features(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_features needs at least one part");
  const auto& first = parts.front();
  std::size_t total_dims = 0;
  for (const auto& p : parts) {
    p.validate();
    if (p.n_rows != first.n_rows) fail(ErrorKind::shape, "concat_features: parts disagree on n_rows");
    if (p.labels != first.labels || p.n_classes != first.n_classes)
      fail(ErrorKind::shape, "concat_features: parts disagree on labels");
    total_dims += p.n_dims;
  }

  FeatureMatrix out;
  out.n_rows = first.n_rows;
  out.n_dims = total_dims;
  out.labels = first.labels;
  out.n_classes = first.n_classes;
  out.name = first.name;
  out.data.reserve(out.n_rows * total_dims);
  for (std::size_t i = 0; i < out.n_rows; ++i) {
    for (const auto& p : parts) {
      auto r = p.row(i);
      out.data.insert(out.data.end(), r.begin(), r.end());
    }
  }
  return out;
}

// Columns [begin, end) of m, labels preserved.
inline FeatureMatrix select_columns(const FeatureMatrix& m, std::size_t begin, std::size_t end) {
  if (begin >= end || end > m.n_dims) fail(ErrorKind::shape, "select_columns: invalid column range");
  FeatureMatrix out;
  out.n_rows = m.n_rows;
  out.n_dims = end - begin;
  out.labels = m.labels;
  out.n_classes = m.n_classes;
  out.name = m.name;
  out.data.reserve(out.n_rows * out.n_dims);
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    auto r = m.row(i);
    out.data.insert(out.data.end(), r.begin() + begin, r.begin() + end);
  }
  return out;
}

inline nlohmann::json to_json(const DistributionStats& s) {
  return {
      {"per_dim_mean", s.per_dim_mean},   {"per_dim_std", s.per_dim_std},
      {"global_mean", s.global_mean},     {"global_std", s.global_std},
      {"global_min", s.global_min},       {"global_max", s.global_max},
      {"histogram", {{"edges", s.hist_edges}, {"counts", s.hist_counts}}},
  };
}

}  // namespace sslprobe
