#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslprobe/catalog.hpp"
#include "sslprobe/error.hpp"
#include "sslprobe/feature_store.hpp"
#include "sslprobe/parallel.hpp"
#include "sslprobe/probe.hpp"

namespace sslprobe {

enum class CellSource { computed, ingested, failed, missing };

inline const char* to_string(CellSource s) {
  switch (s) {
    case CellSource::computed: return "computed";
    case CellSource::ingested: return "ingested";
    case CellSource::failed: return "failed";
    case CellSource::missing: return "missing";
  }
  return "?";
}

inline CellSource parse_cell_source(const std::string& s) {
  if (s == "computed") return CellSource::computed;
  if (s == "ingested") return CellSource::ingested;
  if (s == "failed") return CellSource::failed;
  if (s == "missing") return CellSource::missing;
  fail(ErrorKind::format, "unknown cell source '" + s + "'");
}

struct GridCell {
  std::optional<double> value;  // top-1 accuracy in percent
  CellSource source = CellSource::missing;
  std::string reason;
  std::optional<std::uint64_t> seed;
  nlohmann::json config;  // resolved setting for computed cells
};

// Row key: optional group (dataset block) plus method / feature-set name.
struct GridRow {
  std::string group;
  std::string name;

  std::string key() const { return group.empty() ? name : group + "/" + name; }
  bool operator==(const GridRow&) const = default;
};

// (feature set x setting) accuracy table. Columns listed in `extra_cols` are
// carried along for display but excluded from gap statistics.
struct ResultGrid {
  std::vector<GridRow> rows;
  std::vector<std::string> cols;
  std::vector<GridCell> cells;  // row-major
  std::set<std::string> extra_cols;
  nlohmann::json provenance = nlohmann::json::object();

  ResultGrid() = default;
  ResultGrid(std::vector<GridRow> r, std::vector<std::string> c)
      : rows(std::move(r)), cols(std::move(c)), cells(rows.size() * cols.size()) {}

  GridCell& at(std::size_t r, std::size_t c) { return cells[r * cols.size() + c]; }
  const GridCell& at(std::size_t r, std::size_t c) const { return cells[r * cols.size() + c]; }

  bool is_gap_column(std::size_t c) const { return !extra_cols.contains(cols[c]); }

  void validate() const {
    if (cells.size() != rows.size() * cols.size()) fail(ErrorKind::validation, "grid is not rectangular");
    for (const auto& cell : cells) {
      if (cell.value && !(*cell.value >= 0 && *cell.value <= 100))
        fail(ErrorKind::validation, "grid value outside [0, 100]");
    }
  }
};

// ---------------------------------------------------------------------------

// max - min over the non-missing values.
inline double gap(std::span<const std::optional<double>> values) {
  std::optional<double> lo, hi;
  for (const auto& v : values) {
    if (!v) continue;
    lo = lo ? std::min(*lo, *v) : *v;
    hi = hi ? std::max(*hi, *v) : *v;
  }
  if (!lo) fail(ErrorKind::empty, "gap needs at least one non-missing value");
  return *hi - *lo;
}

inline double gap(std::span<const double> values) {
  std::vector<std::optional<double>> v(values.begin(), values.end());
  return gap(std::span<const std::optional<double>>(v));
}

struct RowStability {
  GridRow row;
  std::size_t n_values = 0;
  double min = 0;
  double median = 0;  // lower-middle for even counts
  double max = 0;
  double gap = 0;
  std::string best_setting;
};

struct StabilityReport {
  std::vector<RowStability> rows;
  std::vector<std::string> gap_columns;
  std::size_t max_gap_row = 0;
  std::size_t min_gap_row = 0;
  // Per group: indices of the lowest- and highest-gap rows.
  std::map<std::string, std::pair<std::size_t, std::size_t>> group_extremes;
  std::vector<std::string> skipped_rows;  // rows with no values in any gap column

  double max_gap() const { return rows.at(max_gap_row).gap; }
};

inline StabilityReport stability_report(const ResultGrid& grid) {
  grid.validate();
  if (grid.rows.empty() || grid.cols.empty()) fail(ErrorKind::empty, "stability report of an empty grid");

  StabilityReport rep;
  for (std::size_t c = 0; c < grid.cols.size(); ++c)
    if (grid.is_gap_column(c)) rep.gap_columns.push_back(grid.cols[c]);

  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    std::vector<std::pair<double, std::size_t>> vals;
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      const auto& v = grid.at(r, c).value;
      if (v && grid.is_gap_column(c)) vals.emplace_back(*v, c);
    }
    if (vals.empty()) {
      rep.skipped_rows.push_back(grid.rows[r].key());
      continue;
    }
    RowStability s;
    s.row = grid.rows[r];
    s.n_values = vals.size();
    std::vector<double> sorted;
    for (const auto& [v, c] : vals) sorted.push_back(v);
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.median = sorted[(sorted.size() - 1) / 2];
    s.gap = s.max - s.min;
    // First column holding the maximum.
    std::size_t best = vals.front().second;
    double best_v = vals.front().first;
    for (const auto& [v, c] : vals)
      if (v > best_v) best_v = v, best = c;
    s.best_setting = grid.cols[best];
    rep.rows.push_back(std::move(s));
  }
  if (rep.rows.empty()) fail(ErrorKind::empty, "no row has a value in any gap column");

  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    if (rep.rows[i].gap > rep.rows[rep.max_gap_row].gap) rep.max_gap_row = i;
    if (rep.rows[i].gap < rep.rows[rep.min_gap_row].gap) rep.min_gap_row = i;
    const auto& g = rep.rows[i].row.group;
    auto [it, inserted] = rep.group_extremes.try_emplace(g, i, i);
    if (!inserted) {
      if (rep.rows[i].gap < rep.rows[it->second.first].gap) it->second.first = i;
      if (rep.rows[i].gap > rep.rows[it->second.second].gap) it->second.second = i;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Cross-setting runs.

struct FeatureSet {
  std::string name;
  FeatureMatrix train;
  FeatureMatrix val;
};

struct NamedSetting {
  std::string name;
  ProbeConfig config;
};

struct SweepOverrides {
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
};

struct SweepOptions {
  std::uint64_t grid_seed = 0;
  std::size_t threads = 1;  // concurrent cells
};

// Stable 64-bit FNV-1a over the seed bytes and both names, then a splitmix64
// finalizer. Independent of std::hash so seeds are portable.
inline std::uint64_t cell_seed(std::uint64_t grid_seed, const std::string& row, const std::string& col) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(grid_seed >> (8 * i)));
  for (char ch : row) mix(static_cast<std::uint8_t>(ch));
  mix(0);
  for (char ch : col) mix(static_cast<std::uint8_t>(ch));
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

inline ProbeConfig resolve_cell_config(const NamedSetting& setting, const SweepOverrides& overrides,
                                       std::uint64_t seed) {
  ProbeConfig cfg = setting.config;
  if (overrides.epochs) cfg.epochs = *overrides.epochs;
  if (overrides.batch_size) cfg.batch_size = *overrides.batch_size;
  // Keep warmup inside the shortened schedule, preserving its fraction.
  if (overrides.epochs && setting.config.warmup_epochs > 0) {
    cfg.warmup_epochs = setting.config.warmup_epochs * cfg.epochs / setting.config.epochs;
    if (cfg.warmup_epochs >= cfg.epochs) cfg.warmup_epochs = cfg.epochs - 1;
  }
  cfg.seed = seed;
  if (cfg.label.empty()) cfg.label = setting.name;
  return cfg;
}

// Each cell trains with seed cell_seed(grid_seed, row, col) and reports val
// top-1 in percent. A failing cell is marked failed; the grid is still returned.
inline ResultGrid run_cross_settings(std::span<const FeatureSet> feature_sets, std::span<const NamedSetting> settings,
                                     const SweepOverrides& overrides = {}, const SweepOptions& options = {}) {
  std::vector<GridRow> rows;
  for (const auto& fs : feature_sets) rows.push_back({"", fs.name});
  std::vector<std::string> cols;
  for (const auto& s : settings) cols.push_back(s.name);
  ResultGrid grid(std::move(rows), std::move(cols));

  const std::size_t n_cols = settings.size();
  parallel_for(grid.cells.size(), options.threads, [&](std::size_t idx) {
    const auto& fs = feature_sets[idx / n_cols];
    const auto& setting = settings[idx % n_cols];
    auto& cell = grid.cells[idx];
    cell.seed = cell_seed(options.grid_seed, fs.name, setting.name);
    try {
      const ProbeConfig cfg = resolve_cell_config(setting, overrides, *cell.seed);
      cell.config = to_json(cfg);
      const auto run = train_probe(fs.train, fs.val, cfg);
      const auto ev = evaluate_probe(run.head, fs.val);
      cell.value = 100.0 * ev.accuracy;
      cell.source = CellSource::computed;
    } catch (const std::exception& e) {
      cell.value.reset();
      cell.source = CellSource::failed;
      cell.reason = e.what();
    }
  });

  grid.provenance = {{"grid_seed", options.grid_seed},
                     {"seed_policy", "fnv1a64(grid_seed, row, col) + splitmix64"},
                     {"bn_running_stats", "exponential, seeded by the first training batch"}};
  if (overrides.epochs) grid.provenance["epochs_override"] = *overrides.epochs;
  if (overrides.batch_size) grid.provenance["batch_size_override"] = *overrides.batch_size;
  return grid;
}

// ---------------------------------------------------------------------------
// CSV ingestion: header `method,setting,accuracy`, optionally preceded by a
// `dataset` column. Accuracy is a percentage; "-", "" or "nan" mark missing.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) fail(ErrorKind::format, "unterminated quote in CSV line");
  fields.push_back(trim(cur));
  return fields;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

// Columns named in `extra_cols` (case-insensitive) are kept out of gap statistics.
inline ResultGrid ingest_grid_csv(const std::string& text, const std::set<std::string>& extra_cols = {"paper"}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  for (auto& h : header) h = detail::lower(h);
  bool has_group = false;
  if (header == std::vector<std::string>{"dataset", "method", "setting", "accuracy"}) has_group = true;
  else if (header != std::vector<std::string>{"method", "setting", "accuracy"})
    fail(ErrorKind::format, "grid CSV header must be 'method,setting,accuracy' (optionally with a leading 'dataset')");

  std::vector<GridRow> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::size_t, std::size_t>, std::optional<double>> values;
  auto index_of = [](auto& list, const auto& item) {
    auto it = std::find(list.begin(), list.end(), item);
    if (it != list.end()) return static_cast<std::size_t>(it - list.begin());
    list.push_back(item);
    return list.size() - 1;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    const std::size_t expected = has_group ? 4 : 3;
    if (f.size() != expected)
      fail(ErrorKind::format, "line " + std::to_string(line_no) + ": expected " + std::to_string(expected) + " fields");
    const GridRow row{has_group ? f[0] : "", f[expected - 3]};
    const std::string& col = f[expected - 2];
    const std::string& raw = f[expected - 1];
    if (row.name.empty() || col.empty()) fail(ErrorKind::format, "line " + std::to_string(line_no) + ": empty name");

    std::optional<double> value;
    const auto lowered = detail::lower(raw);
    if (!(raw.empty() || raw == "-" || lowered == "nan" || lowered == "na")) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(raw, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != raw.size() || !std::isfinite(v))
        fail(ErrorKind::format, "line " + std::to_string(line_no) + ": accuracy '" + raw + "' is not a number");
      if (v < 0 || v > 100)
        fail(ErrorKind::validation, "line " + std::to_string(line_no) + ": accuracy " + raw + " outside [0, 100]");
      value = v;
    }
    const auto r = index_of(rows, row);
    const auto c = index_of(cols, col);
    if (!values.emplace(std::pair{r, c}, value).second)
      fail(ErrorKind::validation, "line " + std::to_string(line_no) + ": duplicate entry for " + row.key() + " / " + col);
  }
  if (rows.empty()) fail(ErrorKind::empty, "grid CSV has no data rows");

  ResultGrid grid(std::move(rows), std::move(cols));
  for (const auto& [rc, v] : values) {
    auto& cell = grid.at(rc.first, rc.second);
    cell.value = v;
    cell.source = v ? CellSource::ingested : CellSource::missing;
  }
  for (const auto& c : grid.cols)
    if (extra_cols.contains(detail::lower(c))) grid.extra_cols.insert(c);
  grid.provenance = {{"source", "csv"}};
  return grid;
}

inline std::string grid_to_csv(const ResultGrid& grid) {
  bool grouped = false;
  for (const auto& r : grid.rows) grouped = grouped || !r.group.empty();
  std::ostringstream out;
  out << (grouped ? "dataset,method,setting,accuracy\n" : "method,setting,accuracy\n");
  out << std::setprecision(17);
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      if (grouped) out << detail::csv_field(grid.rows[r].group) << ',';
      out << detail::csv_field(grid.rows[r].name) << ',' << detail::csv_field(grid.cols[c]) << ',';
      const auto& v = grid.at(r, c).value;
      if (v) out << *v;
      else out << '-';
      out << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json to_json(const ResultGrid& grid) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : grid.rows) rows.push_back({{"group", r.group}, {"name", r.name}});
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      const auto& cell = grid.at(r, c);
      nlohmann::json j = {{"value", cell.value ? nlohmann::json(*cell.value) : nlohmann::json(nullptr)},
                          {"source", to_string(cell.source)}};
      if (!cell.reason.empty()) j["reason"] = cell.reason;
      if (cell.seed) j["seed"] = *cell.seed;
      if (!cell.config.is_null()) j["config"] = cell.config;
      row.push_back(std::move(j));
    }
    cells.push_back(std::move(row));
  }
  return {{"rows", rows},
          {"cols", grid.cols},
          {"extra_cols", std::vector<std::string>(grid.extra_cols.begin(), grid.extra_cols.end())},
          {"cells", cells},
          {"provenance", grid.provenance}};
}

inline ResultGrid grid_from_json(const nlohmann::json& j) {
  try {
    std::vector<GridRow> rows;
    for (const auto& r : j.at("rows")) rows.push_back({r.value("group", ""), r.at("name").get<std::string>()});
    ResultGrid grid(std::move(rows), j.at("cols").get<std::vector<std::string>>());
    for (const auto& c : j.value("extra_cols", std::vector<std::string>{})) grid.extra_cols.insert(c);
    const auto& cells = j.at("cells");
    if (cells.size() != grid.rows.size()) fail(ErrorKind::format, "grid JSON: cells do not match rows");
    for (std::size_t r = 0; r < grid.rows.size(); ++r) {
      if (cells[r].size() != grid.cols.size()) fail(ErrorKind::format, "grid JSON: ragged cell row");
      for (std::size_t c = 0; c < grid.cols.size(); ++c) {
        const auto& cj = cells[r][c];
        auto& cell = grid.at(r, c);
        if (!cj.at("value").is_null()) cell.value = cj.at("value").get<double>();
        cell.source = parse_cell_source(cj.value("source", cell.value ? "ingested" : "missing"));
        cell.reason = cj.value("reason", "");
        if (cj.contains("seed")) cell.seed = cj.at("seed").get<std::uint64_t>();
        if (cj.contains("config")) cell.config = cj.at("config");
      }
    }
    grid.provenance = j.value("provenance", nlohmann::json::object());
    grid.validate();
    return grid;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("malformed grid JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const StabilityReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"group", r.row.group},
                    {"name", r.row.name},
                    {"n_values", r.n_values},
                    {"min", r.min},
                    {"median", r.median},
                    {"max", r.max},
                    {"gap", r.gap},
                    {"best_setting", r.best_setting}});
  }
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, ext] : rep.group_extremes)
    groups[g.empty() ? "(all)" : g] = {{"lowest_gap", rep.rows[ext.first].row.name},
                                      {"highest_gap", rep.rows[ext.second].row.name}};
  return {{"gap_columns", rep.gap_columns},
          {"rows", rows},
          {"summary",
           {{"max_gap", rep.rows[rep.max_gap_row].gap},
            {"max_gap_row", rep.rows[rep.max_gap_row].row.key()},
            {"min_gap", rep.rows[rep.min_gap_row].gap},
            {"min_gap_row", rep.rows[rep.min_gap_row].row.key()},
            {"groups", groups},
            {"skipped_rows", rep.skipped_rows}}}};
}

inline std::string format_fixed(double v, int decimals = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(decimals) << v;
  return s.str();
}

// Aligned text table: [Dataset] | Method | one column per setting | Gap.
inline std::string format_report_table(const ResultGrid& grid, const StabilityReport& rep) {
  bool grouped = false;
  for (const auto& r : grid.rows) grouped = grouped || !r.group.empty();

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head;
  if (grouped) head.push_back("Dataset");
  head.push_back("Method");
  for (const auto& c : grid.cols) head.push_back(c);
  head.push_back("Gap");
  table.push_back(head);

  std::map<std::string, const RowStability*> by_key;
  for (const auto& r : rep.rows) by_key[r.row.key()] = &r;
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    std::vector<std::string> line;
    if (grouped) line.push_back(grid.rows[r].group);
    line.push_back(grid.rows[r].name);
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      const auto& v = grid.at(r, c).value;
      line.push_back(v ? format_fixed(*v) : "-");
    }
    auto it = by_key.find(grid.rows[r].key());
    line.push_back(it != by_key.end() ? format_fixed(it->second->gap) : "-");
    table.push_back(std::move(line));
  }

  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());

  std::ostringstream out;
  const std::size_t label_cols = grouped ? 2 : 1;
  auto rule = [&] {
    for (std::size_t i = 0; i < width.size(); ++i) out << (i ? "-+-" : "") << std::string(width[i], '-');
    out << '\n';
  };
  for (std::size_t li = 0; li < table.size(); ++li) {
    const auto& line = table[li];
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out << " | ";
      if (i < label_cols) out << std::left << std::setw(static_cast<int>(width[i])) << line[i];
      else out << std::right << std::setw(static_cast<int>(width[i])) << line[i];
    }
    out << '\n';
    if (li == 0) rule();
  }
  if (!grid.extra_cols.empty()) {
    out << "\nExcluded from Gap:";
    for (const auto& c : grid.extra_cols) out << ' ' << c;
    out << '\n';
  }
  const auto& worst = rep.rows[rep.max_gap_row];
  out << "Max gap: " << format_fixed(worst.gap) << " (" << worst.row.key() << ")\n";
  return out.str();
}

}  // namespace sslprobe
