#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sslprobe/binary_io.hpp"
#include "sslprobe/catalog.hpp"
#include "sslprobe/harness.hpp"
#include "sslprobe/synthetic.hpp"

using namespace sslprobe;

namespace {

std::string data_file(const std::string& name) { return detail::read_text_file(std::string(SSLPROBE_TEST_DATA) + "/" + name); }

ResultGrid transfer_grid() { return ingest_grid_csv(data_file("tl_results.csv")); }

std::vector<FeatureSet> tiny_feature_sets() {
  std::vector<FeatureSet> out;
  for (std::uint64_t s = 0; s < 2; ++s) {
    SyntheticSpec spec{200, 80, 6, 3, 4, 2.5, 0.7, 40 + s};
    auto split = make_synthetic(spec);
    out.push_back({"fs" + std::to_string(s), split.train, split.val});
  }
  return out;
}

std::vector<NamedSetting> tiny_settings() {
  auto a = named_setting("dino");
  auto b = named_setting("mocov3+bn");
  auto c = named_setting("mae");
  return {{"dino", a}, {"mocov3+bn", b}, {"mae", c}};
}

}  // namespace

TEST(Gap, MaxMinusMinIgnoringMissing) {
  const std::optional<double> v[] = {70.0, std::nullopt, 90.5, 80.0};
  EXPECT_DOUBLE_EQ(gap(std::span<const std::optional<double>>(v)), 20.5);
  const double single[] = {42.0};
  EXPECT_EQ(gap(std::span<const double>(single)), 0.0);
  const std::optional<double> none[] = {std::nullopt};
  try {
    gap(std::span<const std::optional<double>>(none));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty);
  }
}

TEST(Ingest, TransferGridShapeAndExtraColumn) {
  const auto g = transfer_grid();
  EXPECT_EQ(g.rows.size(), 24u);
  EXPECT_EQ(g.cols, (std::vector<std::string>{"Paper", "DINO", "MoCo v3", "Short"}));
  EXPECT_TRUE(g.extra_cols.contains("Paper"));
  EXPECT_FALSE(g.at(2, 0).value.has_value());  // CIFAR-100 MoCo v3 has no reference value
  EXPECT_EQ(g.at(2, 0).source, CellSource::missing);
  EXPECT_EQ(g.rows[0].group, "CIFAR-100");
}

TEST(Stability, TransferGridGapsMatchReference) {
  const auto g = transfer_grid();
  const auto rep = stability_report(g);
  std::istringstream expected(data_file("tl_gaps.csv"));
  std::string line;
  std::getline(expected, line);
  std::size_t checked = 0;
  while (std::getline(expected, line)) {
    const auto f = detail::split_csv_line(line);
    const double reference = std::stod(f[2]);
    bool found = false;
    for (const auto& r : rep.rows)
      if (r.row.group == f[0] && r.row.name == f[1]) {
        EXPECT_NEAR(r.gap, reference, 0.005) << line;
        EXPECT_EQ(r.n_values, 3u);
        found = true;
      }
    EXPECT_TRUE(found) << line;
    ++checked;
  }
  EXPECT_EQ(checked, 24u);
}

TEST(Stability, SummaryRowsAndGroupExtremes) {
  const auto rep = stability_report(transfer_grid());
  EXPECT_EQ(rep.gap_columns, (std::vector<std::string>{"DINO", "MoCo v3", "Short"}));
  EXPECT_EQ(rep.rows[rep.max_gap_row].row.key(), "Stanford Cars/iBOT");
  EXPECT_EQ(rep.rows[rep.min_gap_row].row.key(), "Flowers-102/DeiT");
  const auto& [lo, hi] = rep.group_extremes.at("CIFAR-100");
  EXPECT_EQ(rep.rows[lo].row.name, "DeiT");
  EXPECT_EQ(rep.rows[hi].row.name, "iBOT");
  // DINO on Flowers: 98.24 / 37.42 / 86.61
  for (const auto& r : rep.rows)
    if (r.row.key() == "Flowers-102/DINO") {
      EXPECT_DOUBLE_EQ(r.median, 86.61);
      EXPECT_EQ(r.best_setting, "DINO");
    }
}

TEST(Stability, EvenCountMedianIsLowerMiddle) {
  ResultGrid g({{"", "m"}}, {"a", "b", "c", "d"});
  const double v[] = {10, 40, 20, 30};
  for (int c = 0; c < 4; ++c) g.at(0, c).value = v[c];
  const auto rep = stability_report(g);
  EXPECT_EQ(rep.rows[0].median, 20.0);
  EXPECT_EQ(rep.rows[0].best_setting, "b");
}

TEST(Stability, RowsWithoutValuesAreSkipped) {
  auto g = ingest_grid_csv("method,setting,accuracy\nA,x,50\nA,y,70\nB,x,-\nB,y,nan\n");
  const auto rep = stability_report(g);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.skipped_rows, (std::vector<std::string>{"B"}));
}

TEST(Ingest, RejectsBadInput) {
  auto kind_of = [](const std::string& text) {
    try {
      ingest_grid_csv(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::alignment;  // sentinel: no error
  };
  EXPECT_EQ(kind_of("model,setting,accuracy\nA,x,1\n"), ErrorKind::format);
  EXPECT_EQ(kind_of("method,setting,accuracy\nA,x,101\n"), ErrorKind::validation);
  EXPECT_EQ(kind_of("method,setting,accuracy\nA,x,-3\n"), ErrorKind::validation);
  EXPECT_EQ(kind_of("method,setting,accuracy\nA,x,abc\n"), ErrorKind::format);
  EXPECT_EQ(kind_of("method,setting,accuracy\nA,x,1\nA,x,2\n"), ErrorKind::validation);
  EXPECT_EQ(kind_of("method,setting,accuracy\nA,x\n"), ErrorKind::format);
  EXPECT_EQ(kind_of("method,setting,accuracy\n"), ErrorKind::empty);
}

TEST(Ingest, QuotedFieldsAndWhitespace) {
  const auto g = ingest_grid_csv("Method,Setting,Accuracy\n\"SL, DeiT\",\"MoCo v3\",88.5\n\n");
  ASSERT_EQ(g.rows.size(), 1u);
  EXPECT_EQ(g.rows[0].name, "SL, DeiT");
  EXPECT_EQ(*g.at(0, 0).value, 88.5);
}

TEST(Ingest, CsvRoundTrip) {
  const auto g = transfer_grid();
  const auto back = ingest_grid_csv(grid_to_csv(g));
  ASSERT_EQ(back.rows, g.rows);
  ASSERT_EQ(back.cols, g.cols);
  for (std::size_t i = 0; i < g.cells.size(); ++i) EXPECT_EQ(back.cells[i].value, g.cells[i].value);
}

TEST(Ingest, JsonRoundTrip) {
  const auto g = transfer_grid();
  const auto back = grid_from_json(to_json(g));
  EXPECT_EQ(to_json(back), to_json(g));
  EXPECT_THROW(grid_from_json({{"rows", 3}}), Error);
}

TEST(Report, TableShowsGapColumnAndExclusion) {
  const auto g = transfer_grid();
  const auto text = format_report_table(g, stability_report(g));
  EXPECT_NE(text.find("Gap"), std::string::npos);
  EXPECT_NE(text.find("86.24"), std::string::npos);
  EXPECT_NE(text.find("Excluded from Gap: Paper"), std::string::npos);
  EXPECT_NE(text.find("Max gap: 86.24 (Stanford Cars/iBOT)"), std::string::npos);
}

TEST(CellSeed, StableAndDistinct) {
  EXPECT_EQ(cell_seed(0, "a", "b"), cell_seed(0, "a", "b"));
  EXPECT_NE(cell_seed(0, "a", "b"), cell_seed(1, "a", "b"));
  EXPECT_NE(cell_seed(0, "ab", ""), cell_seed(0, "a", "b"));
  EXPECT_NE(cell_seed(0, "a", "b"), cell_seed(0, "b", "a"));
}

TEST(Sweep, ResolveConfigScalesWarmup) {
  const NamedSetting mae{"mae", named_setting("mae")};
  const auto cfg = resolve_cell_config(mae, {20, 256}, 7);
  EXPECT_EQ(cfg.epochs, 20u);
  EXPECT_EQ(cfg.batch_size, 256u);
  EXPECT_EQ(cfg.warmup_epochs, 2u);  // 10 of 90 epochs, scaled to 20
  EXPECT_EQ(cfg.seed, 7u);
  const auto tiny = resolve_cell_config(mae, {1, std::nullopt}, 7);
  EXPECT_EQ(tiny.warmup_epochs, 0u);
  EXPECT_NO_THROW(tiny.validate());
}

TEST(Sweep, CellsMatchDirectTraining) {
  const auto fs = tiny_feature_sets();
  const auto settings = tiny_settings();
  const SweepOverrides ov{3, 32};
  const auto grid = run_cross_settings(fs, settings, ov, {5, 1});
  for (std::size_t r = 0; r < fs.size(); ++r)
    for (std::size_t c = 0; c < settings.size(); ++c) {
      const auto& cell = grid.at(r, c);
      ASSERT_EQ(cell.source, CellSource::computed) << cell.reason;
      const auto cfg = resolve_cell_config(settings[c], ov, cell_seed(5, fs[r].name, settings[c].name));
      const auto run = train_probe(fs[r].train, fs[r].val, cfg);
      EXPECT_EQ(*cell.value, 100.0 * evaluate_probe(run.head, fs[r].val).accuracy);
      EXPECT_EQ(cell.config, to_json(cfg));
    }
  EXPECT_EQ(grid.provenance["grid_seed"], 5);
}

TEST(Sweep, OrderAndThreadEquivariant) {
  const auto fs = tiny_feature_sets();
  auto settings = tiny_settings();
  const SweepOverrides ov{2, 64};
  const auto a = run_cross_settings(fs, settings, ov, {1, 1});
  std::reverse(settings.begin(), settings.end());
  const auto b = run_cross_settings(fs, settings, ov, {1, 3});
  for (std::size_t r = 0; r < fs.size(); ++r)
    for (std::size_t c = 0; c < settings.size(); ++c)
      EXPECT_EQ(a.at(r, c).value, b.at(r, settings.size() - 1 - c).value);
}

TEST(Sweep, FailingCellIsRecordedNotFatal) {
  auto fs = tiny_feature_sets();
  fs[1].val.n_classes = 7;  // inconsistent with train
  const auto grid = run_cross_settings(fs, tiny_settings(), {1, 64});
  EXPECT_EQ(grid.at(0, 0).source, CellSource::computed);
  EXPECT_EQ(grid.at(1, 0).source, CellSource::failed);
  EXPECT_FALSE(grid.at(1, 0).reason.empty());
  const auto rep = stability_report(grid);
  EXPECT_EQ(rep.rows.size(), 1u);
}
