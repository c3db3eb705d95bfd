#pragma once

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sslprobe/analysis.hpp"
#include "sslprobe/binary_io.hpp"
#include "sslprobe/catalog.hpp"
#include "sslprobe/feature_store.hpp"
#include "sslprobe/harness.hpp"
#include "sslprobe/knn.hpp"
#include "sslprobe/probe.hpp"
#include "sslprobe/synthetic.hpp"

#ifndef SSLPROBE_VERSION
#define SSLPROBE_VERSION "dev"
#endif

namespace sslprobe::cli {

using nlohmann::json;

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) fail(ErrorKind::io, "SHA-256 failed");
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return s.str();
}

inline std::size_t default_threads() {
  if (const char* env = std::getenv("SSLPROBE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

// Everything a replay needs: the command, resolved config, seeds and the
// digests of every byte read.
struct RunManifest {
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  double duration_s = 0;

  json to_json() const {
    return {{"command", argv},     {"config", config},     {"seeds", seeds},
            {"inputs", inputs},    {"version", SSLPROBE_VERSION}, {"duration_s", duration_s}};
  }
};

class Session {
 public:
  RunManifest manifest;

  std::vector<std::uint8_t> read_bytes(const std::string& path) {
    auto bytes = detail::read_file_bytes(path);
    manifest.inputs[path] = {{"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}};
    return bytes;
  }
  std::string read_text(const std::string& path) {
    const auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
  }
  FeatureMatrix features(const std::string& path) { return decode_features(read_bytes(path), path); }
};

struct Common {
  std::size_t threads = default_threads();
  bool deterministic = true;
  std::string manifest_path;
  std::string out;
};

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    detail::write_text_file(path, text);
}

inline std::string percent(double fraction) { return format_fixed(100.0 * fraction) + "%"; }

inline std::vector<NamedScore> read_scores(const std::string& text) {
  std::vector<NamedScore> out;
  std::istringstream in(text);
  std::string line;
  bool header_checked = false;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 2) fail(ErrorKind::format, "score CSV rows need exactly two fields: name,score");
    char* end = nullptr;
    const double v = std::strtod(f[1].c_str(), &end);
    if (end == f[1].c_str() || *end != '\0') {
      if (!header_checked) {
        header_checked = true;
        continue;
      }
      fail(ErrorKind::format, "non-numeric score '" + f[1] + "'");
    }
    header_checked = true;
    out.push_back({f[0], v});
  }
  return out;
}

inline std::pair<double, double> parse_range(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) fail(ErrorKind::config, "range must be LO,HI");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    fail(ErrorKind::config, "range must be LO,HI");
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  CLI::App app{"Linear-evaluation stability toolkit", "sslprobe"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SSLPROBE_VERSION);
  Common common;
  Session session;
  session.manifest.argv = args;

  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--threads", common.threads, "Worker threads (default: $SSLPROBE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic,!--no-deterministic", common.deterministic, "Bit-stable reduction order (default on)");
    sub->add_option("--manifest", common.manifest_path, "Run manifest path (default: <out>.manifest.json)");
    if (with_out) sub->add_option("--out", common.out, "Primary output file (default: stdout)");
  };

  // stats
  std::string stats_in, stats_hist;
  std::size_t stats_bins = 200;
  auto* stats = app.add_subcommand("stats", "Per-dimension and global feature statistics");
  stats->add_option("--in", stats_in, "SSLF feature file")->required();
  stats->add_option("--bins", stats_bins, "Histogram bins")->check(CLI::PositiveNumber);
  stats->add_option("--hist", stats_hist, "Histogram CSV output");
  add_common(stats);

  // knn
  std::string knn_train, knn_test, knn_voting = "weighted";
  std::vector<std::size_t> knn_ks;
  double knn_temp = 0.07;
  auto* knn = app.add_subcommand("knn", "Cosine k-NN accuracy, or a sweep over several k");
  knn->add_option("--train", knn_train)->required();
  knn->add_option("--test", knn_test)->required();
  knn->add_option("--k", knn_ks, "One or more k values (default 20)")->delimiter(',');
  knn->add_option("--temperature", knn_temp);
  knn->add_option("--voting", knn_voting, "weighted|uniform");
  add_common(knn);

  // probe
  std::string probe_setting, probe_config, probe_train, probe_val, probe_head_out, probe_optimizer;
  std::optional<std::size_t> probe_epochs, probe_batch, probe_warmup;
  std::optional<double> probe_lr, probe_wd, probe_momentum;
  std::optional<bool> probe_bn;
  std::uint64_t probe_seed = 0;
  auto* probe = app.add_subcommand("probe", "Train and evaluate a linear probe");
  auto* setting_opt = probe->add_option("--setting", probe_setting, "Named setting, e.g. mae or dino+bn");
  probe->add_option("--config", probe_config, "ProbeConfig JSON file")->excludes(setting_opt);
  probe->add_option("--train", probe_train)->required();
  probe->add_option("--val", probe_val)->required();
  probe->add_option("--epochs", probe_epochs);
  probe->add_option("--batch-size", probe_batch);
  probe->add_option("--warmup-epochs", probe_warmup);
  probe->add_option("--lr", probe_lr);
  probe->add_option("--weight-decay", probe_wd);
  probe->add_option("--momentum", probe_momentum);
  probe->add_option("--optimizer", probe_optimizer, "sgd|adamw|lars");
  probe->add_option("--bn", probe_bn, "Force the BatchNorm layer on or off");
  probe->add_option("--seed", probe_seed);
  probe->add_option("--head-out", probe_head_out, "Write the trained head (SSLH)");
  add_common(probe);

  // sweep
  std::vector<std::string> sweep_sets, sweep_settings;
  std::optional<std::size_t> sweep_epochs, sweep_batch;
  std::uint64_t sweep_seed = 0;
  std::string sweep_csv;
  auto* sweep = app.add_subcommand("sweep", "Every feature set under every setting");
  sweep->add_option("--set", sweep_sets, "NAME=TRAIN.sslf:VAL.sslf (repeatable)")->required();
  sweep->add_option("--settings", sweep_settings, "Comma-separated setting names")->delimiter(',')->required();
  sweep->add_option("--epochs", sweep_epochs);
  sweep->add_option("--batch-size", sweep_batch);
  sweep->add_option("--grid-seed", sweep_seed);
  sweep->add_option("--csv", sweep_csv, "Also write the grid as long-form CSV");
  add_common(sweep);

  // report
  std::string report_in, report_json;
  std::vector<std::string> report_extra{"paper"};
  auto* report = app.add_subcommand("report", "Gap/stability table from a grid JSON or long-form CSV");
  report->add_option("--in", report_in)->required();
  report->add_option("--extra-cols", report_extra, "Columns shown but excluded from the gap")->delimiter(',');
  report->add_option("--json", report_json, "Write the report JSON here");
  add_common(report);

  // rankcmp
  std::string rank_a, rank_b;
  auto* rankcmp = app.add_subcommand("rankcmp", "Spearman / Kendall agreement of two rankings");
  rankcmp->add_option("--a", rank_a, "CSV of name,score")->required();
  rankcmp->add_option("--b", rank_b, "CSV of name,score")->required();
  add_common(rankcmp);

  // cka
  std::vector<std::string> cka_x, cka_y;
  auto* cka = app.add_subcommand("cka", "Linear CKA, pairwise or layer by layer");
  cka->add_option("--x", cka_x, "Feature file(s); several files give a layerwise comparison")->required();
  cka->add_option("--y", cka_y, "Feature file(s), paired with --x")->required();
  add_common(cka);

  // landscape
  std::string land_head, land_data, land_norm = "group", land_alpha = "-1,1", land_beta = "-1,1", land_json;
  std::size_t land_points = 25;
  std::uint64_t land_seed = 0;
  auto* landscape = app.add_subcommand("landscape", "2-D loss surface around a trained probe head");
  landscape->add_option("--head", land_head, "SSLH head file")->required();
  landscape->add_option("--data", land_data, "Labeled SSLF file to evaluate the loss on")->required();
  landscape->add_option("--points", land_points, "Points per axis")->check(CLI::Range(2, 1001));
  landscape->add_option("--alpha", land_alpha, "LO,HI");
  landscape->add_option("--beta", land_beta, "LO,HI");
  landscape->add_option("--seed", land_seed);
  landscape->add_option("--norm", land_norm, "group|none");
  landscape->add_option("--json", land_json, "Also write the grid as JSON");
  add_common(landscape);

  // synth
  SyntheticSpec synth_spec;
  std::string synth_train, synth_val;
  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled train/val pair");
  synth->add_option("--train-out", synth_train)->required();
  synth->add_option("--val-out", synth_val)->required();
  synth->add_option("--n-train", synth_spec.n_train);
  synth->add_option("--n-val", synth_spec.n_val);
  synth->add_option("--dims", synth_spec.dims);
  synth->add_option("--classes", synth_spec.classes);
  synth->add_option("--signal-dims", synth_spec.signal_dims);
  synth->add_option("--separation", synth_spec.separation);
  synth->add_option("--noise", synth_spec.noise);
  synth->add_option("--seed", synth_spec.seed);
  add_common(synth, false);

  auto* settings = app.add_subcommand("settings", "List the named probe settings");
  add_common(settings);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << SSLPROBE_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "sslprobe: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  auto& m = session.manifest;
  try {
    m.config["threads"] = common.threads;
    m.config["deterministic"] = common.deterministic;
    std::ostringstream text;  // human output

    if (*stats) {
      const auto f = session.features(stats_in);
      const auto s = feature_stats(f, stats_bins);
      m.config["bins"] = stats_bins;
      auto j = to_json(s);
      j["n_rows"] = f.n_rows;
      j["n_dims"] = f.n_dims;
      emit(common.out, j.dump(2) + "\n", out);
      if (!stats_hist.empty()) {
        std::ostringstream csv;
        csv << std::setprecision(17) << "lo,hi,count\n";
        for (std::size_t b = 0; b < s.hist_counts.size(); ++b)
          csv << s.hist_edges[b] << "," << s.hist_edges[b + 1] << "," << s.hist_counts[b] << "\n";
        detail::write_text_file(stats_hist, csv.str());
      }
    } else if (*knn) {
      const auto train = session.features(knn_train);
      const auto test = session.features(knn_test);
      KnnConfig cfg;
      cfg.temperature = knn_temp;
      cfg.voting = parse_voting(knn_voting);
      cfg.threads = common.threads;
      if (knn_ks.empty()) knn_ks.push_back(cfg.k);
      m.config["k"] = knn_ks;
      m.config["temperature"] = cfg.temperature;
      m.config["voting"] = to_string(cfg.voting);
      json j;
      j["voting"] = to_string(cfg.voting);
      j["temperature"] = cfg.temperature;
      if (knn_ks.size() == 1) {
        cfg.k = knn_ks[0];
        const double acc = knn_accuracy(train, test, cfg);
        j["k"] = cfg.k;
        j["accuracy"] = acc;
        text << "k=" << cfg.k << " top-1 " << percent(acc) << "\n";
      } else {
        j["sweep"] = json::array();
        for (const auto& e : knn_sweep(train, test, knn_ks, cfg)) {
          j["sweep"].push_back({{"k", e.k}, {"accuracy", e.accuracy}});
          text << "k=" << e.k << " top-1 " << percent(e.accuracy) << "\n";
        }
      }
      emit(common.out, j.dump(2) + "\n", out);
    } else if (*probe) {
      ProbeConfig cfg;
      if (!probe_config.empty())
        cfg = probe_config_from_json(json::parse(session.read_text(probe_config)));
      else
        cfg = named_setting(probe_setting.empty() ? "dino" : probe_setting);
      // epoch overrides rescale the warmup exactly as sweeps do
      cfg = resolve_cell_config({cfg.label, cfg}, {probe_epochs, probe_batch}, probe_seed);
      if (probe_warmup) cfg.warmup_epochs = *probe_warmup;
      if (probe_lr) cfg.lr = *probe_lr;
      if (probe_wd) cfg.optimizer.weight_decay = *probe_wd;
      if (probe_momentum) cfg.optimizer.momentum = *probe_momentum;
      if (!probe_optimizer.empty()) cfg.optimizer.kind = parse_optimizer(probe_optimizer);
      if (probe_bn) cfg.use_bn = *probe_bn;
      const auto train = session.features(probe_train);
      const auto val = session.features(probe_val);
      m.config["probe"] = to_json(cfg);
      m.seeds["probe"] = cfg.seed;
      const auto run = train_probe(train, val, cfg, TrainOptions{common.threads});
      const auto ev = evaluate_probe(run.head, val);
      const json j = {{"config", to_json(cfg)},
                      {"history", to_json(run.history)},
                      {"val_accuracy", ev.accuracy},
                      {"val_loss", ev.loss}};
      emit(common.out, j.dump(2) + "\n", out);
      if (!probe_head_out.empty()) write_head(run.head, probe_head_out);
      text << (cfg.label.empty() ? std::string("custom") : cfg.label) << ": val top-1 " << percent(ev.accuracy)
           << ", val loss " << format_fixed(ev.loss, 4) << "\n";
    } else if (*sweep) {
      std::vector<FeatureSet> sets;
      for (const auto& spec : sweep_sets) {
        const auto eq = spec.find('='), colon = spec.find(':', eq == std::string::npos ? 0 : eq);
        if (eq == std::string::npos || colon == std::string::npos || eq == 0)
          fail(ErrorKind::config, "--set expects NAME=TRAIN:VAL, got '" + spec + "'");
        sets.push_back({spec.substr(0, eq), session.features(spec.substr(eq + 1, colon - eq - 1)),
                        session.features(spec.substr(colon + 1))});
      }
      std::vector<NamedSetting> named;
      for (const auto& s : sweep_settings) named.push_back({s, named_setting(s)});
      const SweepOverrides ov{sweep_epochs, sweep_batch};
      m.config["settings"] = sweep_settings;
      if (sweep_epochs) m.config["epochs"] = *sweep_epochs;
      if (sweep_batch) m.config["batch_size"] = *sweep_batch;
      m.seeds["grid_seed"] = sweep_seed;
      const auto grid = run_cross_settings(sets, named, ov, {sweep_seed, common.threads});
      for (std::size_t r = 0; r < grid.rows.size(); ++r)
        for (std::size_t c = 0; c < grid.cols.size(); ++c)
          m.seeds["cells"][grid.rows[r].key() + "|" + grid.cols[c]] = cell_seed(sweep_seed, grid.rows[r].key(), grid.cols[c]);
      emit(common.out, to_json(grid).dump(2) + "\n", out);
      if (!sweep_csv.empty()) detail::write_text_file(sweep_csv, grid_to_csv(grid));
      text << format_report_table(grid, stability_report(grid));
    } else if (*report) {
      const auto raw = session.read_text(report_in);
      std::set<std::string> extra;
      for (const auto& e : report_extra) extra.insert(detail::lower(e));
      const auto first = raw.find_first_not_of(" \t\r\n");
      const bool is_json = first != std::string::npos && raw[first] == '{';
      ResultGrid grid = is_json ? grid_from_json(json::parse(raw)) : ingest_grid_csv(raw, extra);
      if (is_json)
        for (const auto& c : grid.cols)
          if (extra.contains(detail::lower(c))) grid.extra_cols.insert(c);
      m.config["extra_cols"] = report_extra;
      const auto rep = stability_report(grid);
      emit(common.out, format_report_table(grid, rep), out);
      if (!report_json.empty()) detail::write_text_file(report_json, to_json(rep).dump(2) + "\n");
    } else if (*rankcmp) {
      const auto a = read_scores(session.read_text(rank_a));
      const auto b = read_scores(session.read_text(rank_b));
      const auto rc = rank_consistency(a, b);
      emit(common.out, to_json(rc).dump(2) + "\n", out);
      text << "spearman " << format_fixed(rc.spearman, 4) << ", kendall " << format_fixed(rc.kendall_tau, 4)
           << (rc.has_ties ? " (ties)" : "") << "\n";
    } else if (*cka) {
      if (cka_x.size() != cka_y.size()) fail(ErrorKind::shape, "--x and --y need the same number of files");
      std::vector<FeatureMatrix> xs, ys;
      for (const auto& p : cka_x) xs.push_back(session.features(p));
      for (const auto& p : cka_y) ys.push_back(session.features(p));
      std::vector<double> values;
      if (xs.size() == 1)
        values.push_back(linear_cka(xs[0], ys[0]).value);
      else
        values = cka_layerwise(xs, ys);
      emit(common.out, cka_to_csv(values), out);
      for (std::size_t i = 0; i < values.size(); ++i) text << "cka[" << i << "] " << format_fixed(values[i], 4) << "\n";
    } else if (*landscape) {
      const auto head_bytes = session.read_bytes(land_head);
      const auto head = decode_head(head_bytes);
      const auto data = session.features(land_data);
      const auto ar = parse_range(land_alpha), br = parse_range(land_beta);
      const LandscapeAxes axes{land_points, land_points, ar.first, ar.second, br.first, br.second};
      if (land_norm != "group" && land_norm != "none") fail(ErrorKind::config, "--norm must be group or none");
      const auto norm = land_norm == "group" ? DirectionNorm::group : DirectionNorm::none;
      m.seeds["landscape"] = land_seed;
      m.config["points"] = land_points;
      m.config["alpha"] = {ar.first, ar.second};
      m.config["beta"] = {br.first, br.second};
      m.config["norm"] = land_norm;
      const auto loss_at = [&](std::span<const double> flat) {
        auto h = head;
        h.set_flat_parameters(flat);
        return evaluate_probe(h, data).loss;
      };
      const std::size_t bounds[] = {head.weight.size()};
      const auto grid = loss_landscape(loss_at, head.flat_parameters(), bounds, axes, land_seed, norm, common.threads);
      emit(common.out, landscape_to_csv(grid), out);
      if (!land_json.empty()) detail::write_text_file(land_json, to_json(grid).dump(2) + "\n");
      text << "origin loss " << format_fixed(grid.origin_loss, 4) << ", " << grid.missing_cells() << " missing cells\n";
    } else if (*synth) {
      m.seeds["synthetic"] = synth_spec.seed;
      const auto split = make_synthetic(synth_spec);
      write_features(split.train, synth_train);
      write_features(split.val, synth_val);
      text << "wrote " << split.train.n_rows << " train and " << split.val.n_rows << " val rows\n";
    } else if (*settings) {
      std::ostringstream list;
      for (const auto& name : lp_setting_names()) {
        const auto c = named_setting(name);
        list << name << ": epochs=" << c.epochs << " batch=" << c.batch_size << " opt=" << to_string(c.optimizer.kind)
             << " lr=" << c.lr << " warmup=" << c.warmup_epochs << " bn=" << (c.use_bn ? "yes" : "no") << "\n";
      }
      emit(common.out, list.str(), out);
    }

    // Human summary goes to stderr when stdout carries the primary output.
    (common.out.empty() || common.out == "-" ? err : out) << text.str();

    m.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string manifest_path = common.manifest_path;
    if (manifest_path.empty() && !common.out.empty() && common.out != "-") manifest_path = common.out + ".manifest.json";
    if (manifest_path.empty() && *synth) manifest_path = synth_train + ".manifest.json";
    if (manifest_path.empty())
      err << "manifest: " << m.to_json().dump() << "\n";
    else
      detail::write_text_file(manifest_path, m.to_json().dump(2) + "\n");
    return 0;
  } catch (const Error& e) {
    err << "sslprobe: " << e.what() << "\n";
    return e.is_io_like() ? 2 : 1;
  } catch (const json::exception& e) {
    err << "sslprobe: format error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sslprobe::cli
