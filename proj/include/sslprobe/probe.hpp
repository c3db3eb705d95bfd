#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslprobe/batchnorm.hpp"
#include "sslprobe/binary_io.hpp"
#include "sslprobe/error.hpp"
#include "sslprobe/feature_store.hpp"
#include "sslprobe/optim.hpp"
#include "sslprobe/parallel.hpp"

namespace sslprobe {

// One linear-probe hyperparameter setting.
struct ProbeConfig {
  std::string label;
  std::size_t epochs = 100;
  std::size_t batch_size = 1024;
  OptimizerSpec optimizer;
  double lr = 0.001;
  std::size_t warmup_epochs = 0;
  double warmup_start_lr = 0.0;
  double min_lr = 0.0;
  bool use_bn = false;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  // Recorded for provenance; features arrive already concatenated/pooled.
  std::size_t concat_last_layers = 1;
  bool patch_token = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) fail(ErrorKind::config, "epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
    if (!(lr > 0) || !std::isfinite(lr)) fail(ErrorKind::config, "lr must be positive");
    if (warmup_epochs >= epochs) fail(ErrorKind::config, "warmup_epochs must be < epochs");
    if (!(min_lr >= 0) || !(warmup_start_lr >= 0)) fail(ErrorKind::config, "min_lr / warmup_start_lr must be >= 0");
    if (concat_last_layers < 1) fail(ErrorKind::config, "concat_last_layers must be >= 1");
    optimizer.validate();
    if (use_bn) BatchNormState(1, bn_epsilon, bn_momentum).validate();
  }

  LrSchedule schedule(std::size_t steps_per_epoch) const {
    return {lr, min_lr, warmup_start_lr, warmup_epochs * steps_per_epoch};
  }
};

// y = W x + b on (optionally batch-normalized) features. W is C x D row-major.
struct ProbeHead {
  std::size_t n_classes = 0;
  std::size_t n_dims = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  std::optional<BatchNormState> bn;

  static ProbeHead zeros(std::size_t classes, std::size_t dims) {
    return {classes, dims, std::vector<double>(classes * dims, 0.0), std::vector<double>(classes, 0.0), std::nullopt};
  }

  void validate() const {
    if (n_classes < 1 || n_dims < 1) fail(ErrorKind::validation, "probe head needs >= 1 class and >= 1 dim");
    if (weight.size() != n_classes * n_dims || bias.size() != n_classes)
      fail(ErrorKind::validation, "probe head parameter sizes do not match (n_classes, n_dims)");
    if (bn) {
      if (bn->dims() != n_dims) fail(ErrorKind::validation, "BN dimensionality does not match the head");
      bn->validate();
    }
  }

  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  // Flat view used by the landscape: weight then bias.
  std::vector<double> flat_parameters() const {
    std::vector<double> flat(weight);
    flat.insert(flat.end(), bias.begin(), bias.end());
    return flat;
  }

  void set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) fail(ErrorKind::shape, "flat parameter vector has the wrong length");
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(weight.size()), weight.begin());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(weight.size()), flat.end(), bias.begin());
  }
};

struct TrainHistory {
  std::vector<double> train_loss;      // per epoch, mean over rows
  std::vector<double> val_loss;        // per epoch
  std::vector<double> val_accuracy;    // per epoch, fraction
  std::vector<double> lr_trace;        // per optimizer step
  std::size_t steps_per_epoch = 0;
  std::size_t bn_skipped_batches = 0;  // singleton batches excluded from BN statistics
};

struct ProbeRun {
  ProbeHead head;
  TrainHistory history;
};

struct LossAndGrad {
  double loss = 0;                 // mean cross-entropy
  std::vector<double> grad_weight;  // C x D
  std::vector<double> grad_bias;    // C
};

struct ProbeEval {
  double accuracy = 0;
  double loss = 0;
};

namespace detail {

inline constexpr std::size_t kGradChunkRows = 64;

// Accumulates loss and (p - onehot) x^T for rows [begin, end) into the outputs.
inline void accumulate_rows(std::span<const double> weight, std::span<const double> bias, const Batch& x,
                            std::span<const std::uint32_t> labels, std::size_t begin, std::size_t end,
                            double& loss_sum, std::vector<double>& gw, std::vector<double>& gb) {
  const std::size_t c_count = bias.size(), d = x.cols;
  std::vector<double> z(c_count);
  for (std::size_t i = begin; i < end; ++i) {
    auto xi = x.row(i);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < c_count; ++c) {
      double s = bias[c];
      const double* w = weight.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * xi[j];
      z[c] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0;
    for (std::size_t c = 0; c < c_count; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    const auto y = labels[i];
    loss_sum += lse - z[y];
    for (std::size_t c = 0; c < c_count; ++c) {
      const double delta = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
      gb[c] += delta;
      double* g = gw.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += delta * xi[j];
    }
  }
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorKind::numeric, std::string("non-finite value in ") + what);
}

inline Batch to_batch(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  Batch b(rows.size(), m.n_dims);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    auto dst = b.row(i);
    for (std::size_t j = 0; j < m.n_dims; ++j) dst[j] = src[j];
  }
  return b;
}

}  // namespace detail

// Mean cross-entropy of softmax(W x + b) and its exact gradient. Rows are
// reduced in fixed 64-row chunks summed in order, so the result does not
// depend on `threads`.
inline LossAndGrad linear_loss_and_grad(std::span<const double> weight, std::span<const double> bias,
                                        const Batch& x, std::span<const std::uint32_t> labels,
                                        std::size_t threads = 1) {
  const std::size_t c_count = bias.size();
  if (c_count == 0 || weight.size() != c_count * x.cols) fail(ErrorKind::shape, "weight shape does not match batch");
  if (labels.size() != x.rows) fail(ErrorKind::shape, "label count does not match batch rows");
  if (x.rows == 0) fail(ErrorKind::empty, "loss over an empty batch");
  for (auto y : labels)
    if (y >= c_count) fail(ErrorKind::validation, "label outside the head's class range");
  detail::require_finite(x.values, "batch");
  detail::require_finite(weight, "weight");
  detail::require_finite(bias, "bias");

  const std::size_t chunks = (x.rows + detail::kGradChunkRows - 1) / detail::kGradChunkRows;
  struct Partial {
    double loss = 0;
    std::vector<double> gw, gb;
  };
  std::vector<Partial> partials(chunks);
  parallel_for(chunks, threads, [&](std::size_t k) {
    auto& p = partials[k];
    p.gw.assign(weight.size(), 0.0);
    p.gb.assign(c_count, 0.0);
    const std::size_t begin = k * detail::kGradChunkRows;
    const std::size_t end = std::min(x.rows, begin + detail::kGradChunkRows);
    detail::accumulate_rows(weight, bias, x, labels, begin, end, p.loss, p.gw, p.gb);
  });

  LossAndGrad out{0, std::vector<double>(weight.size(), 0.0), std::vector<double>(c_count, 0.0)};
  for (const auto& p : partials) {
    out.loss += p.loss;
    for (std::size_t i = 0; i < out.grad_weight.size(); ++i) out.grad_weight[i] += p.gw[i];
    for (std::size_t c = 0; c < c_count; ++c) out.grad_bias[c] += p.gb[c];
  }
  const double inv = 1.0 / double(x.rows);
  out.loss *= inv;
  for (auto& g : out.grad_weight) g *= inv;
  for (auto& g : out.grad_bias) g *= inv;
  return out;
}

// Loss/gradient of the whole head; BN (if present) runs in `mode` without
// mutating the head.
inline LossAndGrad probe_loss_and_grad(const ProbeHead& head, const Batch& batch, std::span<const std::uint32_t> labels,
                                       BnMode mode = BnMode::eval, std::size_t threads = 1) {
  if (batch.cols != head.n_dims) fail(ErrorKind::shape, "batch dims do not match the probe head");
  detail::require_finite(batch.values, "batch");
  if (head.bn) return linear_loss_and_grad(head.weight, head.bias, batchnorm_forward(*head.bn, batch, mode), labels, threads);
  return linear_loss_and_grad(head.weight, head.bias, batch, labels, threads);
}

// Logits of every row in eval mode, argmax with lowest-index tie-break.
inline std::vector<std::uint32_t> predict_probe(const ProbeHead& head, const FeatureMatrix& data) {
  head.validate();
  if (data.n_dims != head.n_dims) fail(ErrorKind::shape, "feature dims do not match the probe head");
  std::vector<std::size_t> rows(data.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Batch x = detail::to_batch(data, rows);
  if (head.bn) x = batchnorm_forward(*head.bn, x, BnMode::eval);
  std::vector<std::uint32_t> out(data.n_rows);
  std::vector<double> z(head.n_classes);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    auto xi = x.row(i);
    for (std::size_t c = 0; c < head.n_classes; ++c) {
      double s = head.bias[c];
      for (std::size_t j = 0; j < head.n_dims; ++j) s += head.weight[c * head.n_dims + j] * xi[j];
      z[c] = s;
    }
    out[i] = static_cast<std::uint32_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

inline ProbeEval evaluate_probe(const ProbeHead& head, const FeatureMatrix& data) {
  data.require_labels("probe evaluation");
  head.validate();
  if (data.n_dims != head.n_dims) fail(ErrorKind::shape, "feature dims do not match the probe head");
  if (data.n_classes > head.n_classes) fail(ErrorKind::validation, "data has more classes than the probe head");

  std::vector<std::size_t> rows(data.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Batch x = detail::to_batch(data, rows);
  detail::require_finite(x.values, "features");
  if (head.bn) x = batchnorm_forward(*head.bn, x, BnMode::eval);

  double loss = 0;
  std::size_t hits = 0;
  std::vector<double> z(head.n_classes);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    auto xi = x.row(i);
    for (std::size_t c = 0; c < head.n_classes; ++c) {
      double s = head.bias[c];
      for (std::size_t j = 0; j < head.n_dims; ++j) s += head.weight[c * head.n_dims + j] * xi[j];
      z[c] = s;
    }
    const auto best = std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double v : z) sum += std::exp(v - *best);
    loss += *best + std::log(sum) - z[data.label(i)];
    hits += static_cast<std::size_t>(best - z.begin()) == data.label(i);
  }
  return {double(hits) / double(data.n_rows), loss / double(data.n_rows)};
}

struct TrainOptions {
  std::size_t threads = 1;
};

inline ProbeRun train_probe(const FeatureMatrix& train, const FeatureMatrix& val, const ProbeConfig& cfg,
                            const TrainOptions& opts = {}) {
  cfg.validate();
  train.validate();
  val.validate();
  train.require_labels("probe training");
  val.require_labels("probe validation");
  if (train.n_dims != val.n_dims) fail(ErrorKind::shape, "train and val feature dims differ");
  if (train.n_classes != val.n_classes)
    fail(ErrorKind::validation, "train has " + std::to_string(train.n_classes) + " classes, val has " +
                                    std::to_string(val.n_classes));

  const std::size_t n = train.n_rows, d = train.n_dims, c_count = train.n_classes;
  ProbeRun run{ProbeHead::zeros(c_count, d), {}};
  auto& head = run.head;
  auto& hist = run.history;
  if (cfg.use_bn) head.bn = BatchNormState(d, cfg.bn_epsilon, cfg.bn_momentum);

  const std::size_t batch = std::min(cfg.batch_size, n);
  hist.steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = cfg.epochs * hist.steps_per_epoch;
  const auto schedule = cfg.schedule(hist.steps_per_epoch);
  hist.lr_trace.reserve(total_steps);

  OptimizerState opt_state;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint32_t> batch_labels;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      Batch x = detail::to_batch(train, rows);
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = train.label(rows[i]);

      if (head.bn) {
        if (x.rows >= 2) {
          auto bn = apply_batchnorm(*head.bn, x, BnMode::train);
          x = std::move(bn.output);
          head.bn = std::move(bn.state);
        } else {
          x = batchnorm_forward(*head.bn, x, BnMode::eval);
          ++hist.bn_skipped_batches;
        }
      }

      const auto lg = linear_loss_and_grad(head.weight, head.bias, x, batch_labels, opts.threads);
      const double lr = lr_at(schedule, step, total_steps);
      hist.lr_trace.push_back(lr);
      const ParamGroup groups[] = {{head.weight, lg.grad_weight, true}, {head.bias, lg.grad_bias, false}};
      optimizer_step(cfg.optimizer, opt_state, groups, lr);
      epoch_loss += lg.loss * double(x.rows);
      ++step;
    }
    hist.train_loss.push_back(epoch_loss / double(n));
    const auto ev = evaluate_probe(head, val);
    hist.val_loss.push_back(ev.loss);
    hist.val_accuracy.push_back(ev.accuracy);
  }
  return run;
}

// ---------------------------------------------------------------------------
// JSON for ProbeConfig. Keys follow the LP-settings table rows.

inline nlohmann::json to_json(const ProbeConfig& c) {
  return {
      {"name", c.label},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"optimizer", to_string(c.optimizer.kind)},
      {"lr", c.lr},
      {"momentum", c.optimizer.momentum},
      {"betas", {c.optimizer.beta1, c.optimizer.beta2}},
      {"weight_decay", c.optimizer.weight_decay},
      {"lr_decay", "cosine"},
      {"warmup_epochs", c.warmup_epochs},
      {"warmup_start_lr", c.warmup_start_lr},
      {"min_lr", c.min_lr},
      {"bn", c.use_bn},
      {"bn_epsilon", c.bn_epsilon},
      {"bn_momentum", c.bn_momentum},
      {"concat_last_layers", c.concat_last_layers},
      {"patch_token", c.patch_token},
      {"seed", c.seed},
  };
}

// Missing keys keep the values already in `base`; unknown keys are rejected.
inline ProbeConfig probe_config_from_json(const nlohmann::json& j, ProbeConfig base = {}) {
  if (!j.is_object()) fail(ErrorKind::format, "probe config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "name") base.label = value.get<std::string>();
      else if (key == "epochs") base.epochs = value.get<std::size_t>();
      else if (key == "batch_size") base.batch_size = value.get<std::size_t>();
      else if (key == "optimizer") base.optimizer.kind = parse_optimizer(value.get<std::string>());
      else if (key == "lr") base.lr = value.get<double>();
      else if (key == "momentum") base.optimizer.momentum = value.get<double>();
      else if (key == "betas") {
        const auto b = value.get<std::vector<double>>();
        if (b.size() != 2) fail(ErrorKind::format, "betas must have two entries");
        base.optimizer.beta1 = b[0];
        base.optimizer.beta2 = b[1];
      } else if (key == "weight_decay") base.optimizer.weight_decay = value.get<double>();
      else if (key == "lr_decay") {
        if (value.get<std::string>() != "cosine") fail(ErrorKind::config, "only cosine lr_decay is supported");
      } else if (key == "warmup_epochs") base.warmup_epochs = value.get<std::size_t>();
      else if (key == "warmup_start_lr") base.warmup_start_lr = value.get<double>();
      else if (key == "min_lr") base.min_lr = value.get<double>();
      else if (key == "bn") base.use_bn = value.get<bool>();
      else if (key == "bn_epsilon") base.bn_epsilon = value.get<double>();
      else if (key == "bn_momentum") base.bn_momentum = value.get<double>();
      else if (key == "concat_last_layers") base.concat_last_layers = value.get<std::size_t>();
      else if (key == "patch_token") base.patch_token = value.get<bool>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else fail(ErrorKind::config, "unknown probe config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("malformed probe config: ") + e.what());
  }
  base.validate();
  return base;
}

inline nlohmann::json to_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},         {"val_loss", h.val_loss},
          {"val_accuracy", h.val_accuracy},     {"lr_trace", h.lr_trace},
          {"steps_per_epoch", h.steps_per_epoch}, {"bn_skipped_batches", h.bn_skipped_batches}};
}

// ---------------------------------------------------------------------------
// Head binary format (little-endian, same conventions as SSLF):
//   0..3 magic "SSLH"  4..7 version (u32) = 1  8..15 n_classes (u64)  16..23 n_dims (u64)
//   24 dtype (2 = f64)  25 bn flag  26 bn seeded flag  27..31 reserved zero
//   weight C*D f64, bias C f64; if bn: epsilon f64, momentum f64, mean D f64, var D f64

inline constexpr char kHeadMagic[4] = {'S', 'S', 'L', 'H'};
inline constexpr std::uint8_t kDtypeFloat64 = 2;

inline std::vector<std::uint8_t> encode_head(const ProbeHead& h) {
  h.validate();
  detail::ByteWriter w;
  w.raw({kHeadMagic, 4});
  w.u32(1);
  w.u64(h.n_classes);
  w.u64(h.n_dims);
  w.u8(kDtypeFloat64);
  w.u8(h.bn ? 1 : 0);
  w.u8(h.bn && h.bn->seeded ? 1 : 0);
  w.zeros(5);
  for (double v : h.weight) w.f64(v);
  for (double v : h.bias) w.f64(v);
  if (h.bn) {
    w.f64(h.bn->epsilon);
    w.f64(h.bn->momentum);
    for (double v : h.bn->running_mean) w.f64(v);
    for (double v : h.bn->running_var) w.f64(v);
  }
  return w.bytes();
}

inline ProbeHead decode_head(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != std::string_view(kHeadMagic, 4)) fail(ErrorKind::format, "bad magic (not a probe head file)");
  if (r.u32() != 1) fail(ErrorKind::format, "unsupported head version");
  ProbeHead h;
  h.n_classes = r.u64();
  h.n_dims = r.u64();
  if (r.u8() != kDtypeFloat64) fail(ErrorKind::format, "unsupported head dtype");
  const bool has_bn = r.u8() != 0;
  const bool seeded = r.u8() != 0;
  r.skip(5);
  const std::size_t cap = r.remaining() / 8;
  if (h.n_classes == 0 || h.n_dims == 0 || h.n_classes > cap || h.n_dims > cap ||
      h.n_classes * h.n_dims + h.n_classes + (has_bn ? 2 + 2 * h.n_dims : 0) != cap || r.remaining() % 8 != 0)
    fail(ErrorKind::corruption, "head payload length does not match header");
  h.weight.resize(h.n_classes * h.n_dims);
  h.bias.resize(h.n_classes);
  for (auto& v : h.weight) v = r.f64();
  for (auto& v : h.bias) v = r.f64();
  if (has_bn) {
    BatchNormState bn;
    bn.epsilon = r.f64();
    bn.momentum = r.f64();
    bn.running_mean.resize(h.n_dims);
    bn.running_var.resize(h.n_dims);
    for (auto& v : bn.running_mean) v = r.f64();
    for (auto& v : bn.running_var) v = r.f64();
    bn.seeded = seeded;
    h.bn = std::move(bn);
  }
  h.validate();
  return h;
}

inline void write_head(const ProbeHead& h, const std::string& path) { detail::write_file_bytes(path, encode_head(h)); }

inline ProbeHead load_head(const std::string& path) { return decode_head(detail::read_file_bytes(path)); }

}  // namespace sslprobe
