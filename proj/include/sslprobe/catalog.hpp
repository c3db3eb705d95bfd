#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslprobe/error.hpp"
#include "sslprobe/probe.hpp"

namespace sslprobe {

// Built-in linear-probe settings as published by each SSL method. All use
// cosine decay and no weight decay. Momentum (0.9) is the methods' code default.
namespace detail {

inline ProbeConfig lp_record(std::string name, std::size_t epochs, std::size_t batch, OptimizerKind opt, double lr,
                             std::size_t warmup, bool bn, std::size_t concat, bool patch_token) {
  ProbeConfig c;
  c.label = std::move(name);
  c.epochs = epochs;
  c.batch_size = batch;
  c.optimizer.kind = opt;
  c.optimizer.momentum = 0.9;
  c.optimizer.weight_decay = 0.0;
  c.lr = lr;
  c.warmup_epochs = warmup;
  c.use_bn = bn;
  c.concat_last_layers = concat;
  c.patch_token = patch_token;
  return c;
}

}  // namespace detail

inline const std::vector<ProbeConfig>& lp_settings() {
  using detail::lp_record;
  static const std::vector<ProbeConfig> settings = {
      lp_record("dino_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 4, false),
      lp_record("ibot_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 4, false),
      lp_record("mugs_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.04, 0, false, 4, false),
      lp_record("dino_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 1, true),
      lp_record("ibot_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 1, true),
      lp_record("mugs_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.008, 0, false, 1, true),
      lp_record("mocov3", 90, 4096, OptimizerKind::sgd_momentum, 3.0, 0, false, 1, false),
      lp_record("mae", 90, 16384, OptimizerKind::lars, 0.1, 10, true, 1, false),
      lp_record("msn", 100, 16384, OptimizerKind::sgd_momentum, 6.4, 0, true, 1, false),
  };
  return settings;
}

inline std::vector<std::pair<std::string, std::string>> lp_aliases() {
  return {{"dino", "dino_vits16"}, {"ibot", "ibot_vits16"}, {"mugs", "mugs_vits16"}};
}

inline std::vector<std::string> lp_setting_names() {
  std::vector<std::string> names;
  for (const auto& s : lp_settings()) {
    names.push_back(s.label);
    if (!s.use_bn) names.push_back(s.label + "+bn");
  }
  for (const auto& [alias, target] : lp_aliases()) {
    names.push_back(alias);
    names.push_back(alias + "+bn");
  }
  return names;
}

// "<name>+bn" returns the base record with BN enabled.
inline ProbeConfig named_setting(const std::string& requested) {
  std::string name = requested;
  bool with_bn = false;
  if (name.size() > 3 && name.ends_with("+bn")) {
    name.resize(name.size() - 3);
    with_bn = true;
  }
  for (const auto& [alias, target] : lp_aliases())
    if (name == alias) name = target;

  for (const auto& s : lp_settings()) {
    if (s.label != name) continue;
    ProbeConfig c = s;
    if (with_bn) c.use_bn = true;
    c.label = requested;
    return c;
  }
  std::string available;
  for (const auto& n : lp_setting_names()) available += (available.empty() ? "" : ", ") + n;
  fail(ErrorKind::lookup, "unknown setting '" + requested + "'; available: " + available);
}

// ---------------------------------------------------------------------------
// Transfer-learning settings. Data only: they label externally produced
// fine-tuning results. `std::nullopt` marks a value the source leaves unknown;
// a disabled component is stored as 0 / false.
struct TlSetting {
  std::string name;  // "tl/<method>/<dataset>"
  std::string method;
  std::string dataset;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  std::string optimizer;
  std::optional<double> lr;
  std::string lr_decay;
  std::size_t warmup_epochs = 0;
  double warmup_lr = 0;
  double weight_decay = 0;
  double label_smoothing = 0;
  double drop_path = 0;
  bool repeated_aug = false;
  std::string rand_aug;  // "9 / 0.5" or empty when off
  double mixup = 0;
  double cutmix = 0;
  std::optional<double> erasing;
};

namespace detail {

struct TlRow {
  const char* method;
  const char* dataset;
  std::size_t epochs, batch;
  const char* opt;
  double lr;  // < 0: unknown
  std::size_t warmup;
  double wd, drop_path, mixup, cutmix, erasing;  // erasing < 0: unknown
};

}  // namespace detail

inline const std::vector<TlSetting>& tl_settings() {
  static const std::vector<TlSetting> settings = [] {
    // Common to every non-Short record: cosine decay, warmup lr 1e-6,
    // label smoothing 0.1, repeated aug, RandAug 9 / 0.5.
    const detail::TlRow rows[] = {
        {"deit", "cifar-10", 1000, 768, "SGD", 1e-2, 5, 1e-4, 0, 0.8, 1, 0},
        {"deit", "cifar-100", 1000, 768, "SGD", 1e-2, 5, 1e-4, 0, 0.8, 1, 0},
        {"deit", "cars", 1000, 768, "SGD", 1e-2, 5, 1e-4, 0, 0.8, 1, 0},
        {"dino", "cifar-10", 1000, 768, "SGD", 5e-6, 5, 0.05, 0.1, 0.8, 1, 0},
        {"dino", "cifar-100", 1000, 768, "AdamW", 5e-6, 5, 0.05, 0.1, 0.8, 1, 0},
        {"dino", "inat18", 300, 1024, "AdamW", 5e-5, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"dino", "inat19", 300, 1024, "AdamW", 5e-5, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"dino", "flowers", 1000, 768, "AdamW", 5e-6, 5, 0.05, 0.1, 0.8, 1, 0},
        {"dino", "cars", 1000, 768, "AdamW", 5e-6, 5, 0.05, 0.1, 0.8, 1, 0},
        {"mocov3", "imagenet", 150, 1024, "AdamW", 5e-4, 3, 0.05, 0.1, 0.8, 1, 0.25},
        {"mocov3", "cifar-10", 100, 1024, "AdamW", 3e-4, 3, 0.1, 0.1, 0.8, 1, 0},
        {"mocov3", "cifar-100", 100, 1024, "AdamW", 3e-4, 3, 0.1, 0.1, 0.5, 1, 0},
        {"mocov3", "flowers", 100, 1024, "AdamW", 3e-4, 3, 0.1, 0.1, 0, 0, 0.25},
        {"mugs", "cifar-10", 1000, 768, "AdamW", -1, 5, 0.05, 0.1, 0.8, 1, -1},
        {"mugs", "cifar-100", 1000, 768, "AdamW", -1, 5, 0.05, 0.1, 0.8, 1, -1},
        {"mugs", "inat18", 360, 768, "AdamW", 3e-5, 5, 0.05, 0.1, 0.8, 1, -1},
        {"mugs", "inat19", 360, 768, "AdamW", 7.5e-5, 5, 0.05, 0.1, 0.8, 1, -1},
        {"mugs", "flowers", 1000, 768, "AdamW", -1, 5, 0.05, 0.1, 0.8, 1, -1},
        {"mugs", "cars", 1000, 768, "AdamW", -1, 5, 0.05, 0.1, 0.8, 1, -1},
        {"ibot", "cifar-10", 1000, 768, "AdamW", 7.5e-6, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"ibot", "cifar-100", 1000, 768, "AdamW", 7.5e-6, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"ibot", "inat18", 360, 768, "AdamW", 5e-5, 5, 0.05, 0.1, 0.8, 1, 0.1},
        {"ibot", "inat19", 360, 768, "AdamW", 2.5e-5, 5, 0.05, 0.1, 0.8, 1, 0.1},
        {"ibot", "flowers", 1000, 768, "AdamW", 7.5e-6, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"ibot", "cars", 1000, 768, "AdamW", 7.5e-6, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"msn", "cifar-10", 1000, 768, "SGD", 7.5e-5, 5, 0.05, 0.1, 0.8, 1, 0},
        {"msn", "cifar-100", 1000, 768, "AdamW", 7.5e-5, 5, 0.05, 0.1, 0.8, 1, 0},
        {"msn", "inat18", 300, 1024, "AdamW", 1e-4, 5, 0.05, 0.1, 0.8, 1, 0.25},
        {"msn", "inat19", 300, 1024, "AdamW", 1e-4, 5, 0.05, 0.1, 0.8, 1, 0.25},
    };
    std::vector<TlSetting> out;
    for (const auto& r : rows) {
      TlSetting s;
      s.method = r.method;
      s.dataset = r.dataset;
      s.name = "tl/" + s.method + "/" + s.dataset;
      s.epochs = r.epochs;
      s.batch_size = r.batch;
      s.optimizer = r.opt;
      if (r.lr >= 0) s.lr = r.lr;
      s.lr_decay = "cosine";
      s.warmup_epochs = r.warmup;
      s.warmup_lr = 1e-6;
      s.weight_decay = r.wd;
      s.label_smoothing = 0.1;
      s.drop_path = r.drop_path;
      s.repeated_aug = true;
      s.rand_aug = "9 / 0.5";
      s.mixup = r.mixup;
      s.cutmix = r.cutmix;
      if (r.erasing >= 0) s.erasing = r.erasing;
      out.push_back(std::move(s));
    }
    // fast-short-weak: no regularization stack, short schedule.
    TlSetting shrt;
    shrt.name = "tl/short/all";
    shrt.method = "short";
    shrt.dataset = "all";
    shrt.epochs = 50;
    shrt.batch_size = 64;
    shrt.optimizer = "Adam";
    shrt.lr = 1e-4;
    shrt.lr_decay = "step";
    shrt.weight_decay = 1e-6;
    shrt.drop_path = 0.1;
    shrt.erasing = 0.0;
    out.push_back(std::move(shrt));
    return out;
  }();
  return settings;
}

inline const TlSetting& tl_setting(const std::string& name) {
  // Cars has no MoCo v3 record; the Flowers record stands in for it.
  const std::string key = name == "tl/mocov3/cars" ? "tl/mocov3/flowers" : name;
  for (const auto& s : tl_settings())
    if (s.name == key) return s;
  fail(ErrorKind::lookup, "unknown TL setting '" + name + "'");
}

inline nlohmann::json to_json(const TlSetting& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"name", s.name},
          {"method", s.method},
          {"dataset", s.dataset},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"optimizer", s.optimizer},
          {"lr", opt(s.lr)},
          {"lr_decay", s.lr_decay},
          {"warmup_epochs", s.warmup_epochs},
          {"warmup_lr", s.warmup_lr},
          {"weight_decay", s.weight_decay},
          {"label_smoothing", s.label_smoothing},
          {"drop_path", s.drop_path},
          {"repeated_aug", s.repeated_aug},
          {"rand_aug", s.rand_aug},
          {"mixup", s.mixup},
          {"cutmix", s.cutmix},
          {"erasing", opt(s.erasing)}};
}

}  // namespace sslprobe
