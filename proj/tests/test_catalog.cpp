#include <gtest/gtest.h>

#include <algorithm>

#include "sslprobe/catalog.hpp"

using namespace sslprobe;

TEST(Catalog, LinearProbeRecords) {
  struct Expect {
    const char* name;
    std::size_t epochs, batch;
    OptimizerKind opt;
    double lr;
    std::size_t warmup;
    bool bn;
    std::size_t concat;
    bool patch;
  };
  const Expect table[] = {
      {"dino_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 4, false},
      {"ibot_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 4, false},
      {"mugs_vits16", 100, 1024, OptimizerKind::sgd_momentum, 0.04, 0, false, 4, false},
      {"dino_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 1, true},
      {"ibot_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.001, 0, false, 1, true},
      {"mugs_vitb16", 100, 1024, OptimizerKind::sgd_momentum, 0.008, 0, false, 1, true},
      {"mocov3", 90, 4096, OptimizerKind::sgd_momentum, 3.0, 0, false, 1, false},
      {"mae", 90, 16384, OptimizerKind::lars, 0.1, 10, true, 1, false},
      {"msn", 100, 16384, OptimizerKind::sgd_momentum, 6.4, 0, true, 1, false},
  };
  ASSERT_EQ(lp_settings().size(), std::size(table));
  for (const auto& e : table) {
    const auto c = named_setting(e.name);
    EXPECT_EQ(c.epochs, e.epochs) << e.name;
    EXPECT_EQ(c.batch_size, e.batch) << e.name;
    EXPECT_EQ(c.optimizer.kind, e.opt) << e.name;
    EXPECT_EQ(c.lr, e.lr) << e.name;
    EXPECT_EQ(c.warmup_epochs, e.warmup) << e.name;
    EXPECT_EQ(c.use_bn, e.bn) << e.name;
    EXPECT_EQ(c.concat_last_layers, e.concat) << e.name;
    EXPECT_EQ(c.patch_token, e.patch) << e.name;
    EXPECT_EQ(c.optimizer.weight_decay, 0.0) << e.name;
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(Catalog, AliasesAndBnVariants) {
  const auto dino = named_setting("dino");
  EXPECT_EQ(dino.lr, 0.001);
  EXPECT_EQ(dino.label, "dino");
  const auto dino_bn = named_setting("dino+bn");
  EXPECT_TRUE(dino_bn.use_bn);
  EXPECT_EQ(dino_bn.label, "dino+bn");
  EXPECT_EQ(dino_bn.lr, dino.lr);
  EXPECT_TRUE(named_setting("mocov3+bn").use_bn);
}

TEST(Catalog, UnknownNameListsChoices) {
  try {
    named_setting("simclr");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::lookup);
    EXPECT_NE(std::string(e.what()).find("mocov3"), std::string::npos);
  }
}

TEST(Catalog, SettingNamesAreUnique) {
  auto names = lp_setting_names();
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
  for (const auto& n : names) EXPECT_NO_THROW(named_setting(n)) << n;
}

TEST(Catalog, TransferRecords) {
  const auto& dino_cifar = tl_setting("tl/dino/cifar-100");
  EXPECT_EQ(dino_cifar.epochs, 1000u);
  EXPECT_EQ(dino_cifar.batch_size, 768u);
  EXPECT_EQ(dino_cifar.optimizer, "AdamW");
  ASSERT_TRUE(dino_cifar.lr.has_value());
  EXPECT_EQ(*dino_cifar.lr, 5e-6);
  EXPECT_EQ(dino_cifar.mixup, 0.8);

  const auto& deit = tl_setting("tl/deit/cars");
  EXPECT_EQ(deit.optimizer, "SGD");
  EXPECT_EQ(deit.drop_path, 0.0);  // disabled component

  const auto& mugs = tl_setting("tl/mugs/cars");
  EXPECT_FALSE(mugs.lr.has_value());  // not published
  EXPECT_FALSE(mugs.erasing.has_value());
  EXPECT_EQ(*tl_setting("tl/mugs/inat19").lr, 7.5e-5);

  const auto& shrt = tl_setting("tl/short/all");
  EXPECT_EQ(shrt.epochs, 50u);
  EXPECT_EQ(shrt.batch_size, 64u);
  EXPECT_EQ(shrt.mixup, 0.0);
  EXPECT_EQ(shrt.lr_decay, "step");
}

TEST(Catalog, MocoCarsFallsBackToFlowers) {
  const auto& cars = tl_setting("tl/mocov3/cars");
  EXPECT_EQ(cars.name, "tl/mocov3/flowers");
  EXPECT_EQ(cars.epochs, 100u);
  EXPECT_THROW(tl_setting("tl/mocov3/inat19"), Error);
}

TEST(Catalog, TransferJsonUsesNullForUnknown) {
  const auto j = to_json(tl_setting("tl/mugs/flowers"));
  EXPECT_TRUE(j["lr"].is_null());
  EXPECT_TRUE(j["erasing"].is_null());
  EXPECT_EQ(j["epochs"], 1000);
}
