// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "mcf/config.hpp"
#include "test_util.hpp"

namespace mcf {
namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DumpParsesBackToTheSameDump) {
  const auto text = to_config_text(ExperimentConfig::toy());
  EXPECT_EQ(to_config_text(parse_config(text)), text);
}

TEST(Config, EveryKeyAppearsInTheDump) {
  const auto text = to_config_text(ExperimentConfig::toy());
  for (const auto& k : config_keys()) {
    const auto dot = k.find('.');
    EXPECT_NE(text.find("[" + k.substr(0, dot) + "]"), std::string::npos) << k;
    EXPECT_NE(text.find("\n" + k.substr(dot + 1) + " = "), std::string::npos) << k;
  }
}

TEST(Config, AssignmentsOverrideTheBase) {
  const auto cfg = parse_config(R"(
# comment line
[train]
peak_lr = 0.05   # trailing comment
seed = 42
[model]
mode = pixel_plus_feature
keep_count_override = 3
[augment]
enabled = true
)");
  EXPECT_DOUBLE_EQ(cfg.train.peak_lr, 0.05);
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_EQ(cfg.train.model.keep_count_override, std::optional<std::size_t>(3));
  EXPECT_TRUE(cfg.train.augment.enabled);
  const auto again = parse_config(to_config_text(cfg));
  EXPECT_EQ(to_config_text(again), to_config_text(cfg));
  EXPECT_NE(to_config_text(cfg).find("peak_lr = 0.05\n"), std::string::npos);
}

TEST(Config, OverrideCanBeCleared) {
  auto cfg = ExperimentConfig::toy();
  set_config_value(cfg, "model", "keep_count_override", "5");
  set_config_value(cfg, "model", "keep_count_override", "none");
  EXPECT_FALSE(cfg.train.model.keep_count_override.has_value());
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(error_of("[train]\n\nbogus = 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("[train]\nbogus = 1\n").find("train.bogus"), std::string::npos);
  EXPECT_NE(error_of("peak_lr = 1\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("[train\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("[train]\npeak_lr\n").find("line 2"), std::string::npos);
  const auto bad_number = error_of("[train]\npeak_lr = fast\n");
  EXPECT_NE(bad_number.find("line 2"), std::string::npos);
  EXPECT_NE(bad_number.find("train.peak_lr"), std::string::npos);
  EXPECT_NE(error_of("[augment]\nenabled = maybe\n").find("true or false"), std::string::npos);
  EXPECT_NE(error_of("[model]\nmode = nonsense\n").find("model.mode"), std::string::npos);
}

TEST(Config, InvalidResultIsRejected) {
  EXPECT_FALSE(error_of("[model]\nmask_ratio = 1.5\n").empty());
  EXPECT_FALSE(error_of("[encoder]\npatch_size = 5\n").empty());
}

TEST(Config, LoadsFromFile) {
  test::TempDir dir("config");
  std::ofstream(dir / "run.cfg") << "[train]\nepochs = 7\n";
  EXPECT_EQ(load_config(dir / "run.cfg").train.epochs, 7u);
  EXPECT_THROW(load_config(dir / "missing.cfg"), ConfigError);
  std::ofstream(dir / "bad.cfg") << "[train]\nepochs = x\n";
  try {
    load_config(dir / "bad.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg"), std::string::npos);
  }
}

}  // namespace
}  // namespace mcf
