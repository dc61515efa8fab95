// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration files: `key = value` lines grouped under
// `[section]` headers, `#` comments. Every field of the experiment is
// addressable and unknown keys are rejected, so a config file is a complete
// record of a run.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcf/experiment.hpp"

namespace mcf {

/// Parse or validation failure; the message names the line or field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Applies the assignments in `text` on top of `base` and validates the result.
ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base = ExperimentConfig::toy());
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ExperimentConfig& base = ExperimentConfig::toy());

/// Full dump in the same format; parse_config(to_config_text(c)) == c.
std::string to_config_text(const ExperimentConfig& cfg);

/// Sets one `section.key` field from its text form.
void set_config_value(ExperimentConfig& cfg, std::string_view section, std::string_view key, std::string_view value);

/// Every addressable `section.key`, in dump order.
std::vector<std::string> config_keys();

}  // namespace mcf
