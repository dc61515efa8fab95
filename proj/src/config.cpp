// Copyright 2026 The MCF Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mcf {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename N>
N parse_number(std::string_view text, const std::string& field) {
  N v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(field + ": cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

bool parse_bool(std::string_view text, const std::string& field) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(field + ": expected true or false, got '" + std::string(text) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename N, typename Access>
Field number(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](ExperimentConfig& c, std::string_view v, const std::string& name) {
            access(c) = parse_number<N>(v, name);
          },
          [access](const ExperimentConfig& c) {
            const N v = access(const_cast<ExperimentConfig&>(c));
            if constexpr (std::is_floating_point_v<N>) {
              return format_double(v);
            } else {
              return std::to_string(v);
            }
          }};
}

template <typename Access>
Field boolean(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](ExperimentConfig& c, std::string_view v, const std::string& name) {
            access(c) = parse_bool(v, name);
          },
          [access](const ExperimentConfig& c) {
            return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
void vit_fields(std::vector<Field>& out, const std::string& section, Access vit) {
  out.push_back(number<std::size_t>(section, "image_size", [vit](ExperimentConfig& c) -> auto& { return vit(c).image_size; }));
  out.push_back(number<std::size_t>(section, "patch_size", [vit](ExperimentConfig& c) -> auto& { return vit(c).patch_size; }));
  out.push_back(number<std::size_t>(section, "channels", [vit](ExperimentConfig& c) -> auto& { return vit(c).channels; }));
  out.push_back(number<std::size_t>(section, "depth", [vit](ExperimentConfig& c) -> auto& { return vit(c).depth; }));
  out.push_back(number<std::size_t>(section, "dim", [vit](ExperimentConfig& c) -> auto& { return vit(c).dim; }));
  out.push_back(number<std::size_t>(section, "heads", [vit](ExperimentConfig& c) -> auto& { return vit(c).heads; }));
  out.push_back(number<double>(section, "mlp_ratio", [vit](ExperimentConfig& c) -> auto& { return vit(c).mlp_ratio; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    using C = ExperimentConfig;
    f.push_back(number<std::size_t>("train", "micro_batch", [](C& c) -> auto& { return c.train.micro_batch; }));
    f.push_back(number<std::size_t>("train", "accumulation_steps", [](C& c) -> auto& { return c.train.accumulation_steps; }));
    f.push_back(number<std::size_t>("train", "epochs", [](C& c) -> auto& { return c.train.epochs; }));
    f.push_back(number<std::size_t>("train", "warmup_epochs", [](C& c) -> auto& { return c.train.warmup_epochs; }));
    f.push_back(number<double>("train", "peak_lr", [](C& c) -> auto& { return c.train.peak_lr; }));
    f.push_back(number<double>("train", "weight_decay", [](C& c) -> auto& { return c.train.weight_decay; }));
    f.push_back(number<double>("train", "beta1", [](C& c) -> auto& { return c.train.beta1; }));
    f.push_back(number<double>("train", "beta2", [](C& c) -> auto& { return c.train.beta2; }));
    f.push_back(number<double>("train", "eps", [](C& c) -> auto& { return c.train.eps; }));
    f.push_back(number<std::uint64_t>("train", "seed", [](C& c) -> auto& { return c.train.seed; }));
    f.push_back(number<std::size_t>("train", "max_steps", [](C& c) -> auto& { return c.train.max_steps; }));

    f.push_back(boolean("augment", "enabled", [](C& c) -> auto& { return c.train.augment.enabled; }));
    f.push_back(number<double>("augment", "flip", [](C& c) -> auto& { return c.train.augment.flip; }));
    f.push_back(number<double>("augment", "brightness", [](C& c) -> auto& { return c.train.augment.brightness; }));
    f.push_back(number<double>("augment", "contrast", [](C& c) -> auto& { return c.train.augment.contrast; }));
    f.push_back(number<double>("augment", "channel", [](C& c) -> auto& { return c.train.augment.channel; }));

    f.push_back({"model", "mode",
                 [](C& c, std::string_view v, const std::string&) {
                   try {
                     c.train.model.mode.variant = parse_loss_variant(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("model.mode: ") + e.what());
                   }
                 },
                 [](const C& c) { return std::string(to_string(c.train.model.mode.variant)); }});
    f.push_back(number<double>("model", "mim_weight", [](C& c) -> auto& { return c.train.model.mode.mim_weight; }));
    f.push_back(number<double>("model", "con_weight", [](C& c) -> auto& { return c.train.model.mode.con_weight; }));
    f.push_back(number<double>("model", "mask_ratio", [](C& c) -> auto& { return c.train.model.mask_ratio; }));
    f.push_back({"model", "keep_count_override",
                 [](C& c, std::string_view v, const std::string& name) {
                   if (v == "none") {
                     c.train.model.keep_count_override.reset();
                   } else {
                     c.train.model.keep_count_override = parse_number<std::size_t>(v, name);
                   }
                 },
                 [](const C& c) {
                   const auto& k = c.train.model.keep_count_override;
                   return k ? std::to_string(*k) : std::string("none");
                 }});
    f.push_back(number<double>("model", "temperature", [](C& c) -> auto& { return c.train.model.temperature; }));
    f.push_back(number<double>("model", "momentum", [](C& c) -> auto& { return c.train.model.momentum; }));
    f.push_back(number<std::size_t>("model", "head_hidden", [](C& c) -> auto& { return c.train.model.head_hidden; }));
    f.push_back(number<std::size_t>("model", "head_dim", [](C& c) -> auto& { return c.train.model.head_dim; }));
    f.push_back(boolean("model", "mim_masked_only", [](C& c) -> auto& { return c.train.model.mim_masked_only; }));

    vit_fields(f, "encoder", [](C& c) -> auto& { return c.train.model.encoder; });
    vit_fields(f, "m1", [](C& c) -> auto& { return c.train.model.m1; });

    f.push_back(number<std::size_t>("decoder", "depth", [](C& c) -> auto& { return c.train.model.decoder.depth; }));
    f.push_back(number<std::size_t>("decoder", "dim", [](C& c) -> auto& { return c.train.model.decoder.dim; }));
    f.push_back(number<std::size_t>("decoder", "heads", [](C& c) -> auto& { return c.train.model.decoder.heads; }));
    f.push_back(number<double>("decoder", "mlp_ratio", [](C& c) -> auto& { return c.train.model.decoder.mlp_ratio; }));

    f.push_back(number<std::size_t>("data", "identities", [](C& c) -> auto& { return c.data.identities; }));
    f.push_back(number<std::size_t>("data", "per_identity", [](C& c) -> auto& { return c.data.per_identity; }));
    f.push_back(number<std::size_t>("data", "render_size", [](C& c) -> auto& { return c.data.render_size; }));
    f.push_back(number<std::uint64_t>("data", "seed", [](C& c) -> auto& { return c.data.seed; }));
    f.push_back(number<double>("data", "nuisance", [](C& c) -> auto& { return c.data.nuisance; }));
    f.push_back(number<std::size_t>("data", "image_size", [](C& c) -> auto& { return c.image_size; }));
    f.push_back(number<double>("data", "test_fraction", [](C& c) -> auto& { return c.test_fraction; }));

    f.push_back(number<std::size_t>("m1_pretrain", "steps", [](C& c) -> auto& { return c.m1_pretrain.steps; }));
    f.push_back(number<std::size_t>("m1_pretrain", "batch", [](C& c) -> auto& { return c.m1_pretrain.batch; }));
    f.push_back(number<double>("m1_pretrain", "peak_lr", [](C& c) -> auto& { return c.m1_pretrain.peak_lr; }));
    f.push_back(number<std::size_t>("m1_pretrain", "warmup_steps", [](C& c) -> auto& { return c.m1_pretrain.warmup_steps; }));
    f.push_back(number<double>("m1_pretrain", "mask_ratio", [](C& c) -> auto& { return c.m1_pretrain.mask_ratio; }));
    f.push_back(number<double>("m1_pretrain", "temperature", [](C& c) -> auto& { return c.m1_pretrain.temperature; }));
    f.push_back(number<double>("m1_pretrain", "momentum", [](C& c) -> auto& { return c.m1_pretrain.momentum; }));
    f.push_back(number<std::size_t>("m1_pretrain", "head_hidden", [](C& c) -> auto& { return c.m1_pretrain.head_hidden; }));
    f.push_back(number<std::size_t>("m1_pretrain", "head_dim", [](C& c) -> auto& { return c.m1_pretrain.head_dim; }));

    f.push_back(number<std::size_t>("probe", "steps", [](C& c) -> auto& { return c.probe.steps; }));
    f.push_back(number<double>("probe", "lr", [](C& c) -> auto& { return c.probe.lr; }));
    f.push_back(number<double>("probe", "weight_decay", [](C& c) -> auto& { return c.probe.weight_decay; }));
    f.push_back(number<std::uint64_t>("probe", "seed", [](C& c) -> auto& { return c.probe.seed; }));

    f.push_back(number<std::size_t>("segprobe", "steps", [](C& c) -> auto& { return c.segprobe.steps; }));
    f.push_back(number<std::size_t>("segprobe", "batch", [](C& c) -> auto& { return c.segprobe.batch; }));
    f.push_back(number<std::size_t>("segprobe", "width", [](C& c) -> auto& { return c.segprobe.width; }));
    f.push_back(number<std::size_t>("segprobe", "hidden", [](C& c) -> auto& { return c.segprobe.hidden; }));
    f.push_back(number<double>("segprobe", "lr", [](C& c) -> auto& { return c.segprobe.lr; }));
    f.push_back(number<std::uint64_t>("segprobe", "seed", [](C& c) -> auto& { return c.segprobe.seed; }));
    f.push_back(number<std::size_t>("segprobe", "train_images", [](C& c) -> auto& { return c.segprobe_train_images; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, std::string_view section, std::string_view key, std::string_view value) {
  const auto* f = find_field(section, key);
  const std::string name = std::string(section) + "." + std::string(key);
  if (!f) throw ConfigError("unknown key '" + name + "'");
  f->set(cfg, value, name);
}

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "assignment before any [section]");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

}  // namespace mcf
