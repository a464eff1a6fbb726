// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "infomax3d/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace infomax3d {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw std::invalid_argument("config key '" + std::string(key) + "': cannot use '" + std::string(value) + "', expected " +
                              std::string(expected));
}

double to_double(std::string_view key, std::string_view s) {
  s        = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) bad_value(key, s, "a finite number");
  return v;
}

std::uint64_t to_u64(std::string_view key, std::string_view s) {
  s               = trim(s);
  std::uint64_t v = 0;
  auto [p, ec]    = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s, "a non-negative integer");
  return v;
}

std::size_t to_size(std::string_view key, std::string_view s) { return static_cast<std::size_t>(to_u64(key, s)); }

bool to_bool(std::string_view key, std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "true or false");
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += f(items[i]);
  }
  return out;
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view key, std::string_view s, Parse&& parse) {
  std::vector<T> out;
  for (auto item : split_list(s)) {
    try {
      out.push_back(parse(item));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + std::string(key) + "': " + e.what());
    }
  }
  return out;
}

struct Field {
  std::string                                                   key;
  std::function<std::string(const ModelConfig&)>                get;
  std::function<void(ModelConfig&, std::string_view, std::string_view)> set;
};

#define IMX_SIZE(KEY, EXPR)                                                                              \
  Field {                                                                                                \
    KEY, [](const ModelConfig& c) { return fmt(static_cast<std::size_t>(c.EXPR)); },                     \
        [](ModelConfig& c, std::string_view k, std::string_view v) { c.EXPR = static_cast<std::remove_reference_t<decltype(c.EXPR)>>(to_size(k, v)); }           \
  }
#define IMX_DOUBLE(KEY, EXPR)                                                                            \
  Field {                                                                                                \
    KEY, [](const ModelConfig& c) { return fmt(static_cast<double>(c.EXPR)); },                          \
        [](ModelConfig& c, std::string_view k, std::string_view v) { c.EXPR = to_double(k, v); }         \
  }
#define IMX_BOOL(KEY, EXPR)                                                                              \
  Field {                                                                                                \
    KEY, [](const ModelConfig& c) { return fmt(static_cast<bool>(c.EXPR)); },                            \
        [](ModelConfig& c, std::string_view k, std::string_view v) { c.EXPR = to_bool(k, v); }           \
  }

std::string fmt_aggs(const std::vector<nn::Aggregator>& a) {
  return join(a, [](nn::Aggregator x) { return std::string(nn::to_string(x)); });
}

std::vector<nn::Aggregator> parse_aggs(std::string_view k, std::string_view v) {
  return parse_list<nn::Aggregator>(k, v, [](std::string_view s) { return nn::parse_aggregator(s); });
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f = {
        IMX_SIZE("net2d.depth", net2d.depth),
        IMX_SIZE("net2d.d_h", net2d.d_h),
        IMX_SIZE("net2d.d_z", net2d.d_z),
        IMX_SIZE("net2d.message_mlp_layers", net2d.message_mlp_layers),
        IMX_SIZE("net2d.update_mlp_layers", net2d.update_mlp_layers),
        IMX_SIZE("net2d.readout_mlp_layers", net2d.readout_mlp_layers),
        IMX_DOUBLE("net2d.dropout", net2d.dropout),
        IMX_BOOL("net2d.batch_norm", net2d.batch_norm),
        IMX_DOUBLE("net2d.batchnorm_momentum", net2d.batchnorm_momentum),
        IMX_BOOL("net2d.residual", net2d.residual),
        IMX_SIZE("net2d.num_outputs", net2d.num_outputs),
        IMX_SIZE("net3d.depth", net3d.depth),
        IMX_SIZE("net3d.d_h", net3d.d_h),
        IMX_SIZE("net3d.d_d", net3d.d_d),
        IMX_SIZE("net3d.frequencies", net3d.frequencies),
        IMX_SIZE("net3d.d_z", net3d.d_z),
        IMX_SIZE("net3d.readout_mlp_layers", net3d.readout_mlp_layers),
        IMX_DOUBLE("net3d.dropout", net3d.dropout),
        IMX_BOOL("net3d.batch_norm", net3d.batch_norm),
        IMX_DOUBLE("net3d.batchnorm_momentum", net3d.batchnorm_momentum),
        IMX_DOUBLE("loss.tau", loss.tau),
        IMX_SIZE("loss.c", loss.c),
        IMX_BOOL("loss.include_positive", loss.include_positive),
        IMX_SIZE("train.batch_size", train.batch_size),
        IMX_SIZE("train.max_epochs", train.max_epochs),
        IMX_SIZE("train.max_steps", train.max_steps),
        IMX_DOUBLE("train.lr", train.lr),
        IMX_DOUBLE("train.weight_decay", train.weight_decay),
        IMX_DOUBLE("train.plateau_factor", train.plateau.factor),
        IMX_SIZE("train.plateau_patience", train.plateau.patience),
        IMX_SIZE("train.plateau_cooldown", train.plateau.cooldown),
        IMX_DOUBLE("train.node_drop", train.node_drop),
        IMX_BOOL("train.classification", train.classification),
        IMX_SIZE("train.head_hidden", train.head_hidden),
    };
    f.push_back({"net2d.aggregators", [](const ModelConfig& c) { return fmt_aggs(c.net2d.aggregators); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) { c.net2d.aggregators = parse_aggs(k, v); }});
    f.push_back({"net2d.readout_aggregators",
                 [](const ModelConfig& c) { return fmt_aggs(c.net2d.readout_aggregators); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   c.net2d.readout_aggregators = parse_aggs(k, v);
                 }});
    f.push_back({"net2d.scalers",
                 [](const ModelConfig& c) {
                   return join(c.net2d.scalers, [](Scaler s) { return std::string(to_string(s)); });
                 },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   c.net2d.scalers = parse_list<Scaler>(k, v, [](std::string_view s) { return parse_scaler(s); });
                 }});
    f.push_back({"net3d.readout_aggregators",
                 [](const ModelConfig& c) { return fmt_aggs(c.net3d.readout_aggregators); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   c.net3d.readout_aggregators = parse_aggs(k, v);
                 }});
    f.push_back({"loss.kind", [](const ModelConfig& c) { return std::string(to_string(c.loss.kind)); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   try {
                     c.loss.kind = parse_loss_kind(trim(v));
                   } catch (const std::invalid_argument& e) {
                     throw std::invalid_argument("config key '" + std::string(k) + "': " + e.what());
                   }
                 }});
    f.push_back({"train.warmup_steps",
                 [](const ModelConfig& c) { return join(c.train.warmup_steps, [](std::size_t s) { return fmt(s); }); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   c.train.warmup_steps = parse_list<std::size_t>(k, v, [k](std::string_view s) { return to_size(k, s); });
                 }});
    f.push_back({"train.conformer_mode", [](const ModelConfig& c) { return std::string(to_string(c.train.conformer_mode)); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) {
                   try {
                     c.train.conformer_mode = parse_conformer_mode(trim(v));
                   } catch (const std::invalid_argument& e) {
                     throw std::invalid_argument("config key '" + std::string(k) + "': " + e.what());
                   }
                 }});
    f.push_back({"train.seed", [](const ModelConfig& c) { return std::to_string(c.train.seed); },
                 [](ModelConfig& c, std::string_view k, std::string_view v) { c.train.seed = to_u64(k, v); }});
    f.push_back({"train.target", [](const ModelConfig& c) { return c.train.target; },
                 [](ModelConfig& c, std::string_view, std::string_view v) { c.train.target = std::string(trim(v)); }});
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

#undef IMX_SIZE
#undef IMX_DOUBLE
#undef IMX_BOOL

}  // namespace

std::string_view to_string(ConformerMode m) {
  switch (m) {
    case ConformerMode::kLowest: return "lowest";
    case ConformerMode::kUniform: return "uniform";
    case ConformerMode::kBoltzmann: return "boltzmann";
  }
  return "?";
}

ConformerMode parse_conformer_mode(std::string_view name) {
  for (ConformerMode m : {ConformerMode::kLowest, ConformerMode::kUniform, ConformerMode::kBoltzmann}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown conformer mode '" + std::string(name) + "' (use lowest, uniform or boltzmann)");
}

TrainConfig TrainConfig::pretraining() { return TrainConfig{}; }

TrainConfig TrainConfig::finetuning() {
  TrainConfig t;
  t.batch_size   = 128;
  t.lr           = 7e-5;
  t.weight_decay = 1e-11;
  t.warmup_steps = {700, 700, 350};
  t.plateau      = {0.5, 25, 20};
  return t;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train.max_epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
  if (warmup_steps.empty()) throw std::invalid_argument("train.warmup_steps needs at least one entry");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) {
    throw std::invalid_argument("train.plateau_factor must be in (0, 1)");
  }
  if (!(node_drop >= 0.0 && node_drop < 1.0)) throw std::invalid_argument("train.node_drop must be in [0, 1)");
}

KeyValues to_key_values(const ModelConfig& config) {
  KeyValues out;
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

void set_key_value(ModelConfig& config, std::string_view key, std::string_view value) {
  const auto& f  = fields();
  auto        it = std::find_if(f.begin(), f.end(), [key](const Field& x) { return x.key == key; });
  if (it == f.end()) {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "' (see `infomax3d keys`)");
  }
  it->set(config, key, value);
}

void apply_key_values(ModelConfig& config, const KeyValues& values) {
  for (const auto& [k, v] : values) set_key_value(config, k, v);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

KeyValues parse_key_value_text(std::string_view text) {
  KeyValues   out;
  std::size_t line_no = 0;
  std::size_t pos     = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (out.contains(key)) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": key '" + key + "' set twice");
    }
    out[key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_value_text(ss.str());
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> diff_key_values(const KeyValues& a, const KeyValues& b, std::string_view prefix) {
  std::vector<std::string> out;
  auto in_scope = [prefix](const std::string& k) { return k.compare(0, prefix.size(), prefix) == 0; };
  for (const auto& [k, v] : a) {
    if (!in_scope(k)) continue;
    auto it = b.find(k);
    if (it == b.end()) {
      out.push_back(k + ": " + v + " != (unset)");
    } else if (it->second != v) {
      out.push_back(k + ": " + v + " != " + it->second);
    }
  }
  for (const auto& [k, v] : b) {
    if (in_scope(k) && !a.contains(k)) out.push_back(k + ": (unset) != " + v);
  }
  return out;
}

}  // namespace infomax3d
