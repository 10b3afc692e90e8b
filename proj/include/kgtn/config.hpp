/**
 * Copyright 2026 The kgtn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kgtn/data.hpp"

namespace kgtn {

/// k_top value meaning "keep every slot" (sampling disabled).
inline constexpr std::size_t kKeepAll = std::numeric_limits<std::size_t>::max();

struct ExperimentConfig {
  // [data]
  std::string data_dir;
  std::string ratings_file = "ratings_final.txt";
  std::string kg_file = "kg_final.txt";
  std::string out_dir = "runs/latest";
  SplitRatios split;
  double noise_ratio = 0.0;

  // [model]
  std::string model = "kgtn";  // or "bprmf"
  std::size_t dim = 64;
  std::size_t intents = 32;
  std::size_t depth = 1;
  std::size_t agg_depth = 2;
  std::size_t heads = 4;
  std::size_t k_top = 8;
  bool share_transformer_weights = false;

  // [train]
  double tau = 0.2;
  double alpha = 0.1;
  double l2 = 1e-5;
  double lr = 1e-3;
  std::size_t batch = 2048;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 2024;
  bool infonce_standard = false;
  std::size_t threads = 1;

  // [eval]
  double f1_threshold = 0.5;
  std::vector<std::size_t> recall_k = {10, 20};
  std::vector<double> noise_ratios = {0.0, 0.05, 0.10, 0.15, 0.20};
  std::vector<std::size_t> intent_grid = {16, 32, 64, 128, 256};
  std::vector<double> alpha_grid = {1.0, 0.1, 0.01, 0.001};
  bool emit_plot_data = false;

  bool sampling_enabled() const { return k_top != kKeepAll; }
  bool contrast_enabled() const { return alpha > 0.0 && model == "kgtn"; }

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw ConfigError(key + ": " + why);
    };
    if (model != "kgtn" && model != "bprmf") fail("model", "must be kgtn or bprmf");
    if (dim == 0) fail("dim", "must be positive");
    if (heads == 0 || dim % heads != 0)
      fail("heads", "must divide dim (" + std::to_string(heads) + " does not divide " +
                        std::to_string(dim) + ")");
    if (intents == 0) fail("intents", "must be at least 1");
    if (depth > 3) fail("depth", "must be at most 3");
    if (k_top == 0) fail("k_top", "must be at least 1 or inf");
    if (!(tau > 0)) fail("tau", "must be positive");
    if (!(alpha >= 0)) fail("alpha", "must be non-negative");
    if (!(l2 >= 0)) fail("l2", "must be non-negative");
    if (!(lr > 0)) fail("lr", "must be positive");
    if (batch == 0) fail("batch", "must be positive");
    if (threads == 0) fail("threads", "must be positive");
    if (!(f1_threshold > 0 && f1_threshold < 1)) fail("f1_threshold", "must lie in (0, 1)");
    if (!(noise_ratio >= 0 && noise_ratio <= 0.5)) fail("noise_ratio", "must lie in [0, 0.5]");
    for (double r : noise_ratios)
      if (!(r >= 0 && r <= 0.5)) fail("noise_ratios", "entries must lie in [0, 0.5]");
    for (auto k : recall_k)
      if (k == 0) fail("recall_k", "entries must be at least 1");
    try {
      split.validate();
    } catch (const ConfigError& e) {
      fail("split", e.what());
    }
  }
};

namespace detail {

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

template <class T, class F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(conv(item));
  }
  return out;
}

struct Field {
  const char* section;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Ordered key table; serialization walks it, so the output is stable.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  using S = const std::string&;
  auto str = [](std::string C::*m, const char* sec) {
    return Field{sec, [m](C& c, S, S v) { c.*m = v; }, [m](const C& c) { return c.*m; }};
  };
  auto dbl = [](double C::*m, const char* sec) {
    return Field{sec, [m](C& c, S k, S v) { c.*m = to_double(k, v); },
                 [m](const C& c) { return fmt_double(c.*m); }};
  };
  auto uint = [](std::size_t C::*m, const char* sec) {
    return Field{sec, [m](C& c, S k, S v) { c.*m = static_cast<std::size_t>(to_uint(k, v)); },
                 [m](const C& c) { return std::to_string(c.*m); }};
  };
  auto flag = [](bool C::*m, const char* sec) {
    return Field{sec, [m](C& c, S k, S v) { c.*m = to_bool(k, v); },
                 [m](const C& c) { return std::string(c.*m ? "true" : "false"); }};
  };
  static const std::vector<std::pair<std::string, Field>> table = {
      {"data_dir", str(&C::data_dir, "data")},
      {"ratings_file", str(&C::ratings_file, "data")},
      {"kg_file", str(&C::kg_file, "data")},
      {"out_dir", str(&C::out_dir, "data")},
      {"split_train", Field{"data", [](C& c, S k, S v) { c.split.train = to_double(k, v); },
                            [](const C& c) { return fmt_double(c.split.train); }}},
      {"split_eval", Field{"data", [](C& c, S k, S v) { c.split.eval = to_double(k, v); },
                           [](const C& c) { return fmt_double(c.split.eval); }}},
      {"split_test", Field{"data", [](C& c, S k, S v) { c.split.test = to_double(k, v); },
                           [](const C& c) { return fmt_double(c.split.test); }}},
      {"noise_ratio", dbl(&C::noise_ratio, "data")},
      {"model", str(&C::model, "model")},
      {"dim", uint(&C::dim, "model")},
      {"intents", uint(&C::intents, "model")},
      {"depth", uint(&C::depth, "model")},
      {"agg_depth", uint(&C::agg_depth, "model")},
      {"heads", uint(&C::heads, "model")},
      {"k_top", Field{"model",
                      [](C& c, S k, S v) {
                        c.k_top = (v == "inf") ? kKeepAll : static_cast<std::size_t>(to_uint(k, v));
                      },
                      [](const C& c) {
                        return c.k_top == kKeepAll ? std::string("inf") : std::to_string(c.k_top);
                      }}},
      {"share_transformer_weights", flag(&C::share_transformer_weights, "model")},
      {"tau", dbl(&C::tau, "train")},
      {"alpha", dbl(&C::alpha, "train")},
      {"l2", dbl(&C::l2, "train")},
      {"lr", dbl(&C::lr, "train")},
      {"batch", uint(&C::batch, "train")},
      {"epochs", uint(&C::epochs, "train")},
      {"patience", uint(&C::patience, "train")},
      {"seed", Field{"train", [](C& c, S k, S v) { c.seed = to_uint(k, v); },
                     [](const C& c) { return std::to_string(c.seed); }}},
      {"infonce_standard", flag(&C::infonce_standard, "train")},
      {"threads", uint(&C::threads, "train")},
      {"f1_threshold", dbl(&C::f1_threshold, "eval")},
      {"recall_k", Field{"eval",
                         [](C& c, S k, S v) {
                           c.recall_k = to_list<std::size_t>(
                               v, [&](S x) { return static_cast<std::size_t>(to_uint(k, x)); });
                         },
                         [](const C& c) { return join(c.recall_k); }}},
      {"noise_ratios", Field{"eval",
                             [](C& c, S k, S v) {
                               c.noise_ratios = to_list<double>(v, [&](S x) { return to_double(k, x); });
                             },
                             [](const C& c) { return join(c.noise_ratios); }}},
      {"intent_grid", Field{"eval",
                            [](C& c, S k, S v) {
                              c.intent_grid = to_list<std::size_t>(
                                  v, [&](S x) { return static_cast<std::size_t>(to_uint(k, x)); });
                            },
                            [](const C& c) { return join(c.intent_grid); }}},
      {"alpha_grid", Field{"eval",
                           [](C& c, S k, S v) {
                             c.alpha_grid = to_list<double>(v, [&](S x) { return to_double(k, x); });
                           },
                           [](const C& c) { return join(c.alpha_grid); }}},
      {"emit_plot_data", flag(&C::emit_plot_data, "eval")},
  };
  return table;
}

inline const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return &f;
  return nullptr;
}

}  // namespace detail

/// Sets one key; unknown keys and malformed values throw ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto* f = detail::find_field(key);
  if (!f) throw ConfigError(key + ": unknown key");
  f->set(cfg, key, value);
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  const auto* f = detail::find_field(key);
  if (!f) throw ConfigError(key + ": unknown key");
  return f->get(cfg);
}

/// Parses `key = value` lines grouped under `[section]` headers. `#` and `;`
/// start comments. Keys must belong to the section they appear in; keys
/// before any header are accepted in any section.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::map<std::string, std::string>& overrides = {}) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "model" && section != "train" && section != "eval")
        throw ConfigError("[" + section + "]: unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto* f = detail::find_field(key);
    if (!f) throw ConfigError(key + ": unknown key");
    if (!section.empty() && section != f->section)
      throw ConfigError(key + ": belongs in [" + f->section + "], found in [" + section + "]");
    f->set(cfg, key, value);
  }
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path,
                                     const std::map<std::string, std::string>& overrides = {}) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config_text(text, overrides);
}

/// Writes every key, grouped by section; parse_config_text reads it back
/// to an identical config.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const char* sec : {"data", "model", "train", "eval"}) {
    os << '[' << sec << "]\n";
    for (const auto& [name, f] : detail::fields())
      if (std::string(f.section) == sec) os << name << " = " << f.get(cfg) << '\n';
    os << '\n';
  }
  return os.str();
}

}  // namespace kgtn
