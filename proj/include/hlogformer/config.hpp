#pragma once

// Run configuration: a "key = value" text format, one setting per line.
// '#' starts a comment; blank lines are ignored; list values are
// comma-separated. Unknown and repeated keys are errors.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hlogformer/checkpoint.hpp"
#include "hlogformer/detection.hpp"
#include "hlogformer/encoder.hpp"
#include "hlogformer/training.hpp"

namespace hlog {

struct RunConfig {
  std::string data;         // JSONL corpus, one record per line
  std::string vocab;        // optional prebuilt vocabulary
  std::size_t min_freq = 1;
  std::size_t max_depth = 32;
  std::optional<std::uint64_t> seed;

  EncoderConfig model;       // vocab_size is filled in from the vocabulary
  std::size_t flat_blocks = 2;
  TrainConfig train;
  DetectionConfig detection;
  double fake_p = 0.2;

  RunConfig() { detection.alpha_grid = DetectionConfig::default_alpha_grid(); }

  void set(const std::string& key, const std::string& value);
  std::string to_text() const;

  /// Seed is mandatory; `need_data` also checks that the corpus exists.
  void validate(bool need_data) const {
    if (!seed) throw config_error("seed is mandatory");
    if (need_data) {
      if (data.empty()) throw config_error("data path is not set");
      if (!std::filesystem::exists(data)) throw config_error("data path does not exist: " + data);
    }
    if (!vocab.empty() && !std::filesystem::exists(vocab))
      throw config_error("vocab path does not exist: " + vocab);
    if (model.d_model == 0 || model.heads == 0 || model.d_model % model.heads != 0)
      throw config_error("d_model must be a positive multiple of heads");
    if (model.window < 2 * model.summary_slots + 4)
      throw config_error("window must be >= 2*summary_slots + 4");
    if (flat_blocks == 0) throw config_error("flat_blocks must be positive");
    train.validate();
    if (!(fake_p > 0 && fake_p < 1)) throw config_error("fake_p must be in (0, 1)");
    for (auto t : detection.candidate_sizes)
      if (t == 0) throw config_error("candidate sizes must be positive");
  }

  /// Model config with the vocabulary size and run seed applied, using
  /// flat_blocks for the flat mode.
  EncoderConfig encoder_for(std::size_t vocab_size) const {
    EncoderConfig c = model;
    c.vocab_size = vocab_size;
    c.seed = seed.value_or(0);
    if (train.mode == Mode::Flat) c.blocks = flat_blocks;
    return c;
  }

  static RunConfig parse(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> seen;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error("config line " + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (std::find(seen.begin(), seen.end(), key) != seen.end())
        throw config_error("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
      seen.push_back(key);
      c.set(key, value);
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot read config " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  /// Applies a "key=value" override.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("override '" + kv + "' is not key=value");
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(v, &used));
    } else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': invalid number '" + v + "'");
  }
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(parse_number<T>(key, item));
  }
  if (out.empty()) throw config_error("config key '" + key + "': empty list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config key '" + key + "': expected true or false");
}

inline std::string num(double x) { return format_double(x); }

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += num(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

struct ConfigKey {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::vector<ConfigKey> keys = {
      {"data", [](R& c, S v) { c.data = v; }, [](const R& c) { return c.data; }},
      {"vocab", [](R& c, S v) { c.vocab = v; }, [](const R& c) { return c.vocab; }},
      {"min_freq", [](R& c, S v) { c.min_freq = parse_number<std::size_t>("min_freq", v); },
       [](const R& c) { return std::to_string(c.min_freq); }},
      {"max_depth", [](R& c, S v) { c.max_depth = parse_number<std::size_t>("max_depth", v); },
       [](const R& c) { return std::to_string(c.max_depth); }},
      {"seed", [](R& c, S v) { c.seed = parse_number<std::uint64_t>("seed", v); },
       [](const R& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
      {"d_model", [](R& c, S v) { c.model.d_model = parse_number<std::size_t>("d_model", v); },
       [](const R& c) { return std::to_string(c.model.d_model); }},
      {"heads", [](R& c, S v) { c.model.heads = parse_number<std::size_t>("heads", v); },
       [](const R& c) { return std::to_string(c.model.heads); }},
      {"ffn", [](R& c, S v) { c.model.ffn = parse_number<std::size_t>("ffn", v); },
       [](const R& c) { return std::to_string(c.model.ffn); }},
      {"blocks", [](R& c, S v) { c.model.blocks = parse_number<std::size_t>("blocks", v); },
       [](const R& c) { return std::to_string(c.model.blocks); }},
      {"flat_blocks", [](R& c, S v) { c.flat_blocks = parse_number<std::size_t>("flat_blocks", v); },
       [](const R& c) { return std::to_string(c.flat_blocks); }},
      {"window", [](R& c, S v) { c.model.window = parse_number<std::size_t>("window", v); },
       [](const R& c) { return std::to_string(c.model.window); }},
      {"summary_slots",
       [](R& c, S v) { c.model.summary_slots = parse_number<std::size_t>("summary_slots", v); },
       [](const R& c) { return std::to_string(c.model.summary_slots); }},
      {"mode", [](R& c, S v) { c.train.mode = parse_mode(v); },
       [](const R& c) { return std::string(mode_name(c.train.mode)); }},
      {"tokens_from_forward_pass",
       [](R& c, S v) { c.train.tokens_from_forward_pass = parse_bool("tokens_from_forward_pass", v); },
       [](const R& c) { return std::string(c.train.tokens_from_forward_pass ? "true" : "false"); }},
      {"epochs", [](R& c, S v) { c.train.epochs = parse_number<std::size_t>("epochs", v); },
       [](const R& c) { return std::to_string(c.train.epochs); }},
      {"batch_size", [](R& c, S v) { c.train.batch_size = parse_number<std::size_t>("batch_size", v); },
       [](const R& c) { return std::to_string(c.train.batch_size); }},
      {"lr", [](R& c, S v) { c.train.adam.lr = parse_number<double>("lr", v); },
       [](const R& c) { return num(c.train.adam.lr); }},
      {"beta1", [](R& c, S v) { c.train.adam.beta1 = parse_number<double>("beta1", v); },
       [](const R& c) { return num(c.train.adam.beta1); }},
      {"beta2", [](R& c, S v) { c.train.adam.beta2 = parse_number<double>("beta2", v); },
       [](const R& c) { return num(c.train.adam.beta2); }},
      {"adam_eps", [](R& c, S v) { c.train.adam.eps = parse_number<double>("adam_eps", v); },
       [](const R& c) { return num(c.train.adam.eps); }},
      {"weight_decay", [](R& c, S v) { c.train.adam.weight_decay = parse_number<double>("weight_decay", v); },
       [](const R& c) { return num(c.train.adam.weight_decay); }},
      {"mask_rate", [](R& c, S v) { c.train.mask_rate = parse_number<double>("mask_rate", v); },
       [](const R& c) { return num(c.train.mask_rate); }},
      {"lambda_vhm", [](R& c, S v) { c.train.lambda_vhm = parse_number<double>("lambda_vhm", v); },
       [](const R& c) { return num(c.train.lambda_vhm); }},
      {"clip_norm", [](R& c, S v) { c.train.clip_norm = parse_number<double>("clip_norm", v); },
       [](const R& c) { return num(c.train.clip_norm); }},
      {"record_wallclock",
       [](R& c, S v) { c.train.record_wallclock = parse_bool("record_wallclock", v); },
       [](const R& c) { return std::string(c.train.record_wallclock ? "true" : "false"); }},
      {"candidate_sizes",
       [](R& c, S v) { c.detection.candidate_sizes = parse_list<std::size_t>("candidate_sizes", v); },
       [](const R& c) { return join(c.detection.candidate_sizes); }},
      {"alpha_grid", [](R& c, S v) { c.detection.alpha_grid = parse_list<double>("alpha_grid", v); },
       [](const R& c) { return join(c.detection.alpha_grid); }},
      {"report_T", [](R& c, S v) { c.detection.report_T = parse_number<std::size_t>("report_T", v); },
       [](const R& c) { return std::to_string(c.detection.report_T); }},
      {"mask_seed", [](R& c, S v) { c.detection.mask_seed = parse_number<std::uint64_t>("mask_seed", v); },
       [](const R& c) { return std::to_string(c.detection.mask_seed); }},
      {"fake_p", [](R& c, S v) { c.fake_p = parse_number<double>("fake_p", v); },
       [](const R& c) { return num(c.fake_p); }},
  };
  return keys;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys()) {
    if (key == k.name) {
      k.set(*this, value);
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

inline std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : detail::config_keys()) out += std::string(k.name) + " = " + k.get(*this) + '\n';
  return out;
}

}  // namespace hlog
