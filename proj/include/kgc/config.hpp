#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>

#include "kgc/distill.hpp"
#include "kgc/encoder.hpp"
#include "kgc/scoring.hpp"
#include "kgc/trainer.hpp"

namespace kgc {

// Flat key = value configuration with '#' comments. Unknown keys are
// rejected so typos fail loudly; command-line flags overwrite file values.

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "data.train", "data.valid", "data.test", "output.dir",
      "distill.family", "distill.alpha_start", "distill.delta", "distill.gamma", "distill.rounds",
      "encoder.flavor", "encoder.layers", "encoder.input_dim", "encoder.hidden_dim",
      "encoder.bases",
      "apim.mode_count", "apim.retained_k", "apim.lambda_frob",
      "model.decoder", "model.variant", "model.lambda_apim",
      "train.epochs", "train.batch_size", "train.learning_rate",
      "train.negatives_per_positive", "train.filtered_negatives",
      "train.seed", "train.patience", "train.checkpoint_path",
      "eval.checkpoint", "eval.split", "eval.dump_ranks",
      "runtime.threads",
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      std::size_t eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config " + path + ":" + std::to_string(lineno) +
                          ": expected key = value");
      }
      cfg.set(strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known_config_keys().count(key)) throw ConfigError("unknown config key: " + key);
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return parse_double(key, it->second);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return parse_size(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

  void write_echo(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config echo: " + path);
    for (const auto& [k, v] : kv_) out << k << " = " << v << '\n';
  }

 private:
  static std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
    }
  }

  static std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      long long n = std::stoll(v, &pos);
      if (pos != v.size() || n < 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected nonnegative integer, got '" + v + "'");
    }
  }

  std::map<std::string, std::string> kv_;
};

// ---- config -> typed structs ----

inline DistillSchedule distill_from_config(const RunConfig& cfg) {
  DistillSchedule s;
  std::string family = cfg.get_or("distill.family", "linear");
  if (family == "linear") {
    s.family = DecayFamily::linear;
  } else if (family == "exponential") {
    s.family = DecayFamily::exponential;
  } else {
    throw ConfigError("distill.family must be linear or exponential, got '" + family + "'");
  }
  s.alpha_start = cfg.get_double("distill.alpha_start", 1.0);
  s.delta = cfg.get_double("distill.delta", 0.2);
  s.gamma = cfg.get_double("distill.gamma", 0.74);
  s.rounds = cfg.get_size("distill.rounds", 3);
  validate_schedule(s);
  return s;
}

inline ModelConfig model_from_config(const RunConfig& cfg) {
  ModelConfig m;

  std::string decoder = cfg.get_or("model.decoder", "bilinear");
  if (decoder == "none") {
    m.decoder = Decoder::none;
  } else if (decoder == "translational") {
    m.decoder = Decoder::translational;
  } else if (decoder == "bilinear") {
    m.decoder = Decoder::bilinear;
  } else {
    throw ConfigError("model.decoder must be none|translational|bilinear, got '" + decoder + "'");
  }

  std::string variant = cfg.get_or("model.variant", "base");
  if (variant == "base") {
    m.variant = Variant::base;
  } else if (variant == "apim") {
    m.variant = Variant::apim;
  } else if (variant == "dist") {
    m.variant = Variant::dist;
  } else if (variant == "merg") {
    m.variant = Variant::merg;
  } else {
    throw ConfigError("model.variant must be base|apim|dist|merg, got '" + variant + "'");
  }

  if (cfg.has("encoder.flavor")) {
    EncoderConfig e;
    std::string flavor = cfg.get("encoder.flavor");
    if (flavor == "attention") {
      e.flavor = EncoderFlavor::attention;
    } else if (flavor == "relational") {
      e.flavor = EncoderFlavor::relational;
    } else if (flavor == "compositional") {
      e.flavor = EncoderFlavor::compositional;
    } else {
      throw ConfigError("encoder.flavor must be attention|relational|compositional, got '" +
                        flavor + "'");
    }
    e.layers = cfg.get_size("encoder.layers", 4);
    e.input_dim = cfg.get_size("encoder.input_dim", 100);
    e.hidden_dim = cfg.get_size("encoder.hidden_dim", 200);
    e.bases = cfg.get_size("encoder.bases", 2);
    if (variant_uses_distill(m.variant)) e.distill = distill_from_config(cfg);
    m.encoder = e;
    m.embedding_dim = e.input_dim;
  } else {
    m.embedding_dim = cfg.get_size("encoder.input_dim", 100);
  }

  m.apim.mode_count = cfg.get_size("apim.mode_count", 100);
  m.apim.retained_k = cfg.get_size("apim.retained_k", 20);
  m.apim.lambda_frob = cfg.get_double("apim.lambda_frob", 1e-4);
  m.lambda_apim = cfg.get_double("model.lambda_apim", 1.0);

  validate_model_config(m);
  return m;
}

inline TrainConfig train_from_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_size("train.epochs", 100);
  t.batch_size = cfg.get_size("train.batch_size", 128);
  t.learning_rate = cfg.get_double("train.learning_rate", 1e-3);
  t.negatives_per_positive = cfg.get_size("train.negatives_per_positive", 1);
  t.filtered_negatives = cfg.get_bool("train.filtered_negatives", true);
  t.seed = cfg.get_size("train.seed", 42);
  t.patience = cfg.get_size("train.patience", 20);
  t.threads = cfg.get_size("runtime.threads", 1);
  validate_train_config(t);
  return t;
}

}  // namespace kgc
