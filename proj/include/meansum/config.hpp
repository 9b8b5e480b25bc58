#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "meansum/corpus.hpp"
#include "meansum/training.hpp"

namespace meansum {

// Flat key=value run configuration. Every key has a default, unknown keys are
// rejected, and the fully resolved set is written into the run directory
// before any compute starts. CLI flags mirror keys with dashes.
class RunConfig {
 public:
  RunConfig() : values_(defaults_map()) {}

  static const std::map<std::string, std::string>& defaults_map() {
    static const std::map<std::string, std::string> d = {
        {"seed", "1234"},
        {"hidden_size", "64"},
        {"embed_size", "32"},
        {"vocab_size", "512"},
        {"k", "8"},
        {"max_len", "150"},
        {"lr_lm", "0.001"},
        {"lr_clf", "0.0001"},
        {"lr_sum", "0.0005"},
        {"adam_beta1", "0.9"},
        {"adam_beta2", "0.999"},
        {"adam_eps", "1e-08"},
        {"clip_norm", "5"},
        {"tau", "2"},
        {"tau_decay", "0"},
        {"tau_min", "0.5"},
        {"lm_steps", "3000"},
        {"lm_bptt", "256"},
        {"clf_steps", "2000"},
        {"clf_batch", "16"},
        {"clf_dropout", "0.5"},
        {"clf_feature_maps", "128"},
        {"sum_steps", "2000"},
        {"variant", "full"},
        {"k_list", "2,4"},
        {"log_interval", "50"},
        {"nll_eval_bundles", "8"},
        {"log_wall_time", "false"},
        {"synth_entities", "60"},
        {"synth_reviews_per_entity", "60"},
        {"synth_rating_noise", "0.3"},
        {"synth_vocab_size", "200"},
        {"min_entity_reviews", "50"},
        {"popularity_percentile", "0.9"},
        {"split_train", "0.8"},
        {"split_valid", "0.1"},
        {"split_test", "0.1"},
        {"redundancy_threshold", "0.95"},
        {"embed_dim", "32"},
        {"embed_window", "2"},
        {"length_cap_percentile", "0.995"},
        {"eval_bundles", "100"},
        {"eval_split", "test"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw InputError("unknown config key: " + key);
    values_[key] = value;
  }

  void load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        std::size_t b = s.find_first_not_of(" \t\r");
        std::size_t e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw InputError("config file " + path + ": line " + std::to_string(lineno) +
                         " is not key=value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw InputError("unknown config key: " + key);
    return it->second;
  }

  std::int64_t get_int(const std::string& key) const {
    try {
      return std::stoll(raw(key));
    } catch (...) {
      throw InputError("config key " + key + " is not an integer: " + raw(key));
    }
  }
  std::size_t get_size(const std::string& key) const {
    std::int64_t v = get_int(key);
    if (v < 0) throw InputError("config key " + key + " must be non-negative");
    return std::size_t(v);
  }
  double get_double(const std::string& key) const {
    try {
      return std::stod(raw(key));
    } catch (...) {
      throw InputError("config key " + key + " is not a number: " + raw(key));
    }
  }
  bool get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("config key " + key + " is not a boolean: " + v);
  }
  std::vector<std::size_t> get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        out.push_back(std::stoull(item));
      } catch (...) {
        throw InputError("config key " + key + " has a bad list entry: " + item);
      }
    }
    return out;
  }

  // Sorted key=value dump; what gets written as config.resolved.
  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.hidden = get_size("hidden_size");
    t.embed = get_size("embed_size");
    t.vocab_size = get_size("vocab_size");
    t.k = get_size("k");
    t.max_len = get_size("max_len");
    t.lr_lm = get_double("lr_lm");
    t.lr_clf = get_double("lr_clf");
    t.lr_sum = get_double("lr_sum");
    t.beta1 = get_double("adam_beta1");
    t.beta2 = get_double("adam_beta2");
    t.adam_eps = get_double("adam_eps");
    t.clip_norm = get_double("clip_norm");
    t.tau = get_double("tau");
    t.tau_decay = get_double("tau_decay");
    t.tau_min = get_double("tau_min");
    t.lm_steps = get_size("lm_steps");
    t.lm_bptt = get_size("lm_bptt");
    t.clf_steps = get_size("clf_steps");
    t.clf_batch = get_size("clf_batch");
    t.clf_dropout = get_double("clf_dropout");
    t.clf_feature_maps = get_size("clf_feature_maps");
    t.sum_steps = get_size("sum_steps");
    t.log_interval = std::max<std::size_t>(1, get_size("log_interval"));
    t.nll_eval_bundles = get_size("nll_eval_bundles");
    t.log_wall_time = get_bool("log_wall_time");
    t.seed = std::uint64_t(get_int("seed"));
    t.variant = VariantSpec::named(raw("variant"));
    return t;
  }

  SyntheticSpec synthetic_spec() const {
    SyntheticSpec s;
    s.vocab_size = get_size("synth_vocab_size");
    s.entities = get_size("synth_entities");
    s.reviews_per_entity = get_size("synth_reviews_per_entity");
    s.rating_noise = get_double("synth_rating_noise");
    s.seed = std::uint64_t(get_int("seed"));
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string dashed(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

}  // namespace meansum
