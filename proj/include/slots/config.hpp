#pragma once

// Experiment configuration: flat `key=value` text with dotted namespaces.
// The schema is closed; unknown keys, malformed values and out-of-range
// settings are configuration errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slots/data.hpp"
#include "slots/errors.hpp"
#include "slots/nn.hpp"
#include "slots/rng.hpp"
#include "slots/train.hpp"

namespace slots::config {

enum class DataSource { synthetic, csv };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::string manifest;  // csv source; relative paths resolve against the config file
  data::SplitPattern pattern = data::SplitPattern::trial_dependent;
  data::SplitParams split;
  double label_ratio = 0.1;
  bool normalize = true;
  std::uint64_t synth_seed = 0;  // fixes the synthetic dataset independently of run seeds
};

struct ExperimentConfig {
  DataConfig data;
  data::SynthOptions synth;
  nn::EncoderConfig model;
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> compare_ratios{0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  bool ablate_two_stage_with_ls = false;
  std::string rng_algorithm{kRngAlgorithm};

  /// Cross-field checks; raises config errors.
  void validate() const;
};

namespace detail {

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  fail(ErrorKind::config, "key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

template <class T>
T parse_num(const std::string& key, const std::string& v, const char* expected) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, expected);
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) { return parse_num<double>(key, v, "a number"); }

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  return parse_num<std::size_t>(key, v, "a non-negative integer");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(std::string(data::detail::trim(item)));
  return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_one(key, item));
  if (out.empty()) fail(ErrorKind::config, "key '" + key + "': empty list");
  return out;
}

template <class E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string("|") + name;
  }
  bad_value(key, v, names);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& schema() {
  using C = ExperimentConfig;
  using S = std::string;
  static const std::map<std::string, Setter> keys = {
      {"rng.algorithm", [](C& c, const S&, const S& v) { c.rng_algorithm = v; }},
      {"run.seeds",
       [](C& c, const S& k, const S& v) {
         c.seeds = parse_list<std::uint64_t>(k, v, [](const S& kk, const S& x) {
           return parse_num<std::uint64_t>(kk, x, "a list of non-negative integers");
         });
       }},
      {"data.source",
       [](C& c, const S& k, const S& v) {
         c.data.source = parse_enum<DataSource>(k, v, {{"synthetic", DataSource::synthetic}, {"csv", DataSource::csv}});
       }},
      {"data.manifest", [](C& c, const S&, const S& v) { c.data.manifest = v; }},
      {"data.pattern",
       [](C& c, const S& k, const S& v) {
         c.data.pattern = parse_enum<data::SplitPattern>(k, v,
                                                         {{"trial_dependent", data::SplitPattern::trial_dependent},
                                                          {"leave_trials_out", data::SplitPattern::leave_trials_out},
                                                          {"leave_subjects_out", data::SplitPattern::leave_subjects_out}});
       }},
      {"data.test_fraction", [](C& c, const S& k, const S& v) { c.data.split.test_fraction = parse_real(k, v); }},
      {"data.holdout", [](C& c, const S& k, const S& v) { c.data.split.holdout = parse_count(k, v); }},
      {"data.shuffle_holdout", [](C& c, const S& k, const S& v) { c.data.split.shuffle = parse_bool(k, v); }},
      {"data.label_ratio", [](C& c, const S& k, const S& v) { c.data.label_ratio = parse_real(k, v); }},
      {"data.normalize", [](C& c, const S& k, const S& v) { c.data.normalize = parse_bool(k, v); }},
      {"synth.seed",
       [](C& c, const S& k, const S& v) { c.data.synth_seed = parse_num<std::uint64_t>(k, v, "an integer"); }},
      {"synth.num_samples", [](C& c, const S& k, const S& v) { c.synth.num_samples = parse_count(k, v); }},
      {"synth.num_classes", [](C& c, const S& k, const S& v) { c.synth.num_classes = parse_count(k, v); }},
      {"synth.channels", [](C& c, const S& k, const S& v) { c.synth.channels = parse_count(k, v); }},
      {"synth.length", [](C& c, const S& k, const S& v) { c.synth.length = parse_count(k, v); }},
      {"synth.noise_sigma", [](C& c, const S& k, const S& v) { c.synth.noise_sigma = parse_real(k, v); }},
      {"synth.subjects", [](C& c, const S& k, const S& v) { c.synth.subjects = parse_count(k, v); }},
      {"synth.base_cycles", [](C& c, const S& k, const S& v) { c.synth.base_cycles = parse_real(k, v); }},
      {"synth.cycle_spacing", [](C& c, const S& k, const S& v) { c.synth.cycle_spacing = parse_real(k, v); }},
      {"model.num_blocks", [](C& c, const S& k, const S& v) { c.model.num_blocks = parse_count(k, v); }},
      {"model.dilations",
       [](C& c, const S& k, const S& v) { c.model.dilations = parse_list<std::size_t>(k, v, parse_count); }},
      {"model.feature_channels",
       [](C& c, const S& k, const S& v) { c.model.feature_channels = parse_list<std::size_t>(k, v, parse_count); }},
      {"model.embed_dim", [](C& c, const S& k, const S& v) { c.model.embed_dim = parse_count(k, v); }},
      {"losses.lambda1", [](C& c, const S& k, const S& v) { c.train.weights.lambda1 = parse_real(k, v); }},
      {"losses.lambda2", [](C& c, const S& k, const S& v) { c.train.weights.lambda2 = parse_real(k, v); }},
      {"losses.lambda3", [](C& c, const S& k, const S& v) { c.train.weights.lambda3 = parse_real(k, v); }},
      {"losses.tau", [](C& c, const S& k, const S& v) { c.train.weights.tau = parse_real(k, v); }},
      {"losses.nt_xent",
       [](C& c, const S& k, const S& v) {
         c.train.nt_xent = parse_enum<losses::NtXentVariant>(
             k, v, {{"simclr", losses::NtXentVariant::simclr}, {"literal", losses::NtXentVariant::literal}});
       }},
      {"augment.kind",
       [](C& c, const S& k, const S& v) {
         c.train.augment.kind = parse_enum<augment::Kind>(
             k, v, {{"temporal_mask", augment::Kind::temporal_mask}, {"jitter", augment::Kind::jitter}});
       }},
      {"augment.mask_prob", [](C& c, const S& k, const S& v) { c.train.augment.mask_prob = parse_real(k, v); }},
      {"augment.jitter_sigma", [](C& c, const S& k, const S& v) { c.train.augment.jitter_sigma = parse_real(k, v); }},
      {"train.regime",
       [](C& c, const S& k, const S& v) {
         c.train.regime = parse_enum<train::Regime>(
             k, v, {{"end_to_end", train::Regime::end_to_end}, {"two_stage", train::Regime::two_stage}});
       }},
      {"train.ablation",
       [](C& c, const S& k, const S& v) {
         c.train.ablation = parse_enum<train::Ablation>(k, v,
                                                        {{"full", train::Ablation::full},
                                                         {"no_Lu", train::Ablation::no_Lu},
                                                         {"no_Ls", train::Ablation::no_Ls},
                                                         {"two_stage_with_Ls", train::Ablation::two_stage_with_Ls}});
       }},
      {"train.epochs", [](C& c, const S& k, const S& v) { c.train.epochs = parse_count(k, v); }},
      {"train.batch_size", [](C& c, const S& k, const S& v) { c.train.batch_size = parse_count(k, v); }},
      {"train.optimizer",
       [](C& c, const S& k, const S& v) {
         c.train.optimizer = parse_enum<train::OptimizerKind>(
             k, v, {{"adam", train::OptimizerKind::adam}, {"sgd", train::OptimizerKind::sgd}});
       }},
      {"train.learning_rate", [](C& c, const S& k, const S& v) { c.train.learning_rate = parse_real(k, v); }},
      {"train.pretrain_epochs", [](C& c, const S& k, const S& v) { c.train.pretrain_epochs = parse_count(k, v); }},
      {"train.freeze_encoder", [](C& c, const S& k, const S& v) { c.train.freeze_encoder = parse_bool(k, v); }},
      {"compare.ratios",
       [](C& c, const S& k, const S& v) { c.compare_ratios = parse_list<double>(k, v, parse_real); }},
      {"ablate.two_stage_with_Ls", [](C& c, const S& k, const S& v) { c.ablate_two_stage_with_ls = parse_bool(k, v); }},
  };
  return keys;
}

}  // namespace detail

/// Applies one `key=value` assignment.
inline void set(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& keys = detail::schema();
  const auto it = keys.find(key);
  if (it == keys.end()) fail(ErrorKind::config, "unknown key '" + key + "'");
  it->second(cfg, key, value);
}

/// Parses "key=value"; `where` prefixes error messages.
inline void apply_assignment(ExperimentConfig& cfg, std::string_view text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) fail(ErrorKind::config, where + "expected key=value, got '" + std::string(text) + "'");
  const std::string key(data::detail::trim(text.substr(0, eq)));
  const std::string value(data::detail::trim(text.substr(eq + 1)));
  try {
    set(cfg, key, value);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, where + e.what());
  }
}

/// Parses config text on top of the defaults. `#` starts a comment line.
inline ExperimentConfig parse(const std::string& text, const std::string& source = "config") {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = data::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    apply_assignment(cfg, t, source + ":" + std::to_string(line_no) + ": ");
  }
  return cfg;
}

/// Reads a config file; a missing file is an I/O error naming the path.
inline ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse(buf.str(), path);
  if (cfg.data.source == DataSource::csv && !cfg.data.manifest.empty()) {
    const std::filesystem::path m(cfg.data.manifest);
    if (m.is_relative()) cfg.data.manifest = (std::filesystem::path(path).parent_path() / m).string();
  }
  return cfg;
}

inline void ExperimentConfig::validate() const {
  const auto wrap = [](auto&& check) {
    try {
      check();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::config) throw;
      throw Error(ErrorKind::config, e.what());
    }
  };
  if (rng_algorithm != kRngAlgorithm) {
    fail(ErrorKind::config, "rng.algorithm '" + rng_algorithm + "' is not supported (only " +
                                std::string(kRngAlgorithm) + ")");
  }
  if (seeds.empty()) fail(ErrorKind::config, "run.seeds must list at least one seed");
  if (data.source == DataSource::csv && data.manifest.empty()) {
    fail(ErrorKind::config, "data.source=csv requires data.manifest");
  }
  if (!(data.label_ratio > 0.0 && data.label_ratio <= 1.0)) fail(ErrorKind::config, "data.label_ratio must lie in (0, 1]");
  for (double r : compare_ratios)
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::config, "compare.ratios entries must lie in (0, 1]");
  if (!(data.split.test_fraction > 0.0 && data.split.test_fraction < 1.0)) {
    fail(ErrorKind::config, "data.test_fraction must lie in (0, 1)");
  }
  if (data.split.holdout < 1) fail(ErrorKind::config, "data.holdout must be >= 1");
  if (synth.num_classes < 2) fail(ErrorKind::config, "synth.num_classes must be >= 2");
  if (synth.num_samples < 2 || synth.channels < 1 || synth.subjects < 1) {
    fail(ErrorKind::config, "synth extents must be positive");
  }
  if (!(synth.noise_sigma >= 0.0)) fail(ErrorKind::config, "synth.noise_sigma must be >= 0");
  wrap([&] {
    auto m = model;
    if (data.source == DataSource::synthetic) {
      m.in_channels = synth.channels;
      if (synth.length < m.min_length()) {
        fail(ErrorKind::config, "synth.length must be >= " + std::to_string(m.min_length()) + " for " +
                                    std::to_string(m.num_blocks) + " pooling blocks");
      }
    }
    m.validate();
  });
  wrap([&] { train.validate(); });
}

/// Canonical text form: every key, sorted, one per line.
inline std::string to_text(const ExperimentConfig& c) {
  const auto f = data::detail::format_double;
  const auto join = [](const auto& v, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
  };
  const auto count = [](std::size_t v) { return std::to_string(v); };
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::map<std::string, std::string> kv = {
      {"rng.algorithm", c.rng_algorithm},
      {"run.seeds", join(c.seeds, [](std::uint64_t s) { return std::to_string(s); })},
      {"data.source", c.data.source == DataSource::csv ? "csv" : "synthetic"},
      {"data.manifest", c.data.manifest},
      {"data.pattern", std::string(data::to_string(c.data.pattern))},
      {"data.test_fraction", f(c.data.split.test_fraction)},
      {"data.holdout", count(c.data.split.holdout)},
      {"data.shuffle_holdout", b(c.data.split.shuffle)},
      {"data.label_ratio", f(c.data.label_ratio)},
      {"data.normalize", b(c.data.normalize)},
      {"synth.seed", std::to_string(c.data.synth_seed)},
      {"synth.num_samples", count(c.synth.num_samples)},
      {"synth.num_classes", count(c.synth.num_classes)},
      {"synth.channels", count(c.synth.channels)},
      {"synth.length", count(c.synth.length)},
      {"synth.noise_sigma", f(c.synth.noise_sigma)},
      {"synth.subjects", count(c.synth.subjects)},
      {"synth.base_cycles", f(c.synth.base_cycles)},
      {"synth.cycle_spacing", f(c.synth.cycle_spacing)},
      {"model.num_blocks", count(c.model.num_blocks)},
      {"model.dilations", join(c.model.dilations, count)},
      {"model.feature_channels", join(c.model.feature_channels, count)},
      {"model.embed_dim", count(c.model.embed_dim)},
      {"losses.lambda1", f(c.train.weights.lambda1)},
      {"losses.lambda2", f(c.train.weights.lambda2)},
      {"losses.lambda3", f(c.train.weights.lambda3)},
      {"losses.tau", f(c.train.weights.tau)},
      {"losses.nt_xent", c.train.nt_xent == losses::NtXentVariant::simclr ? "simclr" : "literal"},
      {"augment.kind", c.train.augment.kind == augment::Kind::temporal_mask ? "temporal_mask" : "jitter"},
      {"augment.mask_prob", f(c.train.augment.mask_prob)},
      {"augment.jitter_sigma", f(c.train.augment.jitter_sigma)},
      {"train.regime", std::string(train::to_string(c.train.regime))},
      {"train.ablation", std::string(train::to_string(c.train.ablation))},
      {"train.epochs", count(c.train.epochs)},
      {"train.batch_size", count(c.train.batch_size)},
      {"train.optimizer", c.train.optimizer == train::OptimizerKind::adam ? "adam" : "sgd"},
      {"train.learning_rate", f(c.train.learning_rate)},
      {"train.pretrain_epochs", count(c.train.pretrain_epochs)},
      {"train.freeze_encoder", b(c.train.freeze_encoder)},
      {"compare.ratios", join(c.compare_ratios, f)},
      {"ablate.two_stage_with_Ls", b(c.ablate_two_stage_with_ls)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace slots::config
