#pragma once

// Semi-labeled datasets: CSV ingestion, label-ratio subsetting, evaluation
// splits, per-channel normalization and a synthetic sinusoid generator.
//
// Sample CSV: header `sample_id,subject_id,trial_id,label,channel,v0,...,v{L-1}`,
// one row per channel, label -1 for unlabeled. Manifest: one
// `path,num_classes,channels,length` line per CSV file; relative paths resolve
// against the manifest's directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "slots/errors.hpp"
#include "slots/rng.hpp"
#include "slots/series.hpp"

namespace slots::data {

inline constexpr int kUnlabeled = -1;

struct TimeSeriesSample {
  std::string sample_id;
  std::string subject_id;
  std::string trial_id;
  int label = kUnlabeled;
  Series values;

  bool labeled() const { return label != kUnlabeled; }
};

struct SemiLabeledDataset {
  std::vector<TimeSeriesSample> samples;
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  double label_ratio = 1.0;

  std::size_t size() const { return samples.size(); }
  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](auto& s) { return s.labeled(); }));
  }
  std::size_t unlabeled_count() const { return size() - labeled_count(); }

  SemiLabeledDataset subset(const std::vector<std::size_t>& indices) const {
    SemiLabeledDataset out{{}, num_classes, channels, length, label_ratio};
    out.samples.reserve(indices.size());
    for (auto i : indices) out.samples.push_back(samples.at(i));
    return out;
  }
};

/// FNV-1a, used to fingerprint splits and labeled subsets.
class Fingerprint {
 public:
  void add(std::string_view s) {
    for (unsigned char c : s) mix(c);
    mix(0xff);
  }
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::uint64_t value() const { return h_; }

 private:
  void mix(unsigned char c) {
    h_ ^= c;
    h_ *= 0x100000001b3ULL;
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// Hash of which samples carry which visible labels.
inline std::uint64_t labeled_subset_hash(const SemiLabeledDataset& ds) {
  Fingerprint fp;
  for (const auto& s : ds.samples) {
    if (!s.labeled()) continue;
    fp.add(s.sample_id);
    fp.add(static_cast<std::uint64_t>(s.label));
  }
  return fp.value();
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct CsvSource {
  std::filesystem::path path;
  std::size_t num_classes = 0, channels = 0, length = 0;
};

inline std::vector<CsvSource> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<CsvSource> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split_fields(t);
    CsvSource src;
    if (f.size() != 4 || !parse_number(f[1], src.num_classes) || !parse_number(f[2], src.channels) ||
        !parse_number(f[3], src.length)) {
      fail(ErrorKind::parse, manifest_path + ":" + std::to_string(line_no) +
                                 ": expected `path,num_classes,channels,length`");
    }
    src.path = std::filesystem::path(std::string(trim(f[0])));
    if (src.path.is_relative()) src.path = base / src.path;
    out.push_back(std::move(src));
  }
  if (out.empty()) fail(ErrorKind::empty, "manifest " + manifest_path + " lists no files");
  return out;
}

inline void read_samples(const CsvSource& src, SemiLabeledDataset& ds) {
  const std::string where = src.path.string();
  std::ifstream in(src.path);
  if (!in) fail(ErrorKind::io, "cannot open sample file " + where);
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  std::map<std::string, std::size_t> index;
  const std::size_t first = ds.samples.size();
  std::vector<std::vector<bool>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto f = split_fields(t);
    const auto at = [&] { return where + ":" + std::to_string(line_no) + ": "; };
    if (header) {
      header = false;
      if (f.size() < 5 || trim(f[0]) != "sample_id") fail(ErrorKind::parse, at() + "missing CSV header");
      continue;
    }
    if (f.size() != 5 + src.length) {
      fail(ErrorKind::parse, at() + "expected " + std::to_string(5 + src.length) + " fields, got " +
                                 std::to_string(f.size()));
    }
    int label = 0;
    std::size_t channel = 0;
    if (!parse_number(f[3], label)) fail(ErrorKind::parse, at() + "bad label '" + std::string(f[3]) + "'");
    if (!parse_number(f[4], channel)) fail(ErrorKind::parse, at() + "bad channel '" + std::string(f[4]) + "'");
    if (label != kUnlabeled && (label < 0 || static_cast<std::size_t>(label) >= src.num_classes)) {
      fail(ErrorKind::label, at() + "label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(src.num_classes) + ")");
    }
    if (channel >= src.channels) {
      fail(ErrorKind::schema, at() + "channel " + std::to_string(channel) + " but the manifest declares " +
                                  std::to_string(src.channels) + " channels");
    }
    const std::string id(trim(f[0]));
    auto [it, inserted] = index.try_emplace(id, ds.samples.size());
    if (inserted) {
      TimeSeriesSample s;
      s.sample_id = id;
      s.subject_id = std::string(trim(f[1]));
      s.trial_id = std::string(trim(f[2]));
      s.label = label;
      s.values = Series(src.channels, src.length);
      ds.samples.push_back(std::move(s));
      seen.emplace_back(src.channels, false);
    }
    auto& s = ds.samples[it->second];
    auto& seen_row = seen[it->second - first];
    if (s.label != label || s.subject_id != trim(f[1]) || s.trial_id != trim(f[2])) {
      fail(ErrorKind::schema, at() + "sample '" + id + "' has inconsistent label or ids across channel rows");
    }
    if (seen_row[channel]) fail(ErrorKind::schema, at() + "duplicate channel row for sample '" + id + "'");
    seen_row[channel] = true;
    for (std::size_t k = 0; k < src.length; ++k) {
      double v = 0.0;
      if (!parse_number(f[5 + k], v)) {
        fail(ErrorKind::parse, at() + "bad value '" + std::string(f[5 + k]) + "' in column v" + std::to_string(k));
      }
      s.values.at(channel, k) = v;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (std::find(seen[i].begin(), seen[i].end(), false) != seen[i].end()) {
      fail(ErrorKind::schema, where + ": sample '" + ds.samples[first + i].sample_id + "' is missing channel rows");
    }
  }
}

}  // namespace detail

/// Loads every CSV listed in a manifest into one dataset.
inline SemiLabeledDataset load_csv(const std::string& manifest_path) {
  const auto sources = detail::read_manifest(manifest_path);
  SemiLabeledDataset ds;
  ds.num_classes = sources.front().num_classes;
  ds.channels = sources.front().channels;
  ds.length = sources.front().length;
  for (const auto& src : sources) {
    if (src.num_classes != ds.num_classes || src.channels != ds.channels || src.length != ds.length) {
      fail(ErrorKind::schema, "manifest entries disagree on num_classes/channels/length");
    }
    if (src.length == 0 || src.channels == 0) fail(ErrorKind::schema, "channels and length must be positive");
    detail::read_samples(src, ds);
  }
  if (ds.samples.empty()) fail(ErrorKind::empty, "dataset from " + manifest_path + " has no samples");
  const auto labeled = ds.labeled_count();
  ds.label_ratio = static_cast<double>(labeled) / static_cast<double>(ds.size());
  return ds;
}

/// Writes one CSV (one row per channel) holding every sample of `ds`.
inline void write_csv(const SemiLabeledDataset& ds, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) fail(ErrorKind::io, "cannot write " + csv_path);
  out << "sample_id,subject_id,trial_id,label,channel";
  for (std::size_t k = 0; k < ds.length; ++k) out << ",v" << k;
  out << '\n';
  for (const auto& s : ds.samples) {
    for (std::size_t c = 0; c < ds.channels; ++c) {
      out << s.sample_id << ',' << s.subject_id << ',' << s.trial_id << ',' << s.label << ',' << c;
      for (std::size_t k = 0; k < ds.length; ++k) out << ',' << detail::format_double(s.values.at(c, k));
      out << '\n';
    }
  }
  if (!out) fail(ErrorKind::io, "failed writing " + csv_path);
}

inline void write_manifest(const SemiLabeledDataset& ds, const std::string& manifest_path,
                           const std::string& csv_path) {
  std::ofstream out(manifest_path);
  if (!out) fail(ErrorKind::io, "cannot write " + manifest_path);
  out << csv_path << ',' << ds.num_classes << ',' << ds.channels << ',' << ds.length << '\n';
}

// ---------------------------------------------------------------------------
// Label ratio

/// Keeps labels on a stratified ceil(ratio * M) subset; everything else becomes
/// unlabeled. Per-class quotas use largest remainders, so each class stays
/// within one sample of its proportional share.
inline SemiLabeledDataset apply_label_ratio(const SemiLabeledDataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorKind::contract, "label ratio must lie in (0, 1]");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.samples[i].label;
    if (y == kUnlabeled) fail(ErrorKind::contract, "apply_label_ratio expects a fully labeled dataset");
    by_class.at(static_cast<std::size_t>(y)).push_back(i);
  }
  SemiLabeledDataset out = ds;
  out.label_ratio = ratio;
  if (ratio == 1.0) return out;

  const double m = static_cast<double>(ds.size());
  const auto total = static_cast<std::size_t>(std::ceil(ratio * m - 1e-9));
  std::vector<std::size_t> quota(ds.num_classes);
  std::vector<double> remainder(ds.num_classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const double exact = ratio * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(ds.num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k) {
    if (quota[order[k]] < by_class[order[k]].size()) {
      ++quota[order[k]];
      ++assigned;
    }
  }
  Rng rng(seed, Stream::label);
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    if (by_class[c].empty()) continue;
    if (quota[c] == 0) {
      fail(ErrorKind::split, "label ratio " + detail::format_double(ratio) + " leaves class " + std::to_string(c) +
                                 " with no labeled samples");
    }
    auto members = by_class[c];
    rng.shuffle(members);
    for (std::size_t k = quota[c]; k < members.size(); ++k) out.samples[members[k]].label = kUnlabeled;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitPattern { trial_dependent, leave_trials_out, leave_subjects_out };

inline std::string_view to_string(SplitPattern p) {
  switch (p) {
    case SplitPattern::trial_dependent: return "trial_dependent";
    case SplitPattern::leave_trials_out: return "leave_trials_out";
    case SplitPattern::leave_subjects_out: return "leave_subjects_out";
  }
  return "?";
}

inline SplitPattern parse_split_pattern(std::string_view s) {
  if (s == "trial_dependent") return SplitPattern::trial_dependent;
  if (s == "leave_trials_out") return SplitPattern::leave_trials_out;
  if (s == "leave_subjects_out") return SplitPattern::leave_subjects_out;
  fail(ErrorKind::config, "unknown split pattern '" + std::string(s) + "'");
}

struct SplitParams {
  double test_fraction = 0.2;  // trial_dependent: share of (subject, trial) units held out
  std::size_t holdout = 1;     // leave_trials_out: trials per subject; leave_subjects_out: subjects
  bool shuffle = true;         // false: hold out the last units in order of first appearance
};

struct SplitPlan {
  SplitPattern pattern = SplitPattern::trial_dependent;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  std::uint64_t hash() const {
    Fingerprint fp;
    fp.add(to_string(pattern));
    fp.add(static_cast<std::uint64_t>(train.size()));
    for (auto i : train) fp.add(static_cast<std::uint64_t>(i));
    fp.add(static_cast<std::uint64_t>(test.size()));
    for (auto i : test) fp.add(static_cast<std::uint64_t>(i));
    return fp.value();
  }
};

inline SplitPlan make_split(const SemiLabeledDataset& ds, SplitPattern pattern, const SplitParams& params,
                            std::uint64_t seed) {
  for (const auto& s : ds.samples) {
    if (s.subject_id.empty() || s.trial_id.empty()) {
      fail(ErrorKind::split, "sample '" + s.sample_id + "' lacks a subject or trial id");
    }
  }
  Rng rng(seed, Stream::split);
  std::set<std::size_t> held;  // held-out sample indices

  // Ordered unique keys in order of first appearance.
  const auto unique_in_order = [](const std::vector<std::string>& keys) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& k : keys)
      if (seen.insert(k).second) out.push_back(k);
    return out;
  };
  const auto pick = [&](std::vector<std::string> units, std::size_t count) {
    if (params.shuffle) {
      rng.shuffle(units);
      units.resize(count);
    } else {
      units.erase(units.begin(), units.end() - static_cast<std::ptrdiff_t>(count));
    }
    return std::set<std::string>(units.begin(), units.end());
  };

  switch (pattern) {
    case SplitPattern::trial_dependent: {
      std::vector<std::string> keys;
      for (const auto& s : ds.samples) keys.push_back(s.subject_id + '\x1f' + s.trial_id);
      const auto units = unique_in_order(keys);
      if (!(params.test_fraction > 0.0 && params.test_fraction < 1.0)) {
        fail(ErrorKind::split, "test fraction must lie in (0, 1)");
      }
      const auto n_test = static_cast<std::size_t>(std::llround(params.test_fraction * static_cast<double>(units.size())));
      if (n_test == 0 || n_test >= units.size()) {
        fail(ErrorKind::split, "cannot hold out " + std::to_string(n_test) + " of " + std::to_string(units.size()) +
                                   " trials");
      }
      const auto chosen = pick(units, n_test);
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (chosen.count(keys[i])) held.insert(i);
      break;
    }
    case SplitPattern::leave_trials_out: {
      std::map<std::string, std::vector<std::string>> trials_of;
      std::vector<std::string> subjects;
      for (const auto& s : ds.samples) {
        if (!trials_of.count(s.subject_id)) subjects.push_back(s.subject_id);
        trials_of[s.subject_id].push_back(s.trial_id);
      }
      std::map<std::string, std::set<std::string>> held_trials;
      for (const auto& subj : subjects) {
        const auto trials = unique_in_order(trials_of[subj]);
        if (params.holdout == 0 || params.holdout >= trials.size()) {
          fail(ErrorKind::split, "subject '" + subj + "' has " + std::to_string(trials.size()) +
                                     " trials; cannot hold out " + std::to_string(params.holdout));
        }
        held_trials[subj] = pick(trials, params.holdout);
      }
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (held_trials[ds.samples[i].subject_id].count(ds.samples[i].trial_id)) held.insert(i);
      break;
    }
    case SplitPattern::leave_subjects_out: {
      std::vector<std::string> keys;
      for (const auto& s : ds.samples) keys.push_back(s.subject_id);
      const auto subjects = unique_in_order(keys);
      if (params.holdout == 0 || params.holdout >= subjects.size()) {
        fail(ErrorKind::split, "dataset has " + std::to_string(subjects.size()) + " subjects; cannot hold out " +
                                   std::to_string(params.holdout));
      }
      const auto chosen = pick(subjects, params.holdout);
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (chosen.count(keys[i])) held.insert(i);
      break;
    }
  }
  SplitPlan plan;
  plan.pattern = pattern;
  plan.seed = seed;
  for (std::size_t i = 0; i < ds.size(); ++i) (held.count(i) ? plan.test : plan.train).push_back(i);
  return plan;
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-channel z-score statistics.
struct ZScore {
  std::vector<double> mean, stddev;

  static ZScore fit(const SemiLabeledDataset& ds) {
    ZScore z{std::vector<double>(ds.channels, 0.0), std::vector<double>(ds.channels, 1.0)};
    if (ds.samples.empty()) return z;
    const double n = static_cast<double>(ds.size() * ds.length);
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double s = 0.0;
      for (const auto& smp : ds.samples)
        for (std::size_t t = 0; t < ds.length; ++t) s += smp.values.at(c, t);
      const double mu = s / n;
      double v = 0.0;
      for (const auto& smp : ds.samples)
        for (std::size_t t = 0; t < ds.length; ++t) v += (smp.values.at(c, t) - mu) * (smp.values.at(c, t) - mu);
      const double sd = std::sqrt(v / n);
      z.mean[c] = mu;
      z.stddev[c] = sd > 0.0 ? sd : 1.0;
    }
    return z;
  }

  void apply(SemiLabeledDataset& ds) const {
    for (auto& smp : ds.samples)
      for (std::size_t c = 0; c < ds.channels; ++c)
        for (std::size_t t = 0; t < ds.length; ++t) smp.values.at(c, t) = (smp.values.at(c, t) - mean[c]) / stddev[c];
  }
};

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthOptions {
  std::size_t num_samples = 600;
  std::size_t num_classes = 2;
  std::size_t channels = 1;
  std::size_t length = 128;
  double noise_sigma = 0.3;
  std::size_t subjects = 10;
  double base_cycles = 4.0;     // frequency of class 0, in cycles per series
  double cycle_spacing = 0.25;  // frequency step between consecutive classes
};

inline double class_cycles(const SynthOptions& o, std::size_t c) {
  return o.base_cycles + o.cycle_spacing * static_cast<double>(c);
}

/// Class c is a sinusoid with class_cycles(c) cycles per series, a random
/// phase per channel, and additive N(0, noise_sigma^2). Labels cycle through
/// the classes; subjects are assigned round-robin in blocks of C samples and
/// each (subject, trial) pair holds exactly one sample.
inline SemiLabeledDataset synth_generate(const SynthOptions& o, std::uint64_t seed) {
  if (o.num_classes < 2) fail(ErrorKind::contract, "synthetic data needs at least 2 classes");
  if (o.channels < 1 || o.length < 1 || o.subjects < 1) fail(ErrorKind::contract, "extents must be >= 1");
  if (!(o.noise_sigma >= 0.0)) fail(ErrorKind::contract, "noise sigma must be >= 0");
  Rng rng(seed, Stream::synth);
  SemiLabeledDataset ds{{}, o.num_classes, o.channels, o.length, 1.0};
  const std::size_t C = o.num_classes;
  for (std::size_t i = 0; i < o.num_samples; ++i) {
    TimeSeriesSample s;
    s.label = static_cast<int>(i % C);
    const std::size_t subject = (i / C) % o.subjects;
    const std::size_t trial = (i / (C * o.subjects)) * C + i % C;
    s.sample_id = "n" + std::to_string(i);
    s.subject_id = "s" + std::to_string(subject);
    s.trial_id = "t" + std::to_string(trial);
    s.values = Series(o.channels, o.length);
    const double freq = class_cycles(o, i % C);
    for (std::size_t c = 0; c < o.channels; ++c) {
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      for (std::size_t t = 0; t < o.length; ++t) {
        const double angle = 2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(o.length);
        s.values.at(c, t) = std::sin(angle + phase) + o.noise_sigma * rng.normal();
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace slots::data
