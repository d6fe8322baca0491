#pragma once

// Experiment orchestration: data preparation (split, normalization, label
// hiding), single runs, regime comparison across label ratios, ablations,
// and their CSV tables.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slots/config.hpp"
#include "slots/data.hpp"
#include "slots/metrics.hpp"
#include "slots/nn.hpp"
#include "slots/train.hpp"

namespace slots::experiment {

using config::ExperimentConfig;

struct PreparedData {
  data::SemiLabeledDataset train;  // labels hidden down to the label ratio
  data::SemiLabeledDataset test;   // fully labeled
  std::uint64_t split_hash = 0;
  std::uint64_t labeled_hash = 0;
};

/// The full dataset named by the config (synthetic or CSV).
inline data::SemiLabeledDataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.data.source == config::DataSource::synthetic) return data::synth_generate(cfg.synth, cfg.data.synth_seed);
  return data::load_csv(cfg.data.manifest);
}

/// Splits by seed, fits z-scores on the training part, and hides labels
/// outside a stratified `ratio` subset of the training part.
inline PreparedData prepare(const data::SemiLabeledDataset& full, const ExperimentConfig& cfg, std::uint64_t seed,
                            double ratio) {
  const auto plan = data::make_split(full, cfg.data.pattern, cfg.data.split, seed);
  PreparedData out;
  out.split_hash = plan.hash();
  out.train = full.subset(plan.train);
  std::vector<std::size_t> labeled_test;
  for (auto i : plan.test)
    if (full.samples[i].labeled()) labeled_test.push_back(i);
  out.test = full.subset(labeled_test);
  if (out.test.samples.empty()) fail(ErrorKind::split, "test split has no labeled samples");
  if (cfg.data.normalize) {
    const auto z = data::ZScore::fit(out.train);
    z.apply(out.train);
    z.apply(out.test);
  }
  if (ratio < 1.0) out.train = data::apply_label_ratio(out.train, ratio, seed);
  out.labeled_hash = data::labeled_subset_hash(out.train);
  return out;
}

struct RunOutcome {
  std::uint64_t seed = 0;
  nn::SlotsModel model;
  train::FitResult fit;
  metrics::RunMetrics test;
  std::uint64_t split_hash = 0;
};

inline nn::EncoderConfig encoder_for(const ExperimentConfig& cfg, const data::SemiLabeledDataset& ds) {
  auto m = cfg.model;
  m.in_channels = ds.channels;
  return m;
}

/// Trains one model on prepared data with `tc` and scores it on the test part.
inline RunOutcome run_prepared(const ExperimentConfig& cfg, const train::TrainConfig& tc, const PreparedData& d,
                               std::uint64_t seed) {
  auto run_cfg = tc;
  run_cfg.seed = seed;
  nn::SlotsModel model(encoder_for(cfg, d.train), d.train.num_classes, seed);
  auto fit = run_cfg.regime == train::Regime::end_to_end ? train::fit_end_to_end(model, d.train, &d.test, run_cfg)
                                                         : train::fit_two_stage(model, d.train, &d.test, run_cfg);
  const auto test = train::evaluate(model, d.test);
  return {seed, std::move(model), std::move(fit), test, d.split_hash};
}

inline RunOutcome run_single(const ExperimentConfig& cfg, const data::SemiLabeledDataset& full, std::uint64_t seed) {
  return run_prepared(cfg, cfg.train, prepare(full, cfg, seed, cfg.data.label_ratio), seed);
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Reports

inline void write_metrics_header(std::ostream& out) {
  for (const char* n : metrics::RunMetrics::kNames) out << ',' << n;
  out << '\n';
}

inline void write_metrics_row(std::ostream& out, const metrics::RunMetrics& m) {
  for (std::size_t k = 0; k < metrics::RunMetrics::kCount; ++k) out << ',' << data::detail::format_double(m.get(k));
  out << '\n';
}

/// `run,seed,<six metrics>`: one row per seed, then mean and std rows.
inline void write_report(const std::string& path, const std::vector<std::uint64_t>& seeds,
                         const metrics::EvalReport& report) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << "run,seed";
  write_metrics_header(out);
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    out << i << ',' << seeds.at(i);
    write_metrics_row(out, report.runs[i]);
  }
  out << "mean,";
  write_metrics_row(out, report.mean());
  out << "std,";
  write_metrics_row(out, report.stddev());
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Regime comparison

struct RegimeCell {
  double ratio = 0.0;
  metrics::EvalReport end_to_end, two_stage;
  std::vector<std::uint64_t> labeled_hashes;  // per seed; identical for both regimes
};

using Logger = std::function<void(const std::string&)>;

/// For every ratio and seed, trains both regimes on the identical labeled
/// subset. A labeled-subset mismatch between regimes is a contract error.
inline std::vector<RegimeCell> compare_regimes(const ExperimentConfig& cfg, const data::SemiLabeledDataset& full,
                                               const Logger& log = {}) {
  std::vector<RegimeCell> cells;
  for (double ratio : cfg.compare_ratios) {
    RegimeCell cell;
    cell.ratio = ratio;
    for (auto seed : cfg.seeds) {
      const auto d = prepare(full, cfg, seed, ratio);
      auto e2e = cfg.train;
      e2e.regime = train::Regime::end_to_end;
      auto two = cfg.train;
      two.regime = train::Regime::two_stage;
      if (two.ablation != train::Ablation::two_stage_with_Ls) two.ablation = train::Ablation::full;
      const auto a = run_prepared(cfg, e2e, d, seed);
      const auto b = run_prepared(cfg, two, d, seed);
      if (a.fit.labeled_hash != b.fit.labeled_hash) {
        fail(ErrorKind::contract, "regimes consumed different labeled subsets");
      }
      if (log) {
        for (const auto* r : {&a, &b}) {
          log("ratio=" + data::detail::format_double(ratio) + " seed=" + std::to_string(seed) + " regime=" +
              std::string(r == &a ? "end_to_end" : "two_stage") + " labeled_hash=" + hex(r->fit.labeled_hash) +
              " f1=" + data::detail::format_double(r->test.f1));
        }
      }
      cell.end_to_end.runs.push_back(a.test);
      cell.two_stage.runs.push_back(b.test);
      cell.labeled_hashes.push_back(a.fit.labeled_hash);
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

/// One row per (metric, ratio): both regimes' mean and std side by side.
inline void write_regime_table(const std::string& path, const std::vector<RegimeCell>& cells) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  const auto f = data::detail::format_double;
  out << "metric,ratio,end_to_end_mean,end_to_end_std,two_stage_mean,two_stage_std\n";
  for (std::size_t k = 0; k < metrics::RunMetrics::kCount; ++k) {
    for (const auto& c : cells) {
      const auto em = c.end_to_end.mean(), es = c.end_to_end.stddev();
      const auto tm = c.two_stage.mean(), ts = c.two_stage.stddev();
      out << metrics::RunMetrics::kNames[k] << ',' << f(c.ratio) << ',' << f(em.get(k)) << ',' << f(es.get(k))
          << ',' << f(tm.get(k)) << ',' << f(ts.get(k)) << '\n';
    }
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
  train::Ablation ablation = train::Ablation::full;
  std::uint64_t seed = 0;
  std::uint64_t split_hash = 0;
  std::uint64_t labeled_hash = 0;
  metrics::RunMetrics test;
};

inline std::vector<train::Ablation> ablation_set(const ExperimentConfig& cfg) {
  std::vector<train::Ablation> out{train::Ablation::full, train::Ablation::no_Lu, train::Ablation::no_Ls};
  if (cfg.ablate_two_stage_with_ls) out.push_back(train::Ablation::two_stage_with_Ls);
  return out;
}

/// Every ablation on every seed, sharing the seed's split and labeled subset.
/// Rows are ordered by seed, then ablation.
inline std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const data::SemiLabeledDataset& full,
                                       const Logger& log = {}) {
  std::vector<AblationRow> rows;
  for (auto seed : cfg.seeds) {
    const auto d = prepare(full, cfg, seed, cfg.data.label_ratio);
    for (auto ab : ablation_set(cfg)) {
      auto tc = cfg.train;
      tc.ablation = ab;
      tc.regime = ab == train::Ablation::two_stage_with_Ls ? train::Regime::two_stage : train::Regime::end_to_end;
      const auto r = run_prepared(cfg, tc, d, seed);
      if (log) {
        log("ablation=" + std::string(train::to_string(ab)) + " seed=" + std::to_string(seed) +
            " split_hash=" + hex(d.split_hash) + " f1=" + data::detail::format_double(r.test.f1));
      }
      rows.push_back({ab, seed, d.split_hash, r.fit.labeled_hash, r.test});
    }
  }
  return rows;
}

inline void write_ablation_table(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << "ablation,seed,split_hash,labeled_hash";
  write_metrics_header(out);
  for (const auto& r : rows) {
    out << train::to_string(r.ablation) << ',' << r.seed << ',' << hex(r.split_hash) << ',' << hex(r.labeled_hash);
    write_metrics_row(out, r.test);
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

}  // namespace slots::experiment
