#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "slots/experiment.hpp"
#include "test_util.hpp"

using namespace slots;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig tiny() {
  return config::parse(
      "synth.num_samples=60\n"
      "synth.length=32\n"
      "synth.cycle_spacing=2\n"
      "model.feature_channels=2,2,2\n"
      "model.embed_dim=4\n"
      "train.epochs=2\n"
      "train.pretrain_epochs=1\n"
      "train.batch_size=16\n"
      "run.seeds=1,2\n"
      "compare.ratios=0.2,1\n"
      "data.label_ratio=0.2\n");
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Experiment, PrepareNormalizesOnTrainAndHidesLabels) {
  const auto cfg = tiny();
  const auto full = experiment::load_dataset(cfg);
  const auto d = experiment::prepare(full, cfg, 1, 0.2);
  EXPECT_EQ(d.train.size() + d.test.size(), full.size());
  EXPECT_EQ(d.test.labeled_count(), d.test.size());
  EXPECT_EQ(d.train.labeled_count(), static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(d.train.size()) - 1e-9)));
  double s = 0, s2 = 0, n = 0;
  for (const auto& x : d.train.samples)
    for (double v : x.values.values) {
      s += v;
      s2 += v * v;
      ++n;
    }
  EXPECT_NEAR(s / n, 0.0, 1e-12);
  EXPECT_NEAR(s2 / n, 1.0, 1e-12);
  std::set<std::string> train_ids;
  for (const auto& x : d.train.samples) train_ids.insert(x.sample_id);
  for (const auto& x : d.test.samples) EXPECT_FALSE(train_ids.count(x.sample_id));
}

TEST(Experiment, PrepareIsDeterministicPerSeed) {
  const auto cfg = tiny();
  const auto full = experiment::load_dataset(cfg);
  const auto a = experiment::prepare(full, cfg, 3, 0.2), b = experiment::prepare(full, cfg, 3, 0.2);
  EXPECT_EQ(a.split_hash, b.split_hash);
  EXPECT_EQ(a.labeled_hash, b.labeled_hash);
  EXPECT_NE(a.split_hash, experiment::prepare(full, cfg, 4, 0.2).split_hash);
}

TEST(Experiment, ReportFormat) {
  metrics::EvalReport r;
  r.runs.push_back({0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  r.runs.push_back({1, 1, 1, 1, 1, 1});
  const auto path = (fs::temp_directory_path() / "slots_report.csv").string();
  experiment::write_report(path, {7, 9}, r);
  const auto l = lines_of(path);
  ASSERT_EQ(l.size(), 5u);
  EXPECT_EQ(l[0], "run,seed,accuracy,precision,recall,f1,auroc,auprc");
  EXPECT_EQ(l[1], "0,7,0.5,0.5,0.5,0.5,0.5,0.5");
  EXPECT_EQ(l[3], "mean,,0.75,0.75,0.75,0.75,0.75,0.75");
  EXPECT_TRUE(l[4].starts_with("std,,0.35355339059327"));
  fs::remove(path);
}

TEST(Experiment, CompareRegimesSharesLabeledSubsets) {
  const auto cfg = tiny();
  std::vector<std::string> log;
  const auto cells = experiment::compare_regimes(cfg, experiment::load_dataset(cfg), [&](const std::string& s) { log.push_back(s); });
  ASSERT_EQ(cells.size(), 2u);
  for (const auto& c : cells) {
    EXPECT_EQ(c.end_to_end.runs.size(), 2u);
    EXPECT_EQ(c.two_stage.runs.size(), 2u);
  }
  EXPECT_EQ(log.size(), 8u);
  // Log lines come in (end_to_end, two_stage) pairs with equal hashes.
  for (std::size_t i = 0; i < log.size(); i += 2) {
    const auto hash = [](const std::string& s) { return s.substr(s.find("labeled_hash="), 29); };
    EXPECT_EQ(hash(log[i]), hash(log[i + 1]));
  }
  const auto path = (fs::temp_directory_path() / "slots_compare.csv").string();
  experiment::write_regime_table(path, cells);
  const auto l = lines_of(path);
  EXPECT_EQ(l.size(), 1 + 6 * 2u);
  EXPECT_EQ(l[0], "metric,ratio,end_to_end_mean,end_to_end_std,two_stage_mean,two_stage_std");
  EXPECT_TRUE(l[1].starts_with("accuracy,0.2,"));
  EXPECT_TRUE(l[2].starts_with("accuracy,1,"));
  fs::remove(path);
}

TEST(Experiment, AblationRowsShareSplit) {
  auto cfg = tiny();
  cfg.ablate_two_stage_with_ls = true;
  const auto rows = experiment::ablate(cfg, experiment::load_dataset(cfg));
  ASSERT_EQ(rows.size(), 2u * 4u);
  for (std::size_t seed = 0; seed < 2; ++seed) {
    const auto* first = &rows[seed * 4];
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(first[k].split_hash, first[0].split_hash);
      EXPECT_EQ(first[k].labeled_hash, first[0].labeled_hash);
      EXPECT_EQ(first[k].seed, cfg.seeds[seed]);
    }
    EXPECT_EQ(first[0].ablation, train::Ablation::full);
    EXPECT_EQ(first[1].ablation, train::Ablation::no_Lu);
    EXPECT_EQ(first[2].ablation, train::Ablation::no_Ls);
    EXPECT_EQ(first[3].ablation, train::Ablation::two_stage_with_Ls);
  }
  const auto path = (fs::temp_directory_path() / "slots_ablation.csv").string();
  experiment::write_ablation_table(path, rows);
  const auto l = lines_of(path);
  EXPECT_EQ(l.size(), 9u);
  EXPECT_EQ(l[0], "ablation,seed,split_hash,labeled_hash,accuracy,precision,recall,f1,auroc,auprc");
  EXPECT_TRUE(l[1].starts_with("full,1,"));
  fs::remove(path);
}

TEST(Experiment, RunSingleIsDeterministic) {
  const auto cfg = tiny();
  const auto full = experiment::load_dataset(cfg);
  const auto a = experiment::run_single(cfg, full, 1), b = experiment::run_single(cfg, full, 1);
  for (std::size_t k = 0; k < metrics::RunMetrics::kCount; ++k) EXPECT_EQ(a.test.get(k), b.test.get(k));
  ASSERT_EQ(a.fit.trace.epochs.size(), b.fit.trace.epochs.size());
  for (std::size_t e = 0; e < a.fit.trace.epochs.size(); ++e) EXPECT_EQ(a.fit.trace.epochs[e].hybrid, b.fit.trace.epochs[e].hybrid);
}

TEST(Experiment, CsvSourceLoadsThroughManifest) {
  const auto cfg = tiny();
  const auto dir = fs::temp_directory_path() / "slots_exp_csv";
  fs::create_directories(dir);
  const auto full = experiment::load_dataset(cfg);
  data::write_csv(full, (dir / "d.csv").string());
  data::write_manifest(full, (dir / "m.txt").string(), "d.csv");
  std::ofstream(dir / "e.cfg") << "data.source=csv\ndata.manifest=m.txt\n";
  const auto csv_cfg = config::load((dir / "e.cfg").string());
  const auto back = experiment::load_dataset(csv_cfg);
  ASSERT_EQ(back.size(), full.size());
  EXPECT_EQ(back.samples[5].values, full.samples[5].values);
  fs::remove_all(dir);
}
