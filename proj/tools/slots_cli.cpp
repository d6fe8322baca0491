// slots: train, evaluate, ablate and compare semi-supervised contrastive
// time-series classifiers.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 training divergence, 4 I/O error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slots/config.hpp"
#include "slots/experiment.hpp"
#include "slots/runtime.hpp"

namespace fs = std::filesystem;
using namespace slots;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::vector<std::string> overrides;
  std::string pattern;
  std::optional<double> label_ratio;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_out = true) {
  cmd->add_option("--config", a.config_path, "Config file (key=value lines)")->required();
  auto* out = cmd->add_option("--out", a.out_dir, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--seeds", a.seeds, "Comma-separated run seeds (overrides run.seeds)");
  cmd->add_option("--override", a.overrides, "key=value applied after the config file (repeatable)");
  cmd->add_option("--pattern", a.pattern, "Split pattern: trial_dependent|leave_trials_out|leave_subjects_out");
  cmd->add_option("--label-ratio", a.label_ratio, "Fraction of training samples that keep labels");
}

/// Loads the config, applies overrides and flags, and validates before any compute.
config::ExperimentConfig resolve_config(const CommonArgs& a) {
  auto cfg = config::load(a.config_path);
  for (const auto& o : a.overrides) config::apply_assignment(cfg, o, "--override: ");
  if (!a.seeds.empty()) config::apply_assignment(cfg, "run.seeds=" + a.seeds, "--seeds: ");
  if (!a.pattern.empty()) config::apply_assignment(cfg, "data.pattern=" + a.pattern, "--pattern: ");
  if (a.label_ratio) {
    config::apply_assignment(cfg, "data.label_ratio=" + data::detail::format_double(*a.label_ratio), "--label-ratio: ");
  }
  cfg.validate();
  return cfg;
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + p.string() + "': " + ec.message());
}

/// Sidecar log: the only emitted file that carries timestamps.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) fail(ErrorKind::io, "cannot write " + path.string());
  }

  void operator()(const std::string& line) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << line << '\n';
    out_.flush();
    std::clog << line << '\n';
  }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) fail(ErrorKind::io, "cannot write " + path.string());
}

int cmd_train(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const fs::path out(a.out_dir);
  make_dir(out);
  write_text(out / "config.cfg", config::to_text(cfg));
  RunLog log(out / "run.log");
  log("train: config " + a.config_path);
  const auto full = experiment::load_dataset(cfg);
  metrics::EvalReport report;
  for (auto seed : cfg.seeds) {
    const auto dir = out / ("seed_" + std::to_string(seed));
    make_dir(dir);
    auto r = experiment::run_single(cfg, full, seed);
    r.fit.trace.write_csv((dir / "trace.csv").string());
    nn::save_checkpoint((dir / "model.ckpt").string(), r.model);
    log("seed=" + std::to_string(seed) + " split_hash=" + experiment::hex(r.split_hash) +
        " labeled_hash=" + experiment::hex(r.fit.labeled_hash) + " f1=" + data::detail::format_double(r.test.f1));
    report.runs.push_back(r.test);
  }
  experiment::write_report((out / "report.csv").string(), cfg.seeds, report);
  log("train: done");
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& model_path) {
  const auto cfg = resolve_config(a);
  const fs::path out(a.out_dir);
  make_dir(out);
  RunLog log(out / "run.log");
  const auto model = nn::load_checkpoint(model_path);
  const auto full = experiment::load_dataset(cfg);
  if (full.channels != model.config().in_channels || full.num_classes != model.num_classes()) {
    fail(ErrorKind::schema, "checkpoint expects " + std::to_string(model.config().in_channels) + " channel(s) and " +
                                std::to_string(model.num_classes()) + " classes; data has " +
                                std::to_string(full.channels) + " and " + std::to_string(full.num_classes));
  }
  metrics::EvalReport report;
  for (auto seed : cfg.seeds) {
    const auto d = experiment::prepare(full, cfg, seed, 1.0);
    report.runs.push_back(train::evaluate(model, d.test));
    log("eval: seed=" + std::to_string(seed) + " split_hash=" + experiment::hex(d.split_hash));
  }
  experiment::write_report((out / "report.csv").string(), cfg.seeds, report);
  return 0;
}

int cmd_ablate(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const fs::path out(a.out_dir);
  make_dir(out);
  write_text(out / "config.cfg", config::to_text(cfg));
  RunLog log(out / "run.log");
  const auto rows = experiment::ablate(cfg, experiment::load_dataset(cfg), std::ref(log));
  experiment::write_ablation_table((out / "ablation.csv").string(), rows);
  return 0;
}

int cmd_compare(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const fs::path out(a.out_dir);
  make_dir(out);
  write_text(out / "config.cfg", config::to_text(cfg));
  RunLog log(out / "run.log");
  const auto cells = experiment::compare_regimes(cfg, experiment::load_dataset(cfg), std::ref(log));
  experiment::write_regime_table((out / "compare.csv").string(), cells);
  return 0;
}

int cmd_synth(const CommonArgs& a) {
  auto cfg = resolve_config(a);
  const fs::path out(a.out_dir);
  make_dir(out);
  const auto ds = data::synth_generate(cfg.synth, cfg.data.synth_seed);
  data::write_csv(ds, (out / "synth.csv").string());
  data::write_manifest(ds, (out / "manifest.txt").string(), "synth.csv");
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::divergence: return 3;
    case ErrorKind::io: return 4;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Semi-supervised contrastive time-series classification"};
  app.require_subcommand(1);
  CommonArgs train_args, eval_args, ablate_args, compare_args, synth_args;
  std::string model_path;
  auto* train = app.add_subcommand("train", "Train one model per seed; write trace, checkpoint and report");
  add_common(train, train_args);
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on each seed's test split");
  add_common(eval, eval_args);
  eval->add_option("--model", model_path, "Checkpoint to evaluate")->required();
  auto* ablate = app.add_subcommand("ablate", "Compare full, no_Lu and no_Ls training with shared splits");
  add_common(ablate, ablate_args);
  auto* compare = app.add_subcommand("compare-regimes", "End-to-end vs two-stage across label ratios");
  add_common(compare, compare_args);
  auto* synth = app.add_subcommand("synth-gen", "Write the configured synthetic dataset as CSV plus manifest");
  add_common(synth, synth_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args, model_path);
    if (*ablate) return cmd_ablate(ablate_args);
    if (*compare) return cmd_compare(compare_args);
    if (*synth) return cmd_synth(synth_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
