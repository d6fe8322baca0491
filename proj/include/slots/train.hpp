#pragma once

// Optimizers, the joint (end-to-end) training loop, the two-stage
// pre-train/fine-tune baseline, and ablation modes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slots/augment.hpp"
#include "slots/autodiff.hpp"
#include "slots/data.hpp"
#include "slots/errors.hpp"
#include "slots/losses.hpp"
#include "slots/metrics.hpp"
#include "slots/nn.hpp"
#include "slots/rng.hpp"

namespace slots::train {

enum class Regime { end_to_end, two_stage };
enum class Ablation { full, no_Lu, no_Ls, two_stage_with_Ls };
enum class OptimizerKind { adam, sgd };

inline std::string_view to_string(Regime r) { return r == Regime::end_to_end ? "end_to_end" : "two_stage"; }

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_Lu: return "no_Lu";
    case Ablation::no_Ls: return "no_Ls";
    case Ablation::two_stage_with_Ls: return "two_stage_with_Ls";
  }
  return "?";
}

struct TrainConfig {
  Regime regime = Regime::end_to_end;
  Ablation ablation = Ablation::full;
  losses::LossWeights weights;
  losses::NtXentVariant nt_xent = losses::NtXentVariant::simclr;
  augment::AugmentSpec augment;
  std::size_t epochs = 30;
  std::size_t batch_size = 100;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t pretrain_epochs = 30;
  bool freeze_encoder = false;  // two-stage fine-tuning updates only the classifier

  void validate() const {
    if (epochs < 1) fail(ErrorKind::config, "epochs must be >= 1");
    if (batch_size < 2) fail(ErrorKind::config, "batch size must be >= 2");
    if (!(learning_rate > 0.0)) fail(ErrorKind::config, "learning rate must be > 0");
    weights.validate();
    augment.validate();
  }

  /// Loss weights after the ablation switches are applied.
  losses::LossWeights effective_weights() const {
    auto w = weights;
    if (ablation == Ablation::no_Lu) w.lambda1 = 0.0;
    if (ablation == Ablation::no_Ls) w.lambda2 = 0.0;
    return w;
  }
};

// ---------------------------------------------------------------------------
// Optimizers

inline void check_finite_grad(std::span<const double> grad) {
  for (double g : grad)
    if (!std::isfinite(g)) fail(ErrorKind::divergence, "non-finite gradient");
}

/// p <- p - lr * g
inline void sgd_step(std::span<double> param, std::span<const double> grad, double lr) {
  check_finite_grad(grad);
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam; `step` is the 1-based update count.
inline void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                      std::span<double> v, std::size_t step, double lr, const AdamHyper& h = {}) {
  if (m.size() != param.size() || v.size() != param.size() || grad.size() != param.size()) {
    fail(ErrorKind::dimension, "adam state does not match parameter shape");
  }
  check_finite_grad(grad);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
  }
}

class Optimizer {
 public:
  Optimizer(std::vector<nn::Parameter> params, OptimizerKind kind, double lr)
      : params_(std::move(params)), kind_(kind), lr_(lr) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value.numel(), 0.0);
      v_.emplace_back(p.value.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].value;
      if (kind_ == OptimizerKind::sgd) {
        sgd_step(p.mutable_data(), p.grad(), lr_);
      } else {
        adam_step(p.mutable_data(), p.grad(), m_[i], v_[i], t_, lr_);
      }
    }
  }

  const std::vector<nn::Parameter>& parameters() const { return params_; }

 private:
  std::vector<nn::Parameter> params_;
  OptimizerKind kind_;
  double lr_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

inline void zero_grad(const nn::SlotsModel& model) {
  for (auto& p : model.parameters()) p.value.zero_grad();
}

// ---------------------------------------------------------------------------
// Batches and losses

/// Stacks series into a [B, channels, length] tensor.
inline ad::Tensor stack(const std::vector<const Series*>& items) {
  if (items.empty()) fail(ErrorKind::contract, "cannot stack an empty batch");
  const auto c = items.front()->channels, l = items.front()->length;
  std::vector<double> v;
  v.reserve(items.size() * c * l);
  for (const Series* s : items) {
    if (s->channels != c || s->length != l) fail(ErrorKind::dimension, "ragged batch");
    v.insert(v.end(), s->values.begin(), s->values.end());
  }
  return ad::Tensor({items.size(), c, l}, std::move(v));
}

/// One optimization step's inputs; undefined tensors mark an absent path.
struct StepBatch {
  ad::Tensor view_i, view_j;  // [N, channels, L]
  ad::Tensor labeled;         // [M, channels, L]
  std::vector<int> labels;
};

struct LossComponents {
  std::optional<double> lu, ls, lc;
  double hybrid = 0.0;
};

struct HybridLoss {
  std::optional<ad::Tensor> lu, ls, lc;
  ad::Tensor total;
};

inline bool has_contrastive_anchor(const std::vector<int>& y) {
  for (std::size_t a = 0; a < y.size(); ++a) {
    bool pos = false, neg = false;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (k == a) continue;
      (y[k] == y[a] ? pos : neg) = true;
    }
    if (pos && neg) return true;
  }
  return false;
}

/// Builds whichever of L_u, L_s, L_c the batch and weights support; nullopt when none.
inline std::optional<HybridLoss> hybrid_loss(const nn::SlotsModel& model, const StepBatch& batch,
                                             const losses::LossWeights& w,
                                             losses::NtXentVariant variant = losses::NtXentVariant::simclr,
                                             bool encoder_frozen = false) {
  const bool use_u = w.lambda1 > 0.0 && batch.view_i.defined() && batch.view_i.dim(0) >= 2;
  const bool has_l = batch.labeled.defined() && batch.labeled.dim(0) > 0;
  const bool use_s = w.lambda2 > 0.0 && has_l && has_contrastive_anchor(batch.labels);
  const bool use_c = w.lambda3 > 0.0 && has_l;
  if (!use_u && !use_s && !use_c) return std::nullopt;

  // One encoder pass over [view_i; view_j; labeled].
  std::vector<ad::Tensor> parts;
  std::size_t n = 0, m = 0;
  if (use_u) {
    n = batch.view_i.dim(0);
    parts.push_back(batch.view_i);
    parts.push_back(batch.view_j);
  }
  if (use_s || use_c) {
    m = batch.labeled.dim(0);
    parts.push_back(batch.labeled);
  }
  const auto input = parts.size() == 1 ? parts.front() : ad::concat(parts, 0);
  ad::Tensor z;
  if (encoder_frozen) {
    ad::NoGradGuard guard;
    z = nn::encode(model, input);
  } else {
    z = nn::encode(model, input);
  }

  HybridLoss out;
  if (use_u) {
    out.lu = losses::unsup_contrastive(ad::slice(z, 0, 0, n), ad::slice(z, 0, n, 2 * n), w.tau, variant);
  }
  if (use_s || use_c) {
    const auto zl = use_u ? ad::slice(z, 0, 2 * n, 2 * n + m) : z;
    if (use_s) out.ls = losses::sup_contrastive(zl, batch.labels, w.tau);
    if (use_c) out.lc = losses::cross_entropy(nn::classify(model, zl), batch.labels);
  }
  out.total = losses::hybrid(out.lu, out.ls, out.lc, w);
  return out;
}

inline LossComponents components_of(const HybridLoss& h) {
  LossComponents c;
  const auto check = [](const std::optional<ad::Tensor>& t, const char* name) -> std::optional<double> {
    if (!t) return std::nullopt;
    const double v = t->item();
    if (!std::isfinite(v)) fail(ErrorKind::divergence, std::string(name) + " is not finite");
    return v;
  };
  c.lu = check(h.lu, "L_u");
  c.ls = check(h.ls, "L_s");
  c.lc = check(h.lc, "L_c");
  c.hybrid = h.total.item();
  if (!std::isfinite(c.hybrid)) fail(ErrorKind::divergence, "hybrid loss is not finite");
  return c;
}

/// One optimizer step on the gradient of the hybrid loss. Returns nullopt if
/// the batch supports none of the weighted losses.
inline std::optional<LossComponents> step_end_to_end(const nn::SlotsModel& model, Optimizer& optimizer,
                                                     const StepBatch& batch, const losses::LossWeights& w,
                                                     losses::NtXentVariant variant = losses::NtXentVariant::simclr,
                                                     bool encoder_frozen = false) {
  zero_grad(model);
  ad::Tape tape;
  auto loss = hybrid_loss(model, batch, w, variant, encoder_frozen);
  if (!loss) return std::nullopt;
  const auto comps = components_of(*loss);
  tape.backward(loss->total);
  optimizer.step();
  return comps;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Softmax class probabilities, one row per sample.
inline std::vector<std::vector<double>> predict_proba(const nn::SlotsModel& model, const data::SemiLabeledDataset& ds,
                                                      std::size_t chunk = 100) {
  ad::NoGradGuard guard;
  std::vector<std::vector<double>> out;
  out.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    std::vector<const Series*> items;
    for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i) items.push_back(&ds.samples[i].values);
    const auto probs = ad::softmax(nn::classify(model, nn::encode(model, stack(items))), 1);
    const auto c = probs.dim(1);
    for (std::size_t r = 0; r < items.size(); ++r) {
      out.emplace_back(probs.data().begin() + static_cast<std::ptrdiff_t>(r * c),
                       probs.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    }
  }
  return out;
}

/// Six metrics on a dataset whose samples all carry labels.
inline metrics::RunMetrics evaluate(const nn::SlotsModel& model, const data::SemiLabeledDataset& ds) {
  std::vector<int> y;
  for (const auto& s : ds.samples) {
    if (!s.labeled()) fail(ErrorKind::contract, "evaluation set contains unlabeled samples");
    y.push_back(s.label);
  }
  if (y.empty()) fail(ErrorKind::empty, "empty evaluation set");
  return metrics::evaluate_predictions(y, predict_proba(model, ds), model.num_classes());
}

// ---------------------------------------------------------------------------
// Trace

struct EpochRecord {
  std::size_t epoch = 0;
  std::string stage;  // joint, pretrain or finetune
  double lu = 0.0, ls = 0.0, lc = 0.0, hybrid = 0.0;
  double val_accuracy = 0.0, val_f1 = 0.0;
};

/// Per-epoch mean losses; a component absent from every step of an epoch is recorded as 0.
struct TrainTrace {
  std::vector<EpochRecord> epochs;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out << "epoch,L_u,L_s,L_c,hybrid,val_accuracy,val_f1,stage\n";
    const auto f = data::detail::format_double;
    for (const auto& e : epochs) {
      out << e.epoch << ',' << f(e.lu) << ',' << f(e.ls) << ',' << f(e.lc) << ',' << f(e.hybrid) << ','
          << f(e.val_accuracy) << ',' << f(e.val_f1) << ',' << e.stage << '\n';
    }
    if (!out) fail(ErrorKind::io, "failed writing " + path);
  }
};

struct FitResult {
  TrainTrace trace;
  std::uint64_t labeled_hash = 0;  // fingerprint of the labeled samples consumed
};

namespace detail {

// Even-sized batches over a pool, reshuffled whenever the pool is exhausted.
class Batcher {
 public:
  Batcher(std::vector<std::size_t> pool, std::size_t batch_size, Rng& rng)
      : pool_(std::move(pool)), rng_(&rng) {
    count_ = pool_.empty() ? 0 : (pool_.size() + batch_size - 1) / batch_size;
  }

  std::size_t batches() const { return count_; }

  void restart() {
    rng_->shuffle(pool_);
    next_ = 0;
  }

  std::vector<std::size_t> next() {
    if (next_ == count_) restart();
    const auto n = pool_.size();
    const auto begin = next_ * n / count_, end = (next_ + 1) * n / count_;
    ++next_;
    return {pool_.begin() + static_cast<std::ptrdiff_t>(begin), pool_.begin() + static_cast<std::ptrdiff_t>(end)};
  }

 private:
  std::vector<std::size_t> pool_;
  Rng* rng_;
  std::size_t count_ = 0;
  std::size_t next_ = 0;
};

struct EpochAccumulator {
  double lu = 0, ls = 0, lc = 0, hybrid = 0;
  std::size_t nu = 0, ns = 0, nc = 0, steps = 0;

  void add(const LossComponents& c) {
    if (c.lu) lu += *c.lu, ++nu;
    if (c.ls) ls += *c.ls, ++ns;
    if (c.lc) lc += *c.lc, ++nc;
    hybrid += c.hybrid;
    ++steps;
  }

  EpochRecord finish(std::size_t epoch, std::string stage) const {
    const auto avg = [](double s, std::size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
    return {epoch, std::move(stage), avg(lu, nu), avg(ls, ns), avg(lc, nc), avg(hybrid, steps), 0.0, 0.0};
  }
};

inline void attach_validation(EpochRecord& rec, const nn::SlotsModel& model, const data::SemiLabeledDataset* val) {
  if (!val || val->samples.empty()) return;
  std::vector<int> y;
  for (const auto& s : val->samples) y.push_back(s.label);
  const auto probs = predict_proba(model, *val);
  std::vector<int> pred;
  for (const auto& row : probs) pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  const auto cm = metrics::classification_metrics(y, pred, model.num_classes());
  rec.val_accuracy = cm.accuracy;
  rec.val_f1 = cm.f1;
}

struct Pools {
  std::vector<std::size_t> unlabeled, labeled;
};

inline Pools pools_of(const data::SemiLabeledDataset& ds) {
  Pools p;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.samples[i].labeled() ? p.labeled : p.unlabeled).push_back(i);
  return p;
}

inline void add_views(StepBatch& batch, const data::SemiLabeledDataset& ds, const std::vector<std::size_t>& idx,
                      const augment::AugmentSpec& spec, Rng& rng) {
  std::vector<Series> vi, vj;
  vi.reserve(idx.size());
  vj.reserve(idx.size());
  for (auto i : idx) {
    auto [a, b] = augment::make_views(ds.samples[i].values, spec, rng);
    vi.push_back(std::move(a));
    vj.push_back(std::move(b));
  }
  std::vector<const Series*> pi, pj;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    pi.push_back(&vi[k]);
    pj.push_back(&vj[k]);
  }
  batch.view_i = stack(pi);
  batch.view_j = stack(pj);
}

inline void add_labeled(StepBatch& batch, const data::SemiLabeledDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const Series*> items;
  for (auto i : idx) {
    items.push_back(&ds.samples[i].values);
    batch.labels.push_back(ds.samples[i].label);
  }
  batch.labeled = stack(items);
}

inline std::uint64_t labeled_hash(const data::SemiLabeledDataset& ds, const std::vector<std::size_t>& pool) {
  data::Fingerprint fp;
  for (auto i : pool) {
    fp.add(ds.samples[i].sample_id);
    fp.add(static_cast<std::uint64_t>(ds.samples[i].label));
  }
  return fp.value();
}

inline std::optional<LossComponents> guarded_step(const nn::SlotsModel& model, Optimizer& opt, const StepBatch& batch,
                                                  const losses::LossWeights& w, losses::NtXentVariant variant,
                                                  bool frozen, std::size_t epoch, std::size_t step) {
  try {
    return step_end_to_end(model, opt, batch, w, variant, frozen);
  } catch (const Error& e) {
    throw Error(e.kind(), "epoch " + std::to_string(epoch) + ", batch " + std::to_string(step) + ": " + e.what());
  }
}

// Stage 1 of the two-stage regime: encoder-only L_u training.
inline void pretrain(const nn::SlotsModel& model, const data::SemiLabeledDataset& pool_ds,
                     const std::vector<std::size_t>& pool, const TrainConfig& cfg, const data::SemiLabeledDataset* val,
                     Rng& shuffle_rng, Rng& augment_rng, TrainTrace& trace) {
  if (cfg.pretrain_epochs == 0) return;
  if (pool.size() < 2) {
    std::clog << "warning: unlabeled pool has " << pool.size() << " sample(s); pre-training skipped\n";
    return;
  }
  Optimizer opt(model.encoder_parameters(), cfg.optimizer, cfg.learning_rate);
  const losses::LossWeights w{1.0, 0.0, 0.0, cfg.weights.tau};
  Batcher batcher(pool, cfg.batch_size, shuffle_rng);
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    batcher.restart();
    EpochAccumulator acc;
    for (std::size_t s = 0; s < batcher.batches(); ++s) {
      StepBatch batch;
      add_views(batch, pool_ds, batcher.next(), cfg.augment, augment_rng);
      if (auto c = guarded_step(model, opt, batch, w, cfg.nt_xent, false, trace.epochs.size() + 1, s)) acc.add(*c);
    }
    auto rec = acc.finish(trace.epochs.size() + 1, "pretrain");
    attach_validation(rec, model, val);
    trace.epochs.push_back(std::move(rec));
  }
}

// Stage 2: classifier (and, unless frozen, encoder) on the labeled pool.
inline void finetune(const nn::SlotsModel& model, const data::SemiLabeledDataset& ds,
                     const std::vector<std::size_t>& pool, const TrainConfig& cfg, const data::SemiLabeledDataset* val,
                     Rng& shuffle_rng, TrainTrace& trace) {
  if (pool.empty()) fail(ErrorKind::contract, "fine-tuning needs labeled samples");
  auto w = cfg.effective_weights();
  w.lambda1 = 0.0;
  if (cfg.ablation != Ablation::two_stage_with_Ls) w.lambda2 = 0.0;
  if (w.lambda2 == 0.0 && w.lambda3 == 0.0) fail(ErrorKind::contract, "fine-tuning with every loss weight at zero");
  auto params = model.classifier_parameters();
  if (!cfg.freeze_encoder) {
    params = model.encoder_parameters();
    for (auto& p : model.classifier_parameters()) params.push_back(p);
  }
  Optimizer opt(std::move(params), cfg.optimizer, cfg.learning_rate);
  Batcher batcher(pool, cfg.batch_size, shuffle_rng);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    batcher.restart();
    EpochAccumulator acc;
    for (std::size_t s = 0; s < batcher.batches(); ++s) {
      StepBatch batch;
      add_labeled(batch, ds, batcher.next());
      if (auto c = guarded_step(model, opt, batch, w, cfg.nt_xent, cfg.freeze_encoder, trace.epochs.size() + 1, s)) {
        acc.add(*c);
      }
    }
    auto rec = acc.finish(trace.epochs.size() + 1, "finetune");
    attach_validation(rec, model, val);
    trace.epochs.push_back(std::move(rec));
  }
}

}  // namespace detail

/// Joint training on the hybrid loss. Each step pairs one unlabeled batch
/// (two augmented views) with one labeled batch; the smaller pool is recycled
/// until the larger one completes an epoch.
inline FitResult fit_end_to_end(const nn::SlotsModel& model, const data::SemiLabeledDataset& train,
                                const data::SemiLabeledDataset* val, const TrainConfig& cfg) {
  cfg.validate();
  const auto w = cfg.effective_weights();
  const auto pools = detail::pools_of(train);
  const bool use_u = w.lambda1 > 0.0 && pools.unlabeled.size() >= 2;
  const bool use_l = (w.lambda2 > 0.0 || w.lambda3 > 0.0) && !pools.labeled.empty();
  if (w.lambda1 > 0.0 && !use_u) {
    std::clog << "warning: unlabeled pool has " << pools.unlabeled.size()
              << " sample(s); the unsupervised contrastive loss is skipped\n";
  }
  if (!use_u && !use_l) fail(ErrorKind::contract, "no loss term can be computed from this dataset");

  Rng shuffle_rng(cfg.seed, Stream::shuffle);
  Rng augment_rng(cfg.seed, Stream::augment);
  detail::Batcher ub(use_u ? pools.unlabeled : std::vector<std::size_t>{}, cfg.batch_size, shuffle_rng);
  detail::Batcher lb(use_l ? pools.labeled : std::vector<std::size_t>{}, cfg.batch_size, shuffle_rng);
  Optimizer opt(model.parameters(), cfg.optimizer, cfg.learning_rate);
  FitResult result;
  result.labeled_hash = detail::labeled_hash(train, pools.labeled);
  const auto steps = std::max(ub.batches(), lb.batches());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (use_u) ub.restart();
    if (use_l) lb.restart();
    detail::EpochAccumulator acc;
    for (std::size_t s = 0; s < steps; ++s) {
      StepBatch batch;
      if (use_u) detail::add_views(batch, train, ub.next(), cfg.augment, augment_rng);
      if (use_l) detail::add_labeled(batch, train, lb.next());
      if (auto c = detail::guarded_step(model, opt, batch, w, cfg.nt_xent, false, epoch, s)) acc.add(*c);
    }
    auto rec = acc.finish(epoch, "joint");
    detail::attach_validation(rec, model, val);
    result.trace.epochs.push_back(std::move(rec));
  }
  return result;
}

/// Pre-train the encoder with L_u on `pretrain_set`'s samples (labels ignored),
/// then fine-tune on the labeled samples of `train`.
inline FitResult fit_two_stage(const nn::SlotsModel& model, const data::SemiLabeledDataset& pretrain_set,
                               const data::SemiLabeledDataset& train, const data::SemiLabeledDataset* val,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (pretrain_set.channels != train.channels || pretrain_set.length < model.config().min_length()) {
    fail(ErrorKind::schema, "pre-training data must match the fine-tuning channel count");
  }
  Rng shuffle_rng(cfg.seed, Stream::shuffle);
  Rng augment_rng(cfg.seed, Stream::augment);
  FitResult result;
  std::vector<std::size_t> all(pretrain_set.size());
  std::iota(all.begin(), all.end(), 0);
  detail::pretrain(model, pretrain_set, all, cfg, val, shuffle_rng, augment_rng, result.trace);
  const auto pools = detail::pools_of(train);
  result.labeled_hash = detail::labeled_hash(train, pools.labeled);
  detail::finetune(model, train, pools.labeled, cfg, val, shuffle_rng, result.trace);
  return result;
}

/// Two-stage training within one dataset: pre-train on its unlabeled pool.
inline FitResult fit_two_stage(const nn::SlotsModel& model, const data::SemiLabeledDataset& train,
                               const data::SemiLabeledDataset* val, const TrainConfig& cfg) {
  cfg.validate();
  Rng shuffle_rng(cfg.seed, Stream::shuffle);
  Rng augment_rng(cfg.seed, Stream::augment);
  FitResult result;
  const auto pools = detail::pools_of(train);
  detail::pretrain(model, train, pools.unlabeled, cfg, val, shuffle_rng, augment_rng, result.trace);
  result.labeled_hash = detail::labeled_hash(train, pools.labeled);
  detail::finetune(model, train, pools.labeled, cfg, val, shuffle_rng, result.trace);
  return result;
}

}  // namespace slots::train
