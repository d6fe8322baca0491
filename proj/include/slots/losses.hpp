#pragma once

// Unsupervised contrastive (NT-Xent), supervised contrastive, cross-entropy,
// and their weighted hybrid. Similarities are cosine; every log-ratio is
// evaluated as a difference of masked log-sum-exps.

#include <optional>
#include <string>
#include <vector>

#include "slots/autodiff.hpp"
#include "slots/errors.hpp"

namespace slots::losses {

/// Which embeddings enter the NT-Xent denominator.
enum class NtXentVariant {
  /// 2N anchors; denominator over the other 2N-2 embeddings (positive and self excluded).
  simclr,
  /// N anchors from the first view; denominator over the second-view embeddings of the other N-1 samples.
  literal,
};

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double tau = 0.5;

  void validate() const {
    if (!(tau > 0.0)) fail(ErrorKind::contract, "temperature must be > 0, got " + std::to_string(tau));
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) fail(ErrorKind::contract, "loss weights must be >= 0");
    if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) {
      fail(ErrorKind::contract, "at least one loss weight must be positive");
    }
  }
};

inline void check_tau(double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::contract, "temperature must be > 0, got " + std::to_string(tau));
}

/// NT-Xent over paired views zi, zj of shape [N, D].
inline ad::Tensor unsup_contrastive(const ad::Tensor& zi, const ad::Tensor& zj, double tau,
                                    NtXentVariant variant = NtXentVariant::simclr) {
  check_tau(tau);
  if (zi.ndim() != 2 || zi.shape() != zj.shape()) {
    fail(ErrorKind::dimension, "unsup_contrastive: views must share a [N, D] shape, got " +
                                   ad::shape_str(zi.shape()) + " and " + ad::shape_str(zj.shape()));
  }
  const std::size_t n = zi.dim(0);
  if (n < 2) fail(ErrorKind::degenerate, "unsup_contrastive needs N >= 2 samples, got " + std::to_string(n));

  if (variant == NtXentVariant::literal) {
    const auto sim = ad::mul_scalar(ad::cosine_similarity_matrix(zi, zj), 1.0 / tau);
    std::vector<char> negatives(n * n, 1);
    std::vector<std::size_t> positives(n);
    for (std::size_t a = 0; a < n; ++a) {
      negatives[a * n + a] = 0;
      positives[a] = a * n + a;
    }
    return ad::mean(ad::sub(ad::masked_logsumexp(sim, negatives), ad::gather(sim, positives)));
  }

  const std::size_t m = 2 * n;
  const auto z = ad::concat({zi, zj}, 0);
  const auto sim = ad::mul_scalar(ad::cosine_similarity_matrix(z, z), 1.0 / tau);
  std::vector<char> negatives(m * m, 1);
  std::vector<std::size_t> positives(m);
  for (std::size_t a = 0; a < m; ++a) {
    const std::size_t p = a < n ? a + n : a - n;
    negatives[a * m + a] = 0;
    negatives[a * m + p] = 0;
    positives[a] = a * m + p;
  }
  return ad::mean(ad::sub(ad::masked_logsumexp(sim, negatives), ad::gather(sim, positives)));
}

/// Ratio-of-sums supervised contrastive loss over z [M, D] with labels y.
/// Per anchor: -log(sum_pos exp(s/tau) / sum_neg exp(s/tau)); averaged over
/// anchors that have at least one positive and one negative. May be negative.
inline ad::Tensor sup_contrastive(const ad::Tensor& z, const std::vector<int>& y, double tau) {
  check_tau(tau);
  if (z.ndim() != 2 || z.dim(0) != y.size()) {
    fail(ErrorKind::dimension, "sup_contrastive: " + std::to_string(y.size()) + " labels for embeddings " +
                                   ad::shape_str(z.shape()));
  }
  const std::size_t m = y.size();
  if (m < 2) fail(ErrorKind::degenerate, "sup_contrastive needs M >= 2 samples");
  std::vector<char> pos(m * m, 0), neg(m * m, 0);
  std::vector<std::size_t> anchors;
  for (std::size_t a = 0; a < m; ++a) {
    bool has_pos = false, has_neg = false;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == a) continue;
      if (y[k] == y[a]) {
        pos[a * m + k] = 1;
        has_pos = true;
      } else {
        neg[a * m + k] = 1;
        has_neg = true;
      }
    }
    if (has_pos && has_neg) anchors.push_back(a);
  }
  if (anchors.empty()) {
    fail(ErrorKind::degenerate, "sup_contrastive: no anchor has both a same-label and a different-label sample");
  }
  const auto sim = ad::mul_scalar(ad::cosine_similarity_matrix(z, z), 1.0 / tau);
  const auto per_anchor = ad::sub(ad::masked_logsumexp(sim, neg), ad::masked_logsumexp(sim, pos));
  if (anchors.size() == m) return ad::mean(per_anchor);
  return ad::mean(ad::gather(per_anchor, anchors));
}

/// Mean softmax cross-entropy of logits [M, C] against labels in [0, C).
inline ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& y) {
  if (logits.ndim() != 2 || logits.dim(0) != y.size()) {
    fail(ErrorKind::dimension, "cross_entropy: " + std::to_string(y.size()) + " labels for logits " +
                                   ad::shape_str(logits.shape()));
  }
  if (y.empty()) fail(ErrorKind::contract, "cross_entropy on an empty batch");
  const std::size_t c = logits.dim(1);
  std::vector<std::size_t> picks(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= c) {
      fail(ErrorKind::label, "label " + std::to_string(y[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    picks[i] = i * c + static_cast<std::size_t>(y[i]);
  }
  return ad::mul_scalar(ad::mean(ad::gather(ad::log_softmax(logits, 1), std::move(picks))), -1.0);
}

/// lambda1*L_u + lambda2*L_s + lambda3*L_c; absent components contribute exactly 0.
inline ad::Tensor hybrid(const std::optional<ad::Tensor>& loss_u, const std::optional<ad::Tensor>& loss_s,
                         const std::optional<ad::Tensor>& loss_c, const LossWeights& w) {
  std::optional<ad::Tensor> total;
  const auto accumulate = [&](const std::optional<ad::Tensor>& part, double lambda) {
    if (!part) return;
    auto term = ad::mul_scalar(*part, lambda);
    total = total ? ad::add(*total, term) : term;
  };
  accumulate(loss_u, w.lambda1);
  accumulate(loss_s, w.lambda2);
  accumulate(loss_c, w.lambda3);
  if (!total) fail(ErrorKind::contract, "hybrid loss with every component absent");
  return *total;
}

}  // namespace slots::losses
