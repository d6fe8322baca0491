#pragma once

// Accuracy, macro precision/recall/F1, one-vs-rest AUROC and AUPRC, and
// mean/std aggregation over repeated runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "slots/errors.hpp"

namespace slots::metrics {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Macro averages run over all C classes. Empty precision/recall denominators
/// count as 0, and a class seen in neither y_true nor y_pred contributes 0.
inline ClassificationMetrics classification_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                                    std::size_t num_classes) {
  if (y_true.empty()) fail(ErrorKind::contract, "classification_metrics on empty input");
  if (y_true.size() != y_pred.size()) fail(ErrorKind::dimension, "y_true and y_pred differ in length");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes || static_cast<std::size_t>(p) >= num_classes) {
      fail(ErrorKind::label, "label or prediction outside [0, " + std::to_string(num_classes) + ")");
    }
    if (t == p) {
      ++correct;
      ++tp[static_cast<std::size_t>(t)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
  std::size_t absent = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) ++absent;
    const double prec = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    const double rec = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    m.precision += prec;
    m.recall += rec;
    m.f1 += f1;
  }
  if (absent > 0) {
    std::clog << "warning: " << absent << " class(es) absent from both labels and predictions count as 0\n";
  }
  const auto c = static_cast<double>(num_classes);
  m.precision /= c;
  m.recall /= c;
  m.f1 /= c;
  return m;
}

namespace detail {

inline void check_scores(const std::vector<int>& y_true, const std::vector<std::vector<double>>& scores) {
  if (y_true.empty() || y_true.size() != scores.size()) {
    fail(ErrorKind::dimension, "scores must have one row per label");
  }
  const auto c = scores.front().size();
  for (const auto& row : scores)
    if (row.size() != c) fail(ErrorKind::dimension, "ragged score matrix");
}

// Binary AUROC by midranks: (sum of positive ranks - P(P+1)/2) / (P N).
inline double binary_auroc(const std::vector<char>& positive, const std::vector<double>& score) {
  const std::size_t n = score.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && score[order[j]] == score[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += midrank;
        ++pos;
      }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(n - pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

// Step-wise area under the precision-recall curve: sum over descending unique
// thresholds of (recall gain) * precision.
inline double binary_auprc(const std::vector<char>& positive, const std::vector<double>& score) {
  const std::size_t n = score.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  const auto total_pos = static_cast<double>(std::count(positive.begin(), positive.end(), 1));
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && score[order[j]] == score[order[i]]) {
      if (positive[order[j]]) ++tp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

template <class Binary>
double one_vs_rest(const std::vector<int>& y_true, const std::vector<std::vector<double>>& scores, Binary binary,
                   const char* name) {
  check_scores(y_true, scores);
  const std::size_t classes = scores.front().size();
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<char> positive(y_true.size());
    std::vector<double> column(y_true.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      positive[i] = y_true[i] == static_cast<int>(c);
      pos += static_cast<std::size_t>(positive[i]);
      column[i] = scores[i][c];
    }
    if (pos == 0 || pos == y_true.size()) continue;
    total += binary(positive, column);
    ++used;
  }
  if (used == 0) fail(ErrorKind::degenerate, std::string(name) + ": no class has both positives and negatives");
  return total / static_cast<double>(used);
}

}  // namespace detail

/// Macro one-vs-rest AUROC (Mann-Whitney, ties count 1/2). scores is [M][C].
inline double auroc_ovr(const std::vector<int>& y_true, const std::vector<std::vector<double>>& scores) {
  return detail::one_vs_rest(y_true, scores, detail::binary_auroc, "auroc_ovr");
}

/// Macro one-vs-rest step-wise AUPRC.
inline double auprc(const std::vector<int>& y_true, const std::vector<std::vector<double>>& scores) {
  return detail::one_vs_rest(y_true, scores, detail::binary_auprc, "auprc");
}

/// The six reported metrics of one run.
struct RunMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auroc = 0.0, auprc = 0.0;

  static constexpr std::size_t kCount = 6;
  static constexpr const char* kNames[kCount] = {"accuracy", "precision", "recall", "f1", "auroc", "auprc"};

  double get(std::size_t i) const {
    const double v[kCount] = {accuracy, precision, recall, f1, auroc, auprc};
    return v[i];
  }
};

inline RunMetrics evaluate_predictions(const std::vector<int>& y_true, const std::vector<std::vector<double>>& probs,
                                       std::size_t num_classes) {
  std::vector<int> pred(y_true.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pred[i] = static_cast<int>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  const auto cm = classification_metrics(y_true, pred, num_classes);
  return {cm.accuracy, cm.precision, cm.recall, cm.f1, auroc_ovr(y_true, probs), auprc(y_true, probs)};
}

/// Per-run values plus mean and sample standard deviation (0 for a single run).
struct EvalReport {
  std::vector<RunMetrics> runs;

  RunMetrics mean() const {
    if (runs.empty()) fail(ErrorKind::contract, "EvalReport with no runs");
    RunMetrics m;
    double* out[RunMetrics::kCount] = {&m.accuracy, &m.precision, &m.recall, &m.f1, &m.auroc, &m.auprc};
    for (std::size_t k = 0; k < RunMetrics::kCount; ++k) {
      double s = 0.0;
      for (const auto& r : runs) s += r.get(k);
      *out[k] = s / static_cast<double>(runs.size());
    }
    return m;
  }

  RunMetrics stddev() const {
    const RunMetrics mu = mean();
    RunMetrics sd;
    if (runs.size() < 2) return sd;
    double* out[RunMetrics::kCount] = {&sd.accuracy, &sd.precision, &sd.recall, &sd.f1, &sd.auroc, &sd.auprc};
    for (std::size_t k = 0; k < RunMetrics::kCount; ++k) {
      double s = 0.0;
      for (const auto& r : runs) s += (r.get(k) - mu.get(k)) * (r.get(k) - mu.get(k));
      *out[k] = std::sqrt(s / static_cast<double>(runs.size() - 1));
    }
    return sd;
  }
};

}  // namespace slots::metrics
