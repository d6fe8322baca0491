#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Plain loops over std::vector; nothing here calls the library's
// tensor ops.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix random_matrix(std::mt19937_64& g, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = n(g);
  return m;
}

inline std::vector<double> flatten(const Matrix& m) {
  std::vector<double> out;
  for (const auto& r : m) out.insert(out.end(), r.begin(), r.end());
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / ((std::sqrt(aa) + 1e-12) * (std::sqrt(bb) + 1e-12));
}

/// SimCLR-style NT-Xent by enumerating every anchor and every denominator term.
inline double nt_xent(const Matrix& zi, const Matrix& zj, double tau) {
  const std::size_t n = zi.size();
  Matrix all = zi;
  all.insert(all.end(), zj.begin(), zj.end());
  double total = 0.0;
  for (std::size_t a = 0; a < 2 * n; ++a) {
    const std::size_t p = a < n ? a + n : a - n;
    const double num = std::exp(cosine(all[a], all[p]) / tau);
    double den = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k)
      if (k != a && k != p) den += std::exp(cosine(all[a], all[k]) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(2 * n);
}

/// Literal variant: anchors from view i, denominator over the other samples' view j.
inline double nt_xent_literal(const Matrix& zi, const Matrix& zj, double tau) {
  const std::size_t n = zi.size();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double num = std::exp(cosine(zi[a], zj[a]) / tau);
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != a) den += std::exp(cosine(zi[a], zj[k]) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(n);
}

/// Ratio-of-sums supervised contrastive loss; NaN when no anchor qualifies.
inline double sup_con(const Matrix& z, const std::vector<int>& y, double tau) {
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t a = 0; a < z.size(); ++a) {
    double pos = 0.0, neg = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k == a) continue;
      const double e = std::exp(cosine(z[a], z[k]) / tau);
      if (y[k] == y[a]) {
        pos += e;
        ++np;
      } else {
        neg += e;
        ++nn;
      }
    }
    if (np == 0 || nn == 0) continue;
    total += -std::log(pos / neg);
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : std::nan("");
}

inline double cross_entropy(const Matrix& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double z = 0.0;
    for (double l : logits[i]) z += std::exp(l);
    total += -std::log(std::exp(logits[i][static_cast<std::size_t>(y[i])]) / z);
  }
  return total / static_cast<double>(logits.size());
}

/// Fraction of (positive, negative) pairs ordered correctly; ties count 1/2.
inline double pairwise_auroc(const std::vector<int>& positive, const std::vector<double>& s) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!positive[i] || positive[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return wins / pairs;
}

/// Step-wise PR area from an explicit sweep: for each unique threshold
/// (descending), predict positive when score >= threshold.
inline double sweep_auprc(const std::vector<int>& positive, const std::vector<double>& s) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  const double total_pos = static_cast<double>(std::count(positive.begin(), positive.end(), 1));
  double area = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= th) (positive[i] ? tp : fp) += 1.0;
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return area;
}

/// Macro one-vs-rest average of a binary oracle over classes with both outcomes.
template <class Binary>
double macro_ovr(const std::vector<int>& y, const Matrix& scores, Binary binary) {
  const std::size_t classes = scores.front().size();
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<int> positive(y.size());
    std::vector<double> col(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      positive[i] = y[i] == static_cast<int>(c);
      col[i] = scores[i][c];
    }
    const auto np = std::count(positive.begin(), positive.end(), 1);
    if (np == 0 || np == static_cast<long>(y.size())) continue;
    total += binary(positive, col);
    ++used;
  }
  return total / static_cast<double>(used);
}

/// Energy of x at `cycles` cycles per series (single-bin DFT magnitude squared).
inline double spectral_energy(const std::vector<double>& x, double cycles) {
  std::complex<double> acc{0.0, 0.0};
  const double n = static_cast<double>(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * cycles * static_cast<double>(t) / n);
  }
  return std::norm(acc);
}

}  // namespace oracle
