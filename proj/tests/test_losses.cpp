#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "op_cases.hpp"
#include "oracles.hpp"
#include "slots/losses.hpp"
#include "test_util.hpp"

using namespace slots;
using ad::Tensor;

namespace {

Tensor from(const oracle::Matrix& m) {
  return Tensor({m.size(), m.front().size()}, oracle::flatten(m));
}

double ntx(const oracle::Matrix& a, const oracle::Matrix& b, double tau,
           losses::NtXentVariant v = losses::NtXentVariant::simclr) {
  return losses::unsup_contrastive(from(a), from(b), tau, v).item();
}

std::vector<int> random_labels(std::mt19937_64& g, std::size_t m, int classes) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(m);
  for (auto& v : y) v = u(g);
  return y;
}

}  // namespace

TEST(Losses, NtXentAllEqualIsLn2) {
  const oracle::Matrix same(2, {0.3, -1.2, 2.0});
  EXPECT_NEAR(ntx(same, same, 0.5), std::numbers::ln2, 1e-12);
}

TEST(Losses, NtXentIdentityPairsMatchEnumeration) {
  const oracle::Matrix e{{1, 0}, {0, 1}};
  EXPECT_NEAR(ntx(e, e, 1.0), oracle::nt_xent(e, e, 1.0), 1e-12);
  // Each anchor: positive sim 1/(1+eps)^2 (eps guards the norm), two orthogonal negatives: -log(e^sim / 2).
  EXPECT_NEAR(ntx(e, e, 1.0), std::log(2.0) - 1.0 / ((1.0 + 1e-12) * (1.0 + 1e-12)), 1e-14);
}

TEST(Losses, NtXentMatchesOracleOnRandomDraws) {
  std::mt19937_64 g(31);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 2 + draw % 5, d = 1 + draw % 7;
    const auto a = oracle::random_matrix(g, n, d), b = oracle::random_matrix(g, n, d);
    const double tau = 0.1 + 0.9 * (draw % 10) / 9.0;
    EXPECT_NEAR(ntx(a, b, tau), oracle::nt_xent(a, b, tau), 1e-10);
    EXPECT_NEAR(ntx(a, b, tau, losses::NtXentVariant::literal), oracle::nt_xent_literal(a, b, tau), 1e-10);
  }
}

TEST(Losses, NtXentScaleAndPermutationInvariant) {
  std::mt19937_64 g(32);
  for (int draw = 0; draw < 20; ++draw) {
    auto a = oracle::random_matrix(g, 5, 4), b = oracle::random_matrix(g, 5, 4);
    const double base = ntx(a, b, 0.5);
    auto a5 = a, b5 = b;
    for (auto& r : a5)
      for (auto& v : r) v *= 5.0;
    for (auto& r : b5)
      for (auto& v : r) v *= 5.0;
    EXPECT_NEAR(ntx(a5, b5, 0.5), base, 1e-10);  // the norm epsilon breaks exact scale invariance
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    oracle::Matrix ap, bp;
    for (auto i : perm) {
      ap.push_back(a[i]);
      bp.push_back(b[i]);
    }
    EXPECT_NEAR(ntx(ap, bp, 0.5), base, 1e-12);
  }
}

TEST(Losses, NtXentDecreasesAsPositiveSimilarityRises) {
  // Orthogonal pairs: only the first positive similarity (cos theta) varies;
  // every other similarity stays exactly 0.
  const auto make = [](double theta, oracle::Matrix& zi, oracle::Matrix& zj) {
    zi.assign(3, std::vector<double>(6, 0.0));
    zj = zi;
    for (std::size_t i = 0; i < 3; ++i) {
      zi[i][2 * i] = 1.0;
      zj[i][2 * i] = i == 0 ? std::cos(theta) : 0.6;
      zj[i][2 * i + 1] = i == 0 ? std::sin(theta) : 0.8;
    }
  };
  double prev = std::numeric_limits<double>::infinity();
  for (double theta = 3.0; theta >= 0.0; theta -= 0.25) {
    oracle::Matrix zi, zj;
    make(theta, zi, zj);
    const double v = ntx(zi, zj, 0.5);
    EXPECT_LT(v, prev) << "theta " << theta;
    prev = v;
  }
}

TEST(Losses, NtXentErrors) {
  const oracle::Matrix one{{1, 2}};
  EXPECT_SLOTS_ERROR(ntx(one, one, 0.5), ErrorKind::degenerate);
  const oracle::Matrix two{{1, 2}, {3, 4}};
  EXPECT_SLOTS_ERROR(ntx(two, two, 0.0), ErrorKind::contract);
  EXPECT_SLOTS_ERROR(ntx(two, two, -1.0), ErrorKind::contract);
  EXPECT_SLOTS_ERROR(losses::unsup_contrastive(from(two), Tensor::zeros({3, 2}), 0.5), ErrorKind::dimension);
}

TEST(Losses, SupConAllEqualIsLn2) {
  const oracle::Matrix same(4, {1.0, 2.0});
  EXPECT_NEAR(losses::sup_contrastive(from(same), {0, 0, 1, 1}, 0.5).item(), std::numbers::ln2, 1e-12);
}

TEST(Losses, SupConOrthogonalClassesMatchEnumeration) {
  const oracle::Matrix z{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
  const std::vector<int> y{0, 0, 1, 1};
  const double v = losses::sup_contrastive(from(z), y, 1.0).item();
  EXPECT_NEAR(v, oracle::sup_con(z, y, 1.0), 1e-12);
  // Each anchor: one positive at sim 1/(1+eps)^2, two negatives at sim 0: -log(e^sim / 2).
  EXPECT_NEAR(v, std::log(2.0) - 1.0 / ((1.0 + 1e-12) * (1.0 + 1e-12)), 1e-14);
}

TEST(Losses, SupConMatchesOracleOnRandomDraws) {
  std::mt19937_64 g(33);
  int checked = 0;
  while (checked < 100) {
    const std::size_t m = 3 + static_cast<std::size_t>(checked % 4);  // M = 2 never has both positives and negatives
    const auto z = oracle::random_matrix(g, m, 3);
    const auto y = random_labels(g, m, 3);
    const double expected = oracle::sup_con(z, y, 0.7);
    if (std::isnan(expected)) {
      EXPECT_SLOTS_ERROR(losses::sup_contrastive(from(z), y, 0.7), ErrorKind::degenerate);
      continue;
    }
    EXPECT_NEAR(losses::sup_contrastive(from(z), y, 0.7).item(), expected, 1e-10);
    ++checked;
  }
}

TEST(Losses, SupConAllEqualEmbeddingsEveryLabelPattern) {
  // Enumerate every labeling of M <= 6 samples over up to 3 classes.
  for (std::size_t m = 2; m <= 6; ++m) {
    std::size_t patterns = 1;
    for (std::size_t i = 0; i < m; ++i) patterns *= 3;
    for (std::size_t code = 0; code < patterns; ++code) {
      std::vector<int> y(m);
      std::size_t c = code;
      for (auto& v : y) {
        v = static_cast<int>(c % 3);
        c /= 3;
      }
      double total = 0.0;
      std::size_t anchors = 0;
      for (std::size_t a = 0; a < m; ++a) {
        const auto same = static_cast<double>(std::count(y.begin(), y.end(), y[a]) - 1);
        const double other = static_cast<double>(m) - 1.0 - same;
        if (same == 0 || other == 0) continue;
        total += std::log(other / same);
        ++anchors;
      }
      const oracle::Matrix z(m, {0.4, -0.2, 1.0});
      if (anchors == 0) {
        EXPECT_SLOTS_ERROR(losses::sup_contrastive(from(z), y, 0.5), ErrorKind::degenerate);
        continue;
      }
      EXPECT_NEAR(losses::sup_contrastive(from(z), y, 0.5).item(), total / static_cast<double>(anchors), 1e-12);
      EXPECT_NEAR(oracle::sup_con(z, y, 0.5), total / static_cast<double>(anchors), 1e-12);
    }
  }
}

TEST(Losses, SupConPermutationInvariantAndCanBeNegative) {
  std::mt19937_64 g(34);
  const auto z = oracle::random_matrix(g, 6, 4);
  const std::vector<int> y{0, 1, 0, 2, 1, 2};
  const double base = losses::sup_contrastive(from(z), y, 0.5).item();
  const std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  oracle::Matrix zp;
  std::vector<int> yp;
  for (auto i : perm) {
    zp.push_back(z[i]);
    yp.push_back(y[i]);
  }
  EXPECT_NEAR(losses::sup_contrastive(from(zp), yp, 0.5).item(), base, 1e-12);

  // Three tight same-class samples vs one far negative: ratio of sums > 1.
  const oracle::Matrix tight{{1, 0}, {1, 0.01}, {1, -0.01}, {-1, 0}};
  EXPECT_LT(losses::sup_contrastive(from(tight), {0, 0, 0, 1}, 0.5).item(), 0.0);
}

TEST(Losses, SupConDegenerateLabels) {
  const oracle::Matrix z{{1, 0}, {0, 1}, {1, 1}};
  EXPECT_SLOTS_ERROR(losses::sup_contrastive(from(z), {1, 1, 1}, 0.5), ErrorKind::degenerate);
  EXPECT_SLOTS_ERROR(losses::sup_contrastive(from(z), {0, 1, 2}, 0.5), ErrorKind::degenerate);
  EXPECT_SLOTS_ERROR(losses::sup_contrastive(from(z), {0, 1}, 0.5), ErrorKind::dimension);
}

TEST(Losses, CrossEntropyUniformIsLnC) {
  for (std::size_t c : {2, 4, 7}) {
    const Tensor logits = Tensor::full({3, c}, 0.37);
    EXPECT_NEAR(losses::cross_entropy(logits, {0, 1, 1}).item(), std::log(static_cast<double>(c)), 1e-12);
  }
  EXPECT_NEAR(losses::cross_entropy(Tensor::zeros({1, 4}), {3}).item(), 1.3862943611198906, 1e-12);
}

TEST(Losses, CrossEntropySaturatedIsZero) {
  EXPECT_NEAR(losses::cross_entropy(Tensor({1, 3}, {1000, 0, 0}), {0}).item(), 0.0, 1e-12);
}

TEST(Losses, CrossEntropyHandExample) {
  const oracle::Matrix logits{{1, 2, 3}, {0, 0, 1}};
  const std::vector<int> y{2, 0};
  EXPECT_NEAR(losses::cross_entropy(from(logits), y).item(), oracle::cross_entropy(logits, y), 1e-12);
}

TEST(Losses, CrossEntropyNonNegativeAndMatchesOracle) {
  std::mt19937_64 g(35);
  for (int draw = 0; draw < 100; ++draw) {
    const auto logits = oracle::random_matrix(g, 5, 4, 3.0);
    const auto y = random_labels(g, 5, 4);
    const double v = losses::cross_entropy(from(logits), y).item();
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, oracle::cross_entropy(logits, y), 1e-10);
  }
}

TEST(Losses, CrossEntropyBadLabel) {
  EXPECT_SLOTS_ERROR(losses::cross_entropy(Tensor::zeros({2, 3}), {0, 3}), ErrorKind::label);
  EXPECT_SLOTS_ERROR(losses::cross_entropy(Tensor::zeros({2, 3}), {-1, 0}), ErrorKind::label);
}

TEST(Losses, HybridUnitWeightSum) {
  losses::LossWeights w{1, 1, 1, 0.5};
  EXPECT_NEAR(losses::hybrid(Tensor::scalar(0.5), Tensor::scalar(0.3), Tensor::scalar(0.2), w).item(), 1.0, 1e-15);
}

TEST(Losses, HybridReducesToClassification) {
  losses::LossWeights w{0, 0, 1, 0.5};
  EXPECT_EQ(losses::hybrid(Tensor::scalar(0.5), Tensor::scalar(0.3), Tensor::scalar(0.2), w).item(), 0.2);
  EXPECT_EQ(losses::hybrid(std::nullopt, std::nullopt, Tensor::scalar(0.2), {1, 1, 1, 0.5}).item(), 0.2);
}

TEST(Losses, HybridAllAbsentIsContractError) {
  EXPECT_SLOTS_ERROR(losses::hybrid(std::nullopt, std::nullopt, std::nullopt, {1, 1, 1, 0.5}), ErrorKind::contract);
}

TEST(Losses, HybridIsHomogeneousInWeights) {
  std::mt19937_64 g(36);
  auto zi = op_cases::random_tensor(g, {4, 6}), zj = op_cases::random_tensor(g, {4, 6});
  auto logits = op_cases::random_tensor(g, {4, 3});
  const std::vector<int> y{0, 1, 0, 1};
  const auto run = [&](double k, std::vector<std::vector<double>>& grads) {
    for (auto* t : {&zi, &zj, &logits}) t->zero_grad();
    ad::Tape tape;
    const auto loss = losses::hybrid(losses::unsup_contrastive(zi, zj, 0.5), losses::sup_contrastive(zi, y, 0.5),
                                     losses::cross_entropy(logits, y), {0.7 * k, 1.3 * k, 0.4 * k, 0.5});
    tape.backward(loss);
    grads.clear();
    for (auto* t : {&zi, &zj, &logits}) grads.emplace_back(t->grad().begin(), t->grad().end());
    return loss.item();
  };
  std::vector<std::vector<double>> g1, g2;
  const double v1 = run(1.0, g1), v2 = run(2.0, g2);
  EXPECT_NEAR(v2, 2.0 * v1, 1e-12);
  for (std::size_t t = 0; t < g1.size(); ++t)
    for (std::size_t i = 0; i < g1[t].size(); ++i) EXPECT_NEAR(g2[t][i], 2.0 * g1[t][i], 1e-12);
}

TEST(Losses, HybridGradCheckOnToyBatch) {
  std::mt19937_64 g(37);
  const std::vector<int> y{0, 1, 1, 0};
  const auto fn = [&](const std::vector<Tensor>& v) {
    return losses::hybrid(losses::unsup_contrastive(v[0], v[1], 0.5), losses::sup_contrastive(v[0], y, 0.5),
                          losses::cross_entropy(v[2], y), {1, 1, 1, 0.5});
  };
  EXPECT_LT(ad::grad_check(fn, {op_cases::random_tensor(g, {4, 8}), op_cases::random_tensor(g, {4, 8}),
                                op_cases::random_tensor(g, {4, 2})}),
            1e-4);
}

TEST(Losses, WeightsValidation) {
  EXPECT_SLOTS_ERROR((losses::LossWeights{1, 1, 1, 0}.validate()), ErrorKind::contract);
  EXPECT_SLOTS_ERROR((losses::LossWeights{-1, 1, 1, 0.5}.validate()), ErrorKind::contract);
  EXPECT_SLOTS_ERROR((losses::LossWeights{0, 0, 0, 0.5}.validate()), ErrorKind::contract);
  EXPECT_NO_THROW((losses::LossWeights{0, 0, 1, 0.5}.validate()));
}
