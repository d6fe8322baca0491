#pragma once

// Every differentiable op (and the three losses) as a scalar-valued closure
// over random inputs, for finite-difference gradient checks. Non-scalar op
// outputs are contracted with a fixed random weight tensor so every output
// component contributes to the checked gradient.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "slots/autodiff.hpp"
#include "slots/losses.hpp"

namespace op_cases {

using slots::ad::Shape;
using slots::ad::Tensor;
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

struct Case {
  std::string name;
  Fn fn;
  std::vector<Tensor> inputs;
};

inline Tensor random_tensor(std::mt19937_64& g, Shape shape, double lo = -1.0, double hi = 1.0, double gap = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(slots::ad::numel(shape));
  for (auto& x : v) {
    do {
      x = u(g);
    } while (std::abs(x) < gap);  // keep away from non-smooth points when asked
  }
  return Tensor(std::move(shape), std::move(v), true);
}

/// Scalar sum(out * w) with w drawn once per case.
inline Fn contract(std::mt19937_64& g, Shape out_shape, std::function<Tensor(const std::vector<Tensor>&)> op) {
  auto w = random_tensor(g, std::move(out_shape));
  w.set_requires_grad(false);
  return [w, op](const std::vector<Tensor>& in) { return slots::ad::sum(slots::ad::mul(op(in), w)); };
}

/// All cases for one random draw; batch-shaped cases use `batch` samples.
inline std::vector<Case> all_cases(std::mt19937_64& g, std::size_t batch = 4) {
  namespace ad = slots::ad;
  namespace ls = slots::losses;
  const std::size_t B = batch;
  std::vector<Case> cs;
  const auto add = [&](std::string name, Shape out, std::function<Tensor(const std::vector<Tensor>&)> op,
                       std::vector<Tensor> in) { cs.push_back({std::move(name), contract(g, out, op), std::move(in)}); };

  add("add", {B, 3}, [](auto& v) { return ad::add(v[0], v[1]); }, {random_tensor(g, {B, 3}), random_tensor(g, {B, 3})});
  add("sub", {B, 3}, [](auto& v) { return ad::sub(v[0], v[1]); }, {random_tensor(g, {B, 3}), random_tensor(g, {B, 3})});
  add("mul", {B, 3}, [](auto& v) { return ad::mul(v[0], v[1]); }, {random_tensor(g, {B, 3}), random_tensor(g, {B, 3})});
  add("mul_scalar", {B, 3}, [](auto& v) { return ad::mul_scalar(v[0], -2.5); }, {random_tensor(g, {B, 3})});
  add("relu", {B, 5}, [](auto& v) { return ad::relu(v[0]); }, {random_tensor(g, {B, 5}, -1, 1, 0.05)});
  add("exp", {B, 3}, [](auto& v) { return ad::exp(v[0]); }, {random_tensor(g, {B, 3})});
  add("log", {B, 3}, [](auto& v) { return ad::log(v[0]); }, {random_tensor(g, {B, 3}, 0.2, 2.0)});
  add("add_bias", {B, 3, 5}, [](auto& v) { return ad::add_bias(v[0], v[1], 1); },
      {random_tensor(g, {B, 3, 5}), random_tensor(g, {3})});
  cs.push_back({"sum", [](auto& v) { return ad::sum(ad::mul(v[0], v[0])); }, {random_tensor(g, {B, 3})}});
  cs.push_back({"mean", [](auto& v) { return ad::mean(ad::mul(v[0], v[0])); }, {random_tensor(g, {B, 3})}});
  add("sum_axis", {B, 4}, [](auto& v) { return ad::sum(v[0], 1); }, {random_tensor(g, {B, 3, 4})});
  add("mean_axis", {B, 3}, [](auto& v) { return ad::mean(v[0], 2); }, {random_tensor(g, {B, 3, 4})});
  add("matmul", {B, 2}, [](auto& v) { return ad::matmul(v[0], v[1]); },
      {random_tensor(g, {B, 3}), random_tensor(g, {3, 2})});
  add("reshape", {B * 3, 2}, [B](auto& v) { return ad::reshape(v[0], {B * 3, 2}); }, {random_tensor(g, {B, 6})});
  add("permute", {4, B, 3}, [](auto& v) { return ad::permute(v[0], {2, 0, 1}); }, {random_tensor(g, {B, 3, 4})});
  add("transpose", {3, B}, [](auto& v) { return ad::transpose(v[0]); }, {random_tensor(g, {B, 3})});
  add("concat", {B, 5}, [](auto& v) { return ad::concat({v[0], v[1]}, 1); },
      {random_tensor(g, {B, 2}), random_tensor(g, {B, 3})});
  add("slice", {B, 2}, [](auto& v) { return ad::slice(v[0], 1, 1, 3); }, {random_tensor(g, {B, 4})});
  add("gather", {3}, [](auto& v) { return ad::gather(v[0], {0, 5, 5}); }, {random_tensor(g, {B, 3})});
  add("l2_normalize", {B, 3}, [](auto& v) { return ad::l2_normalize(v[0], 1); }, {random_tensor(g, {B, 3})});
  add("cosine_similarity_matrix", {B, B + 1}, [](auto& v) { return ad::cosine_similarity_matrix(v[0], v[1]); },
      {random_tensor(g, {B, 3}), random_tensor(g, {B + 1, 3})});
  add("cosine_similarity_matrix_self", {B, B}, [](auto& v) { return ad::cosine_similarity_matrix(v[0], v[0]); },
      {random_tensor(g, {B, 3})});
  add("softmax", {B, 3}, [](auto& v) { return ad::softmax(v[0], 1); }, {random_tensor(g, {B, 3})});
  add("log_softmax", {B, 3}, [](auto& v) { return ad::log_softmax(v[0], 1); }, {random_tensor(g, {B, 3})});
  {
    std::vector<char> mask(B * 3, 1);
    mask[0] = 0;
    mask[4] = 0;
    add("masked_logsumexp", {B}, [mask](auto& v) { return ad::masked_logsumexp(v[0], mask); },
        {random_tensor(g, {B, 3})});
  }
  add("conv1d", {B, 2, 7}, [](auto& v) { return ad::conv1d(v[0], v[1]); },
      {random_tensor(g, {B, 3, 9}), random_tensor(g, {2, 3, 3})});
  add("conv1d_dilated_padded", {B, 2, 9}, [](auto& v) { return ad::conv1d(v[0], v[1], {.dilation = 2, .stride = 1, .padding = 2}); },
      {random_tensor(g, {B, 3, 9}), random_tensor(g, {2, 3, 3})});
  add("conv1d_strided", {B, 2, 4}, [](auto& v) { return ad::conv1d(v[0], v[1], {.dilation = 1, .stride = 2, .padding = 0}); },
      {random_tensor(g, {B, 3, 9}), random_tensor(g, {2, 3, 3})});
  add("depthwise_conv1d", {B, 6, 8}, [](auto& v) { return ad::depthwise_conv1d(v[0], v[1], 2, {.dilation = 1, .stride = 1, .padding = 1}); },
      {random_tensor(g, {B, 3, 8}), random_tensor(g, {6, 3})});
  add("avg_pool", {B, 3, 4}, [](auto& v) { return ad::avg_pool(v[0], 2); }, {random_tensor(g, {B, 3, 8})});

  std::vector<int> y(B);
  for (std::size_t i = 0; i < B; ++i) y[i] = static_cast<int>(i % 2);
  cs.push_back({"loss_unsup_contrastive", [](auto& v) { return ls::unsup_contrastive(v[0], v[1], 0.5); },
                {random_tensor(g, {B, 8}), random_tensor(g, {B, 8})}});
  cs.push_back({"loss_unsup_contrastive_literal",
                [](auto& v) { return ls::unsup_contrastive(v[0], v[1], 0.5, ls::NtXentVariant::literal); },
                {random_tensor(g, {B, 8}), random_tensor(g, {B, 8})}});
  cs.push_back({"loss_sup_contrastive", [y](auto& v) { return ls::sup_contrastive(v[0], y, 0.5); },
                {random_tensor(g, {B, 8})}});
  cs.push_back({"loss_cross_entropy", [y](auto& v) { return ls::cross_entropy(v[0], y); }, {random_tensor(g, {B, 3})}});
  return cs;
}

}  // namespace op_cases
