#pragma once

// Stochastic views of unlabeled series: timestamp masking and jitter.

#include <string>
#include <utility>

#include "slots/errors.hpp"
#include "slots/rng.hpp"
#include "slots/series.hpp"

namespace slots::augment {

enum class Kind { temporal_mask, jitter };

struct AugmentSpec {
  Kind kind = Kind::temporal_mask;
  double mask_prob = 0.5;
  double jitter_sigma = 0.1;

  void validate() const {
    if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
      fail(ErrorKind::contract, "mask probability must lie in [0, 1], got " + std::to_string(mask_prob));
    }
    if (!(jitter_sigma >= 0.0)) {
      fail(ErrorKind::contract, "jitter sigma must be >= 0, got " + std::to_string(jitter_sigma));
    }
  }
};

/// Zeroes whole timestamp columns (every channel) independently with probability p.
inline Series temporal_mask(const Series& x, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::contract, "mask probability must lie in [0, 1]");
  Series out = x;
  for (std::size_t t = 0; t < x.length; ++t) {
    if (rng.bernoulli(p)) {
      for (std::size_t c = 0; c < x.channels; ++c) out.at(c, t) = 0.0;
    }
  }
  return out;
}

/// Adds i.i.d. N(0, sigma^2) noise to every element.
inline Series jitter(const Series& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) fail(ErrorKind::contract, "jitter sigma must be >= 0");
  Series out = x;
  if (sigma == 0.0) return out;
  for (double& v : out.values) v += sigma * rng.normal();
  return out;
}

inline Series apply(const Series& x, const AugmentSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case Kind::temporal_mask: return temporal_mask(x, spec.mask_prob, rng);
    case Kind::jitter: return jitter(x, spec.jitter_sigma, rng);
  }
  return x;
}

/// Two independent draws of the configured augmentation.
inline std::pair<Series, Series> make_views(const Series& x, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  Series first = apply(x, spec, rng);
  Series second = apply(x, spec, rng);
  return {std::move(first), std::move(second)};
}

}  // namespace slots::augment
