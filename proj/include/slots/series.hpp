#pragma once

#include <cstddef>
#include <vector>

namespace slots {

/// One multichannel series, row-major (channel, time).
struct Series {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;

  Series() = default;
  Series(std::size_t c, std::size_t l) : channels(c), length(l), values(c * l, 0.0) {}
  Series(std::size_t c, std::size_t l, std::vector<double> v) : channels(c), length(l), values(std::move(v)) {}

  double& at(std::size_t c, std::size_t t) { return values[c * length + t]; }
  double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }

  bool operator==(const Series&) const = default;
};

}  // namespace slots
