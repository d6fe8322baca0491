#pragma once

// Encoder f (dilated separable-convolution blocks) and linear classifier g.
//
// Activations live on a (sensor-channel x time) plane with a feature-map
// axis, stored as [batch * sensors, features, time]. Each block applies
//   1x1 pointwise conv -> relu
//   1x3 temporal conv (dilated)             \ factored 3x3
//   3x1 cross-channel conv -> relu          /
//   depthwise temporal conv, multiplier 2 -> relu
//   2x1 average pooling over time
// A global average over (sensor, time) and a linear map produce the embedding.
// With a single sensor channel the 3x1 conv has nothing to mix and is built as
// a 1x1 conv instead.

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slots/autodiff.hpp"
#include "slots/errors.hpp"
#include "slots/rng.hpp"

namespace slots::nn {

inline constexpr std::size_t kDepthMultiplier = 2;
inline constexpr std::size_t kPoolWindow = 2;

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::size_t num_blocks = 3;
  std::vector<std::size_t> dilations{1, 2, 4};
  std::vector<std::size_t> feature_channels{16, 16, 16};
  std::size_t embed_dim = 64;

  void validate() const {
    if (num_blocks < 1) fail(ErrorKind::config, "encoder needs at least one block");
    if (dilations.size() != num_blocks) {
      fail(ErrorKind::config, "expected " + std::to_string(num_blocks) + " dilations, got " +
                                  std::to_string(dilations.size()));
    }
    if (feature_channels.size() != num_blocks) {
      fail(ErrorKind::config, "expected " + std::to_string(num_blocks) + " feature widths, got " +
                                  std::to_string(feature_channels.size()));
    }
    if (in_channels < 1 || embed_dim < 1) fail(ErrorKind::config, "channel counts must be >= 1");
    for (auto d : dilations)
      if (d < 1) fail(ErrorKind::config, "dilations must be >= 1");
    for (auto f : feature_channels)
      if (f < 1) fail(ErrorKind::config, "feature widths must be >= 1");
  }

  /// Shortest series that survives one pooling per block.
  std::size_t min_length() const { return std::size_t{1} << num_blocks; }

  /// Width of the final block's output (after the depth multiplier).
  std::size_t output_features() const { return feature_channels.back() * kDepthMultiplier; }

  bool operator==(const EncoderConfig&) const = default;
};

struct Parameter {
  std::string name;
  ad::Tensor value;
};

struct Block {
  std::size_t dilation = 1;
  ad::Tensor pointwise_weight, pointwise_bias;  // [F, Cin, 1], [F]
  ad::Tensor temporal_weight, temporal_bias;    // [F, F, 3], [F]
  ad::Tensor cross_weight, cross_bias;          // [F, F, 3] (or [F, F, 1] for one sensor), [F]
  ad::Tensor depthwise_weight, depthwise_bias;  // [2F, 3], [2F]

  std::size_t factored_pair_weights() const { return temporal_weight.numel() + cross_weight.numel(); }
};

/// Weights of a dense 3x3 layer with the same channel counts as the factored pair.
inline std::size_t full_kernel_weights(std::size_t channels) { return channels * channels * 9; }

namespace detail {

inline ad::Tensor kaiming_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return ad::Tensor(std::move(shape), std::move(v), true);
}

inline ad::Tensor zero_bias(std::size_t n) { return ad::Tensor::zeros({n}, true); }

}  // namespace detail

/// Builds block `index`: pointwise, temporal, cross-channel and depthwise layers.
inline Block build_block(const EncoderConfig& cfg, std::size_t index, Rng& rng) {
  cfg.validate();
  if (index >= cfg.num_blocks) fail(ErrorKind::config, "block index out of range");
  const std::size_t in = index == 0 ? 1 : cfg.feature_channels[index - 1] * kDepthMultiplier;
  const std::size_t f = cfg.feature_channels[index];
  const std::size_t cross_k = cfg.in_channels > 1 ? 3 : 1;
  Block b;
  b.dilation = cfg.dilations[index];
  b.pointwise_weight = detail::kaiming_uniform({f, in, 1}, in, rng);
  b.pointwise_bias = detail::zero_bias(f);
  b.temporal_weight = detail::kaiming_uniform({f, f, 3}, f * 3, rng);
  b.temporal_bias = detail::zero_bias(f);
  b.cross_weight = detail::kaiming_uniform({f, f, cross_k}, f * cross_k, rng);
  b.cross_bias = detail::zero_bias(f);
  b.depthwise_weight = detail::kaiming_uniform({f * kDepthMultiplier, 3}, 3, rng);
  b.depthwise_bias = detail::zero_bias(f * kDepthMultiplier);
  return b;
}

class SlotsModel {
 public:
  SlotsModel(EncoderConfig config, std::size_t num_classes, std::uint64_t seed)
      : config_(std::move(config)), num_classes_(num_classes) {
    config_.validate();
    if (num_classes_ < 2) fail(ErrorKind::config, "classifier needs at least 2 classes");
    Rng rng(seed, Stream::init);
    for (std::size_t i = 0; i < config_.num_blocks; ++i) blocks_.push_back(build_block(config_, i, rng));
    const auto feat = config_.output_features();
    head_weight_ = detail::kaiming_uniform({feat, config_.embed_dim}, feat, rng);
    head_bias_ = detail::zero_bias(config_.embed_dim);
    classifier_weight_ = detail::kaiming_uniform({config_.embed_dim, num_classes_}, config_.embed_dim, rng);
    classifier_bias_ = detail::zero_bias(num_classes_);
  }

  const EncoderConfig& config() const { return config_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const ad::Tensor& head_weight() const { return head_weight_; }
  const ad::Tensor& head_bias() const { return head_bias_; }
  const ad::Tensor& classifier_weight() const { return classifier_weight_; }
  const ad::Tensor& classifier_bias() const { return classifier_bias_; }

  std::vector<Parameter> encoder_parameters() const {
    std::vector<Parameter> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto p = "encoder.block" + std::to_string(i) + ".";
      const Block& b = blocks_[i];
      out.push_back({p + "pointwise.weight", b.pointwise_weight});
      out.push_back({p + "pointwise.bias", b.pointwise_bias});
      out.push_back({p + "temporal.weight", b.temporal_weight});
      out.push_back({p + "temporal.bias", b.temporal_bias});
      out.push_back({p + "cross_channel.weight", b.cross_weight});
      out.push_back({p + "cross_channel.bias", b.cross_bias});
      out.push_back({p + "depthwise.weight", b.depthwise_weight});
      out.push_back({p + "depthwise.bias", b.depthwise_bias});
    }
    out.push_back({"encoder.head.weight", head_weight_});
    out.push_back({"encoder.head.bias", head_bias_});
    return out;
  }

  std::vector<Parameter> classifier_parameters() const {
    return {{"classifier.weight", classifier_weight_}, {"classifier.bias", classifier_bias_}};
  }

  std::vector<Parameter> parameters() const {
    auto out = encoder_parameters();
    for (auto& p : classifier_parameters()) out.push_back(std::move(p));
    return out;
  }

  /// Copies share parameter storage; clone() does not.
  SlotsModel clone() const {
    SlotsModel copy(config_, num_classes_, 0);
    const auto src = parameters();
    auto dst = copy.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      std::copy(src[i].value.data().begin(), src[i].value.data().end(), dst[i].value.mutable_data().begin());
    }
    return copy;
  }

 private:
  EncoderConfig config_;
  std::size_t num_classes_;
  std::vector<Block> blocks_;
  ad::Tensor head_weight_, head_bias_;
  ad::Tensor classifier_weight_, classifier_bias_;
};

namespace detail {

// [B*H, F, L] -> 3x1 conv over the sensor axis -> [B*H, F, L]
inline ad::Tensor cross_channel(const ad::Tensor& h, const Block& b, std::size_t batch, std::size_t sensors) {
  if (sensors == 1) return ad::add_bias(ad::conv1d(h, b.cross_weight), b.cross_bias, 1);
  const std::size_t f = h.dim(1), len = h.dim(2);
  auto t = ad::reshape(h, {batch, sensors, f, len});
  t = ad::permute(t, {0, 3, 2, 1});
  t = ad::reshape(t, {batch * len, f, sensors});
  t = ad::conv1d(t, b.cross_weight, {.dilation = 1, .stride = 1, .padding = 1});
  t = ad::reshape(t, {batch, len, f, sensors});
  t = ad::permute(t, {0, 3, 2, 1});
  t = ad::reshape(t, {batch * sensors, f, len});
  return ad::add_bias(t, b.cross_bias, 1);
}

}  // namespace detail

/// Maps a batch [B, sensors, L] to embeddings [B, embed_dim].
inline ad::Tensor encode(const SlotsModel& model, const ad::Tensor& batch) {
  const auto& cfg = model.config();
  if (batch.ndim() != 3 || batch.dim(1) != cfg.in_channels) {
    fail(ErrorKind::dimension, "encode: expected [B, " + std::to_string(cfg.in_channels) + ", L], got " +
                                   ad::shape_str(batch.shape()));
  }
  const std::size_t B = batch.dim(0), H = batch.dim(1), L = batch.dim(2);
  if (L < cfg.min_length()) {
    fail(ErrorKind::contract, "input length " + std::to_string(L) + " is too short; need L >= " +
                                  std::to_string(cfg.min_length()) + " for " + std::to_string(cfg.num_blocks) +
                                  " blocks");
  }
  ad::Tensor h = ad::reshape(batch, {B * H, 1, L});
  for (const Block& b : model.blocks()) {
    h = ad::relu(ad::add_bias(ad::conv1d(h, b.pointwise_weight), b.pointwise_bias, 1));
    h = ad::add_bias(ad::conv1d(h, b.temporal_weight, {.dilation = b.dilation, .stride = 1, .padding = b.dilation}),
                     b.temporal_bias, 1);
    h = ad::relu(detail::cross_channel(h, b, B, H));
    h = ad::relu(ad::add_bias(
        ad::depthwise_conv1d(h, b.depthwise_weight, kDepthMultiplier, {.dilation = 1, .stride = 1, .padding = 1}),
        b.depthwise_bias, 1));
    h = ad::avg_pool(h, kPoolWindow);
  }
  const std::size_t feat = h.dim(1), len = h.dim(2);
  ad::Tensor pooled;
  if (H == 1) {
    pooled = ad::mean(h, 2);
  } else {
    auto t = ad::reshape(h, {B, H, feat, len});
    t = ad::permute(t, {0, 2, 1, 3});
    pooled = ad::mean(ad::reshape(t, {B, feat, H * len}), 2);
  }
  return ad::add_bias(ad::matmul(pooled, model.head_weight()), model.head_bias(), 1);
}

/// Logits zW + b; softmax is left to the loss.
inline ad::Tensor classify(const SlotsModel& model, const ad::Tensor& z) {
  if (z.ndim() != 2 || z.dim(1) != model.config().embed_dim) {
    fail(ErrorKind::dimension, "classify: expected [B, " + std::to_string(model.config().embed_dim) + "], got " +
                                   ad::shape_str(z.shape()));
  }
  return ad::add_bias(ad::matmul(z, model.classifier_weight()), model.classifier_bias(), 1);
}

// ---------------------------------------------------------------------------
// Checkpoints: a plain-text header terminated by "END\n", then per parameter
// u32 name length, name bytes, u32 rank, u64 extents, little-endian doubles.

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail {

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorKind::parse, "truncated checkpoint " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const SlotsModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write checkpoint " + path);
  const auto& c = model.config();
  const auto params = model.parameters();
  os << "SLOTS-CHECKPOINT 1\n"
     << "in_channels=" << c.in_channels << "\n"
     << "num_blocks=" << c.num_blocks << "\n"
     << "dilations=" << detail::join(c.dilations) << "\n"
     << "feature_channels=" << detail::join(c.feature_channels) << "\n"
     << "embed_dim=" << c.embed_dim << "\n"
     << "num_classes=" << model.num_classes() << "\n"
     << "parameters=" << params.size() << "\n"
     << "END\n";
  for (const auto& p : params) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.ndim()));
    for (auto d : p.value.shape()) detail::put<std::uint64_t>(os, d);
    const auto data = p.value.data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) fail(ErrorKind::io, "failed writing checkpoint " + path);
}

inline SlotsModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != "SLOTS-CHECKPOINT 1") fail(ErrorKind::parse, "not a checkpoint: " + path);
  std::map<std::string, std::string> header;
  while (std::getline(is, line) && line != "END") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::parse, "bad checkpoint header line '" + line + "'");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "END") fail(ErrorKind::parse, "checkpoint header not terminated: " + path);
  EncoderConfig cfg;
  std::size_t num_classes = 0, count = 0;
  try {
    cfg.in_channels = std::stoull(header.at("in_channels"));
    cfg.num_blocks = std::stoull(header.at("num_blocks"));
    cfg.dilations = detail::split_sizes(header.at("dilations"));
    cfg.feature_channels = detail::split_sizes(header.at("feature_channels"));
    cfg.embed_dim = std::stoull(header.at("embed_dim"));
    num_classes = std::stoull(header.at("num_classes"));
    count = std::stoull(header.at("parameters"));
  } catch (const std::exception&) {
    fail(ErrorKind::parse, "incomplete checkpoint header in " + path);
  }
  SlotsModel model(cfg, num_classes, 0);
  auto params = model.parameters();
  if (count != params.size()) fail(ErrorKind::schema, "checkpoint parameter count does not match architecture");
  for (auto& p : params) {
    const auto len = detail::get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail(ErrorKind::parse, "truncated checkpoint " + path);
    if (name != p.name) fail(ErrorKind::schema, "checkpoint has '" + name + "' where '" + p.name + "' was expected");
    const auto rank = detail::get<std::uint32_t>(is, path);
    ad::Shape shape(rank);
    for (auto& d : shape) d = detail::get<std::uint64_t>(is, path);
    if (shape != p.value.shape()) fail(ErrorKind::schema, "shape mismatch for " + name);
    auto dst = p.value.mutable_data();
    if (!is.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
      fail(ErrorKind::parse, "truncated checkpoint " + path);
    }
  }
  return model;
}

}  // namespace slots::nn
