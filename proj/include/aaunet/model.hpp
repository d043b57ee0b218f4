#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aaunet/attention.hpp"
#include "aaunet/params.hpp"
#include "aaunet/segmask.hpp"
#include "aaunet/tensor.hpp"

namespace aaunet {

struct EncoderConfig {
  std::vector<int> stage_depths{2, 2, 2, 2};
  int base_width = 32;
  int cardinality = 1;
  int radix = 2;
  int input_channels = 3;
  int stem_skip_width = 16;
  bool deep_stem = true;  // triple 3x3 stem; false selects a single 7x7

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::vector<int> decoder_widths{128, 64, 32, 16};
  std::vector<int> skip_reduced_widths{128, 64, 32, 16};
  bool use_space_attention = true;
  bool use_channel_attention = true;
  int num_classes = 8;
  int channel_reduction = 4;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// Ablation row label: "RSU", "RSU+S", "RSU+C" or "RSU+SC".
  std::string variant_name() const;
};

/// Stem skip (full resolution) followed by the four stage outputs at strides 4..32.
template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, 5> levels;
};

template <typename T>
struct ConvParams {
  Tensor<T> w, b;
};

template <typename T>
struct NormParams {
  Tensor<T> gamma, beta;
  int groups = 1;
};

template <typename T>
struct EncoderParams {
  EncoderConfig cfg;
  std::array<ConvParams<T>, 2> stem_skip;
  std::vector<ConvParams<T>> stem;  // 3 convs (deep stem) or 1 (7x7)
  std::vector<NormParams<T>> stem_norm;
  std::vector<std::vector<SplitAttentionParams<T>>> stages;

  static EncoderParams create(ParamStore<T>& store, const EncoderConfig& cfg);
};

/// Two 3x3 convs (stride 1, padding 1), each followed by ReLU.
template <typename T>
Tensor<T> stem_skip(const Tensor<T>& x, const EncoderParams<T>& p);

/// Throws ConfigError before any compute if H or W is not divisible by 32.
template <typename T>
FeaturePyramid<T> encode(const Tensor<T>& x, const EncoderParams<T>& p);

template <typename T>
struct DecoderBlockParams {
  ConvParams<T> conv;  // 3x3
  NormParams<T> norm;
  bool has_channel_attention = false;
  ChannelAttentionParams<T> ca;
};

/// 1x1 conv + ReLU.
template <typename T>
Tensor<T> reduce_skip(const Tensor<T>& f, const ConvParams<T>& p);

/// concat -> 3x3 conv + GN + ReLU -> bilinear x2 -> channel attention (if enabled).
template <typename T>
Tensor<T> decoder_block(const Tensor<T>& prev, const Tensor<T>& skip_gated,
                        const DecoderBlockParams<T>& p, bool use_channel_attention);

template <typename T>
struct ModelOutput {
  Tensor<T> logits;
  std::vector<Tensor<T>> alphas;  // one per gate, deepest first; empty without gates
};

/// All-attention U-Net. Copies share parameter storage.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// x: N x 3 x H x W with H, W divisible by 32.
  ModelOutput<T> forward(const Tensor<T>& x) const;
  Tensor<T> logits(const Tensor<T>& x) const { return forward(x).logits; }

  /// Copies values for every parameter of `other` with a matching name and shape.
  template <typename U>
  void load_values_from(const Model<U>& other);

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  EncoderParams<T> encoder_;
  std::array<ConvParams<T>, 4> reduce_;
  std::array<SpatialGateParams<T>, 4> gates_;
  std::array<DecoderBlockParams<T>, 4> blocks_;
  ConvParams<T> head_;
};

/// Per-pixel argmax over classes; ties resolve to the lower class index.
template <typename T>
std::vector<SegMask> predict_mask(const Tensor<T>& logits);

template <typename T>
template <typename U>
void Model<T>::load_values_from(const Model<U>& other) {
  for (const auto& [name, src] : other.params().entries()) {
    if (!store_.contains(name)) continue;
    auto dst = store_.at(name);
    if (dst.shape() != src.shape()) continue;
    auto d = dst.data();
    auto s = src.data();
    for (size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(s[i]);
  }
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace aaunet
