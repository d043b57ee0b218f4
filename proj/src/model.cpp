#include "aaunet/model.hpp"

#include "aaunet/errors.hpp"
#include "aaunet/ops.hpp"

namespace aaunet {

void EncoderConfig::validate() const {
  if (stage_depths.size() != 4) {
    throw ConfigError("encoder.stage_depths must list exactly 4 stages, got " +
                      std::to_string(stage_depths.size()));
  }
  for (int d : stage_depths) {
    if (d < 1) throw ConfigError("encoder.stage_depths entries must be >= 1");
  }
  if (cardinality < 1 || radix < 1) throw ConfigError("encoder.cardinality/radix must be >= 1");
  if (base_width < 2 || base_width % 2 != 0) {
    throw ConfigError("encoder.base_width must be even and >= 2");
  }
  for (int i = 0; i < 4; ++i) {
    const int64_t w = int64_t(base_width) << i;
    if (w % (int64_t(cardinality) * radix) != 0) {
      throw ConfigError("encoder.base_width*2^" + std::to_string(i) + " = " + std::to_string(w) +
                        " not divisible by cardinality*radix");
    }
  }
  if (input_channels < 1) throw ConfigError("encoder.input_channels must be >= 1");
  if (stem_skip_width < 1) throw ConfigError("encoder.stem_skip_width must be >= 1");
}

void ModelConfig::validate() const {
  encoder.validate();
  if (decoder_widths.size() != 4) throw ConfigError("decoder_widths must have 4 entries");
  if (skip_reduced_widths.size() != 4) {
    throw ConfigError("skip_reduced_widths must have 4 entries");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  const int64_t w = encoder.base_width;
  const std::array<int64_t, 4> source{4 * w, 2 * w, w, encoder.stem_skip_width};
  for (int i = 0; i < 4; ++i) {
    if (decoder_widths[i] < 1) throw ConfigError("decoder_widths entries must be >= 1");
    if (skip_reduced_widths[i] < 1 || skip_reduced_widths[i] > source[i]) {
      throw ConfigError("skip_reduced_widths[" + std::to_string(i) + "] must be in [1, " +
                        std::to_string(source[i]) + "]");
    }
    if (use_channel_attention &&
        (channel_reduction < 1 || decoder_widths[i] / channel_reduction < 4)) {
      throw ConfigError("decoder_widths[" + std::to_string(i) +
                        "] / channel_reduction must be >= 4");
    }
  }
}

std::string ModelConfig::variant_name() const {
  std::string s = "RSU";
  if (use_space_attention || use_channel_attention) s += "+";
  if (use_space_attention) s += "S";
  if (use_channel_attention) s += "C";
  return s;
}

namespace {

template <typename T>
ConvParams<T> make_conv(ParamStore<T>& store, const std::string& prefix, int64_t cout,
                        int64_t cin, int k) {
  ConvParams<T> c;
  c.w = store.create(prefix + ".weight", {cout, cin, k, k}, Init::KaimingNormal, cin * k * k);
  c.b = store.create(prefix + ".bias", {cout}, Init::Zeros);
  return c;
}

template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& prefix, int64_t channels) {
  NormParams<T> n;
  n.gamma = store.create(prefix + ".gamma", {channels}, Init::Ones);
  n.beta = store.create(prefix + ".beta", {channels}, Init::Zeros);
  n.groups = ops::default_norm_groups(channels);
  return n;
}

template <typename T>
Tensor<T> conv_gn_relu(const Tensor<T>& x, const ConvParams<T>& c, const NormParams<T>& n,
                       int stride, int padding) {
  auto y = ops::conv2d(x, c.w, c.b, stride, padding);
  return ops::relu(ops::group_norm(y, n.groups, n.gamma, n.beta));
}

}  // namespace

template <typename T>
EncoderParams<T> EncoderParams<T>::create(ParamStore<T>& store, const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  const int64_t w0 = cfg.stem_skip_width, cin = cfg.input_channels, w = cfg.base_width;
  p.stem_skip[0] = make_conv(store, "encoder.stem_skip.conv1", w0, cin, 3);
  p.stem_skip[1] = make_conv(store, "encoder.stem_skip.conv2", w0, w0, 3);
  if (cfg.deep_stem) {
    p.stem.push_back(make_conv(store, "encoder.stem.conv1", w / 2, cin, 3));
    p.stem_norm.push_back(make_norm(store, "encoder.stem.gn1", w / 2));
    p.stem.push_back(make_conv(store, "encoder.stem.conv2", w / 2, w / 2, 3));
    p.stem_norm.push_back(make_norm(store, "encoder.stem.gn2", w / 2));
    p.stem.push_back(make_conv(store, "encoder.stem.conv3", w, w / 2, 3));
    p.stem_norm.push_back(make_norm(store, "encoder.stem.gn3", w));
  } else {
    p.stem.push_back(make_conv(store, "encoder.stem.conv1", w, cin, 7));
    p.stem_norm.push_back(make_norm(store, "encoder.stem.gn1", w));
  }
  int64_t in = w;
  for (int s = 0; s < 4; ++s) {
    const int64_t width = w << s;
    std::vector<SplitAttentionParams<T>> blocks;
    for (int b = 0; b < cfg.stage_depths[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      blocks.push_back(SplitAttentionParams<T>::create(
          store, "encoder.stage" + std::to_string(s + 1) + ".block" + std::to_string(b), in,
          width, cfg.cardinality, cfg.radix, stride));
      in = width;
    }
    p.stages.push_back(std::move(blocks));
  }
  return p;
}

template <typename T>
Tensor<T> stem_skip(const Tensor<T>& x, const EncoderParams<T>& p) {
  auto y = ops::relu(ops::conv2d(x, p.stem_skip[0].w, p.stem_skip[0].b, 1, 1));
  return ops::relu(ops::conv2d(y, p.stem_skip[1].w, p.stem_skip[1].b, 1, 1));
}

template <typename T>
FeaturePyramid<T> encode(const Tensor<T>& x, const EncoderParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("encode: input must be N x C x H x W");
  if (x.dim(1) != p.cfg.input_channels) {
    throw DimensionError("encode: channel axis is " + std::to_string(x.dim(1)) + ", expected " +
                         std::to_string(p.cfg.input_channels));
  }
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
    throw ConfigError("encode: input spatial size " + std::to_string(x.dim(2)) + "x" +
                      std::to_string(x.dim(3)) + " must be divisible by 32");
  }
  FeaturePyramid<T> out;
  out.levels[0] = stem_skip(x, p);

  Tensor<T> y = x;
  if (p.cfg.deep_stem) {
    y = conv_gn_relu(y, p.stem[0], p.stem_norm[0], 2, 1);
    y = conv_gn_relu(y, p.stem[1], p.stem_norm[1], 1, 1);
    y = conv_gn_relu(y, p.stem[2], p.stem_norm[2], 1, 1);
  } else {
    y = conv_gn_relu(y, p.stem[0], p.stem_norm[0], 2, 3);
  }
  y = ops::max_pool2d(y, 3, 2, 1);
  for (size_t s = 0; s < p.stages.size(); ++s) {
    for (const auto& block : p.stages[s]) y = split_attention_block(y, block);
    out.levels[s + 1] = y;
  }
  return out;
}

template <typename T>
Tensor<T> reduce_skip(const Tensor<T>& f, const ConvParams<T>& p) {
  return ops::relu(ops::conv2d(f, p.w, p.b));
}

template <typename T>
Tensor<T> decoder_block(const Tensor<T>& prev, const Tensor<T>& skip_gated,
                        const DecoderBlockParams<T>& p, bool use_channel_attention) {
  if (prev.dim(2) != skip_gated.dim(2) || prev.dim(3) != skip_gated.dim(3)) {
    throw DimensionError("decoder_block: spatial axes differ, prev " + shape_str(prev.shape()) +
                         " vs skip " + shape_str(skip_gated.shape()));
  }
  auto y = ops::concat_channels<T>({prev, skip_gated});
  y = conv_gn_relu(y, p.conv, p.norm, 1, 1);
  y = ops::upsample_bilinear(y, 2);
  if (use_channel_attention) {
    if (!p.has_channel_attention) {
      throw ConfigError("decoder_block: channel attention requested but not configured");
    }
    y = channel_attention(y, p.ca);
  }
  return y;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg_.validate();
  encoder_ = EncoderParams<T>::create(store_, cfg_.encoder);
  const int64_t w = cfg_.encoder.base_width;
  const std::array<int64_t, 4> source{4 * w, 2 * w, w, cfg_.encoder.stem_skip_width};
  int64_t state_width = 8 * w;
  for (int i = 0; i < 4; ++i) {
    const std::string level = std::to_string(i + 1);
    const int64_t skip_w = cfg_.skip_reduced_widths[i];
    reduce_[i] = make_conv(store_, "decoder.skip" + level + ".reduce", skip_w, source[i], 1);
    if (cfg_.use_space_attention) {
      // The deepest gate is driven by f4, the others by the running decoder state.
      gates_[i] = SpatialGateParams<T>::create(store_, "decoder.gate" + level, skip_w,
                                               state_width);
    }
    const int64_t width = cfg_.decoder_widths[i];
    auto& blk = blocks_[i];
    blk.conv = make_conv(store_, "decoder.block" + level + ".conv", width, state_width + skip_w,
                         3);
    blk.norm = make_norm(store_, "decoder.block" + level + ".gn", width);
    if (cfg_.use_channel_attention) {
      blk.has_channel_attention = true;
      blk.ca = ChannelAttentionParams<T>::create(store_, "decoder.block" + level + ".ca", width,
                                                 cfg_.channel_reduction);
    }
    state_width = width;
  }
  head_ = make_conv(store_, "head", cfg_.num_classes, state_width, 1);
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& x) const {
  auto pyr = encode(x, encoder_);
  ModelOutput<T> out;
  const auto& f4 = pyr.levels[4];
  Tensor<T> state = ops::upsample_bilinear(f4, 2);
  Tensor<T> gating = f4;
  const std::array<int, 4> source{3, 2, 1, 0};
  for (int i = 0; i < 4; ++i) {
    auto skip = reduce_skip(pyr.levels[source[i]], reduce_[i]);
    if (cfg_.use_space_attention) {
      auto g = spatial_attention_gate(skip, gating, gates_[i]);
      skip = g.gated;
      out.alphas.push_back(g.alpha);
    }
    if (skip.dim(2) != state.dim(2) || skip.dim(3) != state.dim(3)) {
      skip = ops::resize_bilinear(skip, state.dim(2), state.dim(3));
    }
    state = decoder_block(state, skip, blocks_[i], cfg_.use_channel_attention);
    gating = state;
  }
  out.logits = ops::conv2d(state, head_.w, head_.b);
  return out;
}

template <typename T>
std::vector<SegMask> predict_mask(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw DimensionError("predict_mask: logits must be N x K x H x W");
  const int64_t N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  if (K > 256) throw DimensionError("predict_mask: at most 256 classes supported");
  std::vector<SegMask> masks;
  masks.reserve(N);
  const T* p = logits.ptr();
  for (int64_t n = 0; n < N; ++n) {
    SegMask m(H, W);
    for (int64_t i = 0; i < H * W; ++i) {
      int64_t best = 0;
      T bv = p[(n * K) * H * W + i];
      for (int64_t k = 1; k < K; ++k) {
        const T v = p[(n * K + k) * H * W + i];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      m.labels[i] = static_cast<uint8_t>(best);
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template class Model<float>;
template class Model<double>;

#define AAUNET_INSTANTIATE_MODEL(T)                                                       \
  template Tensor<T> stem_skip(const Tensor<T>&, const EncoderParams<T>&);                \
  template FeaturePyramid<T> encode(const Tensor<T>&, const EncoderParams<T>&);           \
  template Tensor<T> reduce_skip(const Tensor<T>&, const ConvParams<T>&);                 \
  template Tensor<T> decoder_block(const Tensor<T>&, const Tensor<T>&,                    \
                                   const DecoderBlockParams<T>&, bool);                   \
  template std::vector<SegMask> predict_mask(const Tensor<T>&);

AAUNET_INSTANTIATE_MODEL(float)
AAUNET_INSTANTIATE_MODEL(double)

}  // namespace aaunet
