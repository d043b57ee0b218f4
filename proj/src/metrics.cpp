#include "aaunet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "aaunet/dataset.hpp"
#include "aaunet/errors.hpp"

namespace aaunet {

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const SegMask> targets,
                     const ClassWeights& weights, double gamma) {
  if (logits.rank() != 4) {
    throw DimensionError("focal_loss: logits must be N x K x H x W, got " +
                         shape_str(logits.shape()));
  }
  const int64_t N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  if (static_cast<int64_t>(targets.size()) != N) {
    throw DimensionError("focal_loss: " + std::to_string(targets.size()) + " masks for batch " +
                         std::to_string(N));
  }
  if (static_cast<int64_t>(weights.size()) != K) {
    throw ConfigError("focal_loss: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(K) + " classes");
  }
  if (!(gamma >= 0)) throw ConfigError("focal_loss: gamma must be >= 0");
  const int64_t HW = H * W;
  for (int64_t n = 0; n < N; ++n) {
    const auto& m = targets[static_cast<size_t>(n)];
    if (m.height != H || m.width != W) {
      throw DimensionError("focal_loss: mask " + std::to_string(n) + " is " +
                           std::to_string(m.height) + "x" + std::to_string(m.width) +
                           ", logits are " + std::to_string(H) + "x" + std::to_string(W));
    }
    for (int64_t i = 0; i < HW; ++i) {
      if (m.labels[static_cast<size_t>(i)] >= K) {
        throw DataError("focal_loss: target class " + std::to_string(m.labels[i]) +
                        " out of range at sample " + std::to_string(n) + " pixel (" +
                        std::to_string(i / W) + ", " + std::to_string(i % W) + ")");
      }
    }
  }
  // Probabilities and the per-pixel factor G with dL/dz_k = G (delta_yk - p_k).
  const T* z = logits.ptr();
  std::vector<T> prob(static_cast<size_t>(N * K * HW));
  std::vector<T> factor(static_cast<size_t>(N * HW));
  double total = 0;
  for (int64_t n = 0; n < N; ++n) {
    const auto& m = targets[static_cast<size_t>(n)];
    for (int64_t i = 0; i < HW; ++i) {
      const int64_t base = n * K * HW + i;
      T mx = z[base];
      for (int64_t k = 1; k < K; ++k) mx = std::max(mx, z[base + k * HW]);
      T sum = 0;
      for (int64_t k = 0; k < K; ++k) {
        const T e = std::exp(z[base + k * HW] - mx);
        prob[static_cast<size_t>(base + k * HW)] = e;
        sum += e;
      }
      for (int64_t k = 0; k < K; ++k) prob[static_cast<size_t>(base + k * HW)] /= sum;
      const int y = m.labels[static_cast<size_t>(i)];
      const T logp = z[base + y * HW] - mx - std::log(sum);
      const T p = prob[static_cast<size_t>(base + y * HW)];
      const T q = T(1) - p;
      const T w = static_cast<T>(weights[static_cast<size_t>(y)]);
      T mod, g;
      if (gamma == 0) {
        mod = 1;
        g = -w;
      } else {
        mod = std::pow(q, static_cast<T>(gamma));
        const T extra = q > T(0)
                            ? static_cast<T>(gamma) * std::pow(q, static_cast<T>(gamma - 1)) * p * logp
                            : T(0);
        g = -w * (mod - extra);
      }
      total += static_cast<double>(-w * mod * logp);
      factor[static_cast<size_t>(n * HW + i)] = g;
    }
  }
  const double count = static_cast<double>(N * HW);
  std::vector<uint8_t> labels;
  labels.reserve(static_cast<size_t>(N * HW));
  for (const auto& m : targets) labels.insert(labels.end(), m.labels.begin(), m.labels.end());
  return Tensor<T>::make_result(
      {}, {static_cast<T>(total / count)}, {logits},
      [prob = std::move(prob), factor = std::move(factor), labels = std::move(labels), N, K, HW,
       count](TensorNode<T>& self) {
        auto& ln = *self.parents[0];
        const T up = self.grad[0] / static_cast<T>(count);
        for (int64_t n = 0; n < N; ++n) {
          for (int64_t i = 0; i < HW; ++i) {
            const T g = up * factor[static_cast<size_t>(n * HW + i)];
            const int y = labels[static_cast<size_t>(n * HW + i)];
            for (int64_t k = 0; k < K; ++k) {
              const size_t idx = static_cast<size_t>(n * K * HW + k * HW + i);
              ln.grad[idx] += g * ((k == y ? T(1) : T(0)) - prob[idx]);
            }
          }
        }
      });
}

template Tensor<float> focal_loss(const Tensor<float>&, std::span<const SegMask>,
                                  const ClassWeights&, double);
template Tensor<double> focal_loss(const Tensor<double>&, std::span<const SegMask>,
                                   const ClassWeights&, double);

void DiceCounts::add(const SegMask& pred, const SegMask& truth_mask) {
  if (pred.height != truth_mask.height || pred.width != truth_mask.width) {
    throw DimensionError("dice: prediction " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs truth " +
                         std::to_string(truth_mask.height) + "x" +
                         std::to_string(truth_mask.width));
  }
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    const uint8_t p = pred.labels[i], t = truth_mask.labels[i];
    if (p >= kNumClasses || t >= kNumClasses) {
      throw DataError("dice: class index out of range at pixel " + std::to_string(i));
    }
    ++predicted[p];
    ++truth[t];
    if (p == t) ++intersection[p];
  }
}

void DiceCounts::merge(const DiceCounts& o) {
  for (int c = 0; c < kNumClasses; ++c) {
    intersection[c] += o.intersection[c];
    predicted[c] += o.predicted[c];
    truth[c] += o.truth[c];
  }
}

std::optional<double> DiceCounts::dice(int cls) const {
  const int64_t denom = predicted[cls] + truth[cls];
  if (denom == 0) return std::nullopt;
  return 2.0 * double(intersection[cls]) / double(denom);
}

std::optional<double> dice_score(const SegMask& pred, const SegMask& truth, int cls) {
  DiceCounts c;
  c.add(pred, truth);
  return c.dice(cls);
}

DiceReport DiceReport::from_counts(const DiceCounts& c) {
  DiceReport r;
  r.counts = c;
  double sum = 0;
  int defined = 0;
  for (int k = 1; k < kNumClasses; ++k) {
    r.per_class[k] = c.dice(k);
    if (r.per_class[k]) {
      sum += *r.per_class[k];
      ++defined;
    }
  }
  if (defined > 0) r.mean_dice = sum / defined;
  return r;
}

std::optional<double> DiceReport::mean_over(std::span<const LesionClass> classes) const {
  double sum = 0;
  int defined = 0;
  for (auto c : classes) {
    const auto& d = per_class[static_cast<int>(c)];
    if (d) {
      sum += *d;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

nlohmann::json DiceReport::to_json() const {
  using nlohmann::json;
  json per = json::object(), support = json::object(), predicted = json::object();
  for (int k = 1; k < kNumClasses; ++k) {
    const std::string name(kClassNames[k]);
    per[name] = per_class[k] ? json(*per_class[k]) : json(nullptr);
    support[name] = counts.truth[k];
    predicted[name] = counts.predicted[k];
  }
  return {{"per_class", per},
          {"support", support},
          {"predicted", predicted},
          {"mean_dice", mean_dice ? json(*mean_dice) : json(nullptr)},
          {"config_echo", config_echo}};
}

DiceReport evaluate(const Predictor& predict, const std::vector<const PhantomCase*>& cases) {
  if (cases.empty()) throw ConfigError("evaluate: split has no cases");
  DiceCounts counts;
  for (const auto* pc : cases) {
    for (int s = 0; s < pc->n_slices(); ++s) {
      counts.add(predict(*pc, s), pc->masks[static_cast<size_t>(s)]);
    }
  }
  return DiceReport::from_counts(counts);
}

DiceReport evaluate(const Model<float>& model, const std::vector<const PhantomCase*>& cases,
                    int batch_size) {
  if (cases.empty()) throw ConfigError("evaluate: split has no cases");
  NoGradGuard no_grad;
  const auto refs = enumerate_samples(cases);
  DiceCounts counts;
  const size_t step = static_cast<size_t>(std::max(1, batch_size));
  for (size_t start = 0; start < refs.size(); start += step) {
    const size_t stop = std::min(refs.size(), start + step);
    std::vector<SliceStack> stacks;
    for (size_t i = start; i < stop; ++i) {
      stacks.push_back(stack_slices(*cases[static_cast<size_t>(refs[i].case_index)], refs[i].slice));
    }
    const auto preds = predict_mask(model.logits(stacks_to_tensor(stacks)));
    for (size_t i = start; i < stop; ++i) {
      const auto& pc = *cases[static_cast<size_t>(refs[i].case_index)];
      counts.add(preds[i - start], pc.masks[static_cast<size_t>(refs[i].slice)]);
    }
  }
  return DiceReport::from_counts(counts);
}

ClassWeights weights_from_frequencies(const std::vector<double>& freq, double clip) {
  if (!(clip >= 1)) throw ConfigError("weight clip must be >= 1");
  std::vector<double> present;
  for (double f : freq) {
    if (f > 0) present.push_back(f);
  }
  ClassWeights w(freq.size(), clip);
  if (present.empty()) return w;
  std::sort(present.begin(), present.end());
  const size_t m = present.size();
  const double median = m % 2 ? present[m / 2] : 0.5 * (present[m / 2 - 1] + present[m / 2]);
  for (size_t c = 0; c < freq.size(); ++c) {
    if (freq[c] > 0) w[c] = std::clamp(median / freq[c], 1.0 / clip, clip);
  }
  return w;
}

ClassWeights inverse_frequency_weights(const std::vector<const PhantomCase*>& cases, double clip) {
  std::vector<double> counts(kNumClasses, 0.0);
  double total = 0;
  for (const auto* pc : cases) {
    for (const auto& m : pc->masks) {
      for (uint8_t v : m.labels) counts[v] += 1;
      total += double(m.labels.size());
    }
  }
  if (total > 0) {
    for (auto& c : counts) c /= total;
  }
  return weights_from_frequencies(counts, clip);
}

}  // namespace aaunet
