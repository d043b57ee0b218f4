#include "aaunet/optim.hpp"

#include <cmath>
#include <utility>

#include "aaunet/errors.hpp"

namespace aaunet {

template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, AdamWSlot<T>& slot, int64_t t,
                double lr, const AdamWConfig& cfg) {
  if (param.size() != grad.size()) throw DimensionError("adamw_step: param/grad size mismatch");
  if (slot.m.size() != param.size()) {
    slot.m.assign(param.size(), T(0));
    slot.v.assign(param.size(), T(0));
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
    slot.m[i] = static_cast<T>(m);
    slot.v[i] = static_cast<T>(v);
    const double mhat = m / c1, vhat = v / c2;
    const double p = static_cast<double>(param[i]) * decay;
    param[i] = static_cast<T>(p - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template void adamw_step(std::span<float>, std::span<const float>, AdamWSlot<float>&, int64_t,
                         double, const AdamWConfig&);
template void adamw_step(std::span<double>, std::span<const double>, AdamWSlot<double>&, int64_t,
                         double, const AdamWConfig&);

template <typename T>
void AdamW<T>::step(ParamStore<T>& params, double lr) {
  for (const auto& [name, p] : params.entries()) {
    if (!p.has_grad()) continue;
    const auto g = std::as_const(p).grad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        throw NumericError("non-finite gradient in " + name + " at element " + std::to_string(i) +
                           "; step rejected");
      }
    }
  }
  ++steps_;
  for (auto& [name, p] : params.entries()) {
    if (!p.has_grad()) continue;
    Tensor<T> handle = p;
    adamw_step<T>(handle.data(), std::as_const(handle).grad(), slots_[name], steps_, lr, cfg_);
  }
}

template class AdamW<float>;
template class AdamW<double>;

double cyclic_lr(int64_t step, double lr_base, double lr_max, int64_t cycle_length) {
  if (step < 0) throw ConfigError("cyclic_lr: step must be >= 0");
  if (cycle_length < 2) throw ConfigError("cyclic_lr: cycle length must be >= 2");
  const double pos = static_cast<double>(step % cycle_length);
  const double half = static_cast<double>(cycle_length) / 2.0;
  const double frac = pos <= half ? pos / half : (cycle_length - pos) / (cycle_length - half);
  return lr_base + (lr_max - lr_base) * frac;
}

}  // namespace aaunet
