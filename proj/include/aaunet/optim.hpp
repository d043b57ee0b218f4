#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aaunet/params.hpp"

namespace aaunet {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

template <typename T>
struct AdamWSlot {
  std::vector<T> m, v;
};

/// One decoupled-decay AdamW update of a single tensor. `t` is the 1-based
/// step count used for bias correction.
template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, AdamWSlot<T>& slot, int64_t t,
                double lr, const AdamWConfig& cfg);

/// AdamW over a parameter registry. Parameters that received no gradient this
/// step are left untouched.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Throws NumericError naming the tensor if any gradient is non-finite; no
  /// parameter is modified in that case.
  void step(ParamStore<T>& params, double lr);

  int64_t steps() const { return steps_; }
  void set_steps(int64_t s) { steps_ = s; }
  const AdamWConfig& config() const { return cfg_; }
  std::map<std::string, AdamWSlot<T>>& slots() { return slots_; }
  const std::map<std::string, AdamWSlot<T>>& slots() const { return slots_; }

 private:
  AdamWConfig cfg_;
  int64_t steps_ = 0;
  std::map<std::string, AdamWSlot<T>> slots_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

/// Triangular cyclic schedule: lr_base at the start of each cycle, lr_max at
/// its midpoint, linear in between.
double cyclic_lr(int64_t step, double lr_base, double lr_max, int64_t cycle_length);

}  // namespace aaunet
