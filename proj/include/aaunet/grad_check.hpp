#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet {

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor for the relative error, times max(1, |f(x)|). Gradients
  // below it are compared on an absolute scale. A gradient that is exactly zero
  // (e.g. a bias ahead of a normalization) still shows finite-difference noise
  // of order 1e-16 * sum|terms of f| / step, which for a sum over a whole
  // logit map is ~1e-10 * |f| at step 1e-4.
  double abs_floor = 1e-5;
  // 0 checks every coordinate. Otherwise each input contributes at most this
  // many coordinates, chosen with `seed`.
  size_t max_coords_per_input = 0;
  uint64_t seed = 0;
  // Coordinates whose +-step evaluations change the ReLU / max-pool branch
  // pattern are not differentiable within the step; they are counted in
  // coords_kinked and left out of the error. false compares them anyway.
  bool skip_kinks = true;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  size_t coords_checked = 0;
  size_t coords_kinked = 0;
  bool passed = false;  // also false when every coordinate was kinked
  std::string worst;  // "input <i> coord <j>: analytic a, numeric n"
};

using ScalarFn = std::function<TensorD(const std::vector<TensorD>&)>;

/// Compares reverse-mode gradients of `fn` against central finite differences.
///
/// `inputs` are perturbed in place (and restored); their storage may be shared
/// with tensors captured by `fn`. Throws NumericError on a non-finite analytic
/// gradient and ConfigError when more than 1000 coordinates would be checked.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<TensorD> inputs, double rel_tol,
                           const GradCheckOptions& options = {});

}  // namespace aaunet
