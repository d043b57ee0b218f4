#include "aaunet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "aaunet/errors.hpp"
#include "aaunet/ops.hpp"

namespace aaunet {

GradCheckReport grad_check(const ScalarFn& fn, std::vector<TensorD> inputs, double rel_tol,
                           const GradCheckOptions& options) {
  std::vector<std::vector<size_t>> coords(inputs.size());
  std::mt19937_64 rng(options.seed);
  size_t total = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::vector<size_t> all(static_cast<size_t>(inputs[i].numel()));
    std::iota(all.begin(), all.end(), size_t{0});
    if (options.max_coords_per_input > 0 && all.size() > options.max_coords_per_input) {
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(options.max_coords_per_input);
      std::sort(all.begin(), all.end());
    }
    total += all.size();
    coords[i] = std::move(all);
  }
  if (total > 1000) {
    throw ConfigError("grad_check: " + std::to_string(total) +
                      " coordinates requested, limit is 1000");
  }

  for (auto& t : inputs) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  {
    TensorD y = fn(inputs);
    y.backward();
  }
  std::vector<std::vector<double>> analytic(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    analytic[i].assign(static_cast<size_t>(inputs[i].numel()), 0.0);
    if (inputs[i].has_grad()) {
      auto g = inputs[i].grad();
      std::copy(g.begin(), g.end(), analytic[i].begin());
    }
    for (double v : analytic[i]) {
      if (!std::isfinite(v)) {
        throw NumericError("grad_check: non-finite analytic gradient in input " +
                           std::to_string(i));
      }
    }
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  const double h = options.step;
  auto traced = [&](uint64_t& sig) {
    ops::BranchTrace::begin();
    const double f = fn(inputs).item();
    sig = ops::BranchTrace::end();
    return f;
  };
  uint64_t sig0 = 0;
  const double f0 = traced(sig0);
  const double floor = options.abs_floor * std::max(1.0, std::abs(f0));
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].data();
    for (size_t j : coords[i]) {
      const double saved = data[j];
      uint64_t sp = 0, sm = 0;
      data[j] = saved + h;
      const double fp = traced(sp);
      data[j] = saved - h;
      const double fm = traced(sm);
      data[j] = saved;
      if (options.skip_kinks && (sp != sig0 || sm != sig0)) {
        ++report.coords_kinked;
        continue;
      }
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[i][j];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = abs_err / denom;
      ++report.coords_checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        std::ostringstream os;
        os << "input " << i << " coord " << j << ": analytic " << a << ", numeric " << numeric;
        report.worst = os.str();
      }
    }
  }
  report.passed = report.coords_checked > 0 && report.max_rel_error < rel_tol;
  return report;
}

}  // namespace aaunet
