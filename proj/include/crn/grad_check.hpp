#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crn/nn.hpp"

namespace crn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  std::vector<std::string> failures;
  bool passed = true;

  std::string summary() const {
    std::string s = passed ? "grad_check passed" : "grad_check FAILED";
    s += ", max rel error " + std::to_string(max_rel_error);
    if (!worst_param.empty()) s += " at " + worst_param + "[" + std::to_string(worst_index) + "]";
    for (const auto& f : failures) s += "\n  offending: " + f;
    return s;
  }
};

// Compares reverse-mode gradients against central finite differences for
// every entry of every parameter. `run(with_backward)` must rebuild its
// forward pass from the current parameter values on each call and, when
// asked, run the reverse pass into the param grads. Meant for Real=double.
template <typename Real>
GradCheckReport grad_check(ParamStore<Real>& ps, const std::function<Real(bool)>& run,
                           double tolerance = 1e-4, double step = 1e-5) {
  const auto loss = [&run]() { return run(false); };
  ps.zero_grads();
  run(true);

  std::vector<Tensor<Real>> analytic;
  analytic.reserve(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) analytic.push_back(ps.at(i).grad);

  GradCheckReport report;
  for (size_t i = 0; i < ps.size(); ++i) {
    Param<Real>& p = ps.at(i);
    bool failed = false;
    for (int64_t j = 0; j < p.value.size(); ++j) {
      const size_t k = static_cast<size_t>(j);
      const Real saved = p.value.data[k];
      p.value.data[k] = saved + static_cast<Real>(step);
      const double up = static_cast<double>(loss());
      p.value.data[k] = saved - static_cast<Real>(step);
      const double down = static_cast<double>(loss());
      p.value.data[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = static_cast<double>(analytic[i].data[k]);
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-6});
      const double rel = std::abs(numeric - exact) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = j;
      }
      if (rel > tolerance) failed = true;
    }
    if (failed) report.failures.push_back(p.name);
  }
  report.passed = report.failures.empty();
  ps.zero_grads();
  return report;
}

}  // namespace crn
