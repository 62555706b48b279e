#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kmarl/numkit/tape.hpp"

namespace kmarl::num {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Builds the loss on the given tape and returns it as a 1x1 Var.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients against central differences over every entry of
/// every parameter. Relative error is |a - n| / max(|a| + |n|, floor).
inline GradCheckReport grad_check(const LossBuilder& build, std::span<Param* const> params,
                                  double tolerance, double step = 1e-5, double floor = 1e-6) {
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  auto evaluate = [&build] {
    Tape tape;
    tape.set_grad_enabled(false);
    return build(tape).scalar();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = evaluate();
      p.value[i] = saved - step;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  for (Param* p : params) p->zero_grad();
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace kmarl::num
