#pragma once

#include <cmath>
#include <map>
#include <string>

#include "kgc/autodiff.hpp"

namespace kgc {

// Central-difference checking harness. This is the independent oracle for
// everything the backward pass computes; it never routes through backward()
// except to obtain the analytic side of the comparison.

struct GradReport {
  double max_rel_error = 0.0;
  std::map<std::string, double> per_parameter_errors;
  double tolerance = 0.0;
  bool pass = false;
};

inline GradReport grad_check(const Expr& f, const std::map<std::string, Tensor>& inputs,
                             double epsilon, double tolerance) {
  if (epsilon <= 0.0 || tolerance <= 0.0) {
    throw Error("grad_check: epsilon and tolerance must be positive");
  }
  ForwardBackwardResult analytic = forward_backward(f, inputs);

  GradReport report;
  report.tolerance = tolerance;
  for (const auto& [name, tensor] : inputs) {
    const Tensor& grad = analytic.gradients.at(name);
    double worst = 0.0;
    std::map<std::string, Tensor> probe = inputs;
    Tensor& target = probe.at(name);
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      double saved = target.data[i];
      target.data[i] = saved + epsilon;
      double up = evaluate(f, probe);
      target.data[i] = saved - epsilon;
      double down = evaluate(f, probe);
      target.data[i] = saved;
      double numeric = (up - down) / (2.0 * epsilon);
      double err = std::fabs(grad.data[i] - numeric) / std::max(1.0, std::fabs(grad.data[i]));
      worst = std::max(worst, err);
    }
    report.per_parameter_errors[name] = worst;
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace kgc
