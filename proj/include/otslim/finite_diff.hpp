#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace otslim::ad {

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  int worst_index = -1;
};

// Central-difference check of an analytic gradient. f is evaluated at
// x +/- h e_i per coordinate; the relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator so near-zero entries do
// not inflate it. Non-finite function values are an error.
inline FiniteDiffReport finite_diff_check(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    const Eigen::VectorXd& analytic_grad, double h = 1e-4) {
  if (analytic_grad.size() != x.size())
    throw std::invalid_argument("finite_diff_check: gradient length mismatch");
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  FiniteDiffReport report;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    double up = f(probe);
    probe[i] = x[i] - h;
    double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::invalid_argument("finite_diff_check: non-finite function value");
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(analytic_grad[i]), std::abs(numeric), 1e-8});
    double rel = std::abs(analytic_grad[i] - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = static_cast<int>(i);
    }
  }
  return report;
}

}  // namespace otslim::ad
