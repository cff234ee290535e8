#pragma once

#include "evolunet/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace evolunet::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;    // "param[k](r,c)" of the largest error
  std::string failure;  // set when a non-finite value was met
};

/// Compares backward() against central finite differences (step 1e-5) for
/// every coordinate of every parameter. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1).
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double tol,
                                  double step = 1e-5) {
  GradCheckReport rep;
  for (auto& p : params) p.zero_grad();
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    rep.failure = "non-finite loss at the base point";
    return rep;
  }
  backward(loss);
  std::vector<Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& x = params[k].mutable_value();
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const std::string where =
            "param[" + std::to_string(k) + "](" + std::to_string(r) + "," + std::to_string(c) + ")";
        const double orig = x(r, c);
        x(r, c) = orig + step;
        const double up = f().item();
        x(r, c) = orig - step;
        const double down = f().item();
        x(r, c) = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[k](r, c);
        if (!std::isfinite(numeric) || !std::isfinite(a)) {
          rep.failure = "non-finite gradient at " + where;
          rep.max_rel_err = std::numeric_limits<double>::infinity();
          rep.worst = where;
          return rep;
        }
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
        if (err > rep.max_rel_err || rep.worst.empty()) {
          rep.max_rel_err = std::max(rep.max_rel_err, err);
          rep.worst = where;
        }
      }
  }
  for (auto& p : params) p.zero_grad();
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace evolunet::nn
