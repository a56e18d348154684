#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtse/tensor.hpp"

namespace mtse {

// Per-parameter Adam accumulators.
struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t t = 0;

  static AdamState like(const Tensor& param) {
    return AdamState{Tensor(param.shape(), 0.0), Tensor(param.shape(), 0.0), 0};
  }
};

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update; increments state.t.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& cfg);

// Central differences (L(p+eps) - L(p-eps)) / (2 eps) per coordinate. The
// loss callback reads the parameter tensors in place, so they are restored
// bit-exactly after each probe.
std::vector<Tensor> finite_diff_grad(const std::vector<Tensor*>& params,
                                     const std::function<double()>& loss,
                                     double eps = 1e-5);

// max over coordinates of |a-f| / max(1, |a|, |f|).
double max_rel_err(const Tensor& analytic, const Tensor& fd);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 1e-4;
  bool pass = true;
};

GradCheckReport compare_grad_sets(const std::vector<std::string>& names,
                                  const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& fd, double tol);

}  // namespace mtse
