#include "mtse/optim.hpp"

#include <cmath>

#include "mtse/errors.hpp"

namespace mtse {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(state.m))
    fail(errc::input, "adam_step shape mismatch: param " + param.shape_str() +
                          " grad " + grad.shape_str());
  state.t += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double g = grad.at(i);
    state.m.at(i) = cfg.beta1 * state.m.at(i) + (1.0 - cfg.beta1) * g;
    state.v.at(i) = cfg.beta2 * state.v.at(i) + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m.at(i) / b1t;
    const double vhat = state.v.at(i) / b2t;
    param.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

std::vector<Tensor> finite_diff_grad(const std::vector<Tensor*>& params,
                                     const std::function<double()>& loss,
                                     double eps) {
  if (eps <= 0) fail(errc::input, "finite_diff_grad: eps must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Tensor* p : params) {
    Tensor g(p->shape(), 0.0);
    for (std::int64_t i = 0; i < p->size(); ++i) {
      const double saved = p->at(i);
      p->at(i) = saved + eps;
      const double up = loss();
      p->at(i) = saved - eps;
      const double down = loss();
      p->at(i) = saved;
      g.at(i) = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_rel_err(const Tensor& analytic, const Tensor& fd) {
  if (!analytic.same_shape(fd))
    fail(errc::input, "max_rel_err shape mismatch");
  double worst = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.at(i), f = fd.at(i);
    const double denom = std::max({1.0, std::fabs(a), std::fabs(f)});
    worst = std::max(worst, std::fabs(a - f) / denom);
  }
  return worst;
}

GradCheckReport compare_grad_sets(const std::vector<std::string>& names,
                                  const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& fd, double tol) {
  if (names.size() != analytic.size() || names.size() != fd.size())
    fail(errc::input, "compare_grad_sets: list length mismatch");
  GradCheckReport report;
  report.tol = tol;
  for (std::size_t i = 0; i < names.size(); ++i) {
    GradCheckEntry e;
    e.name = names[i];
    e.max_rel_err = max_rel_err(analytic[i], fd[i]);
    e.pass = e.max_rel_err < tol;
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace mtse
