#include "mtse/graph.hpp"

#include <cmath>

#include "mtse/errors.hpp"

namespace mtse {

Graph::Var Graph::push(Tensor value, const char* op, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, op, std::move(back)});
  return static_cast<Var>(nodes_.size() - 1);
}

Graph::Var Graph::leaf(Tensor value, const char* op) {
  return push(std::move(value), op, {});
}

Graph::Var Graph::leaf(const Tensor& value, const char* op, bool copy) {
  (void)copy;
  return push(value, op, {});
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Tensor out = mtse::matmul(ta, tb);
  Var v = push(std::move(out), "matmul", {});
  nodes_.back().back = [this, a, b, v]() {
    const Tensor& g = grad(v);
    const Tensor& ta2 = val(a);
    const Tensor& tb2 = val(b);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    const std::int64_t n = ta2.rows(), k = ta2.cols(), m = tb2.cols();
    // dA[i,kk] += sum_j g[i,j] * B[kk,j]
    for (std::int64_t i = 0; i < n; ++i) {
      const double* grow = g.data() + i * m;
      double* garow = ga.data() + i * k;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const double* brow = tb2.data() + kk * m;
        double acc = 0.0;
        for (std::int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
        garow[kk] += acc;
      }
    }
    // dB[kk,j] += sum_i A[i,kk] * g[i,j]
    for (std::int64_t i = 0; i < n; ++i) {
      const double* arow = ta2.data() + i * k;
      const double* grow = g.data() + i * m;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        double* gbrow = gb.data() + kk * m;
        for (std::int64_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
      }
    }
  };
  return v;
}

Graph::Var Graph::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    fail(errc::input, "add shape mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) += tb.at(i);
  Var v = push(std::move(out), "add", {});
  nodes_.back().back = [this, a, b, v]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) += g.at(i);
    }
  };
  return v;
}

Graph::Var Graph::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    fail(errc::input, "sub shape mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) -= tb.at(i);
  Var v = push(std::move(out), "sub", {});
  nodes_.back().back = [this, a, b, v]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) -= g.at(i);
    }
  };
  return v;
}

Graph::Var Graph::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    fail(errc::input, "mul shape mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= tb.at(i);
  Var v = push(std::move(out), "mul", {});
  nodes_.back().back = [this, a, b, v]() {
    const Tensor& g = grad(v);
    const Tensor& ta2 = val(a);
    const Tensor& tb2 = val(b);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      ga.at(i) += g.at(i) * tb2.at(i);
      gb.at(i) += g.at(i) * ta2.at(i);
    }
  };
  return v;
}

Graph::Var Graph::add_row(Var a, Var bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  if (ta.rank() != 2 || tb.size() != ta.cols())
    fail(errc::input, "add_row shape mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += tb.at(j);
  Var v = push(std::move(out), "add_row", {});
  nodes_.back().back = [this, a, bias, v]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(bias);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) {
        ga.at(i, j) += g.at(i, j);
        gb.at(j) += g.at(i, j);
      }
  };
  return v;
}

Graph::Var Graph::scale(Var a, double s) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= s;
  Var v = push(std::move(out), "scale", {});
  nodes_.back().back = [this, a, v, s]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < g.size(); ++i) ga.at(i) += s * g.at(i);
  };
  return v;
}

Graph::Var Graph::sigmoid(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.at(i) = 1.0 / (1.0 + std::exp(-out.at(i)));
  Var v = push(std::move(out), "sigmoid", {});
  nodes_.back().back = [this, a, v]() {
    const Tensor& g = grad(v);
    const Tensor& y = val(v);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < g.size(); ++i)
      ga.at(i) += g.at(i) * y.at(i) * (1.0 - y.at(i));
  };
  return v;
}

Graph::Var Graph::tanh_(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = std::tanh(out.at(i));
  Var v = push(std::move(out), "tanh", {});
  nodes_.back().back = [this, a, v]() {
    const Tensor& g = grad(v);
    const Tensor& y = val(v);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < g.size(); ++i)
      ga.at(i) += g.at(i) * (1.0 - y.at(i) * y.at(i));
  };
  return v;
}

Graph::Var Graph::abs_(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = std::fabs(out.at(i));
  Var v = push(std::move(out), "abs", {});
  nodes_.back().back = [this, a, v]() {
    const Tensor& g = grad(v);
    const Tensor& x = val(a);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double s = x.at(i) > 0 ? 1.0 : (x.at(i) < 0 ? -1.0 : 0.0);
      ga.at(i) += g.at(i) * s;
    }
  };
  return v;
}

Graph::Var Graph::lerp_rows(const std::vector<double>& mask, Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb) || ta.rank() != 2 ||
      static_cast<std::int64_t>(mask.size()) != ta.rows())
    fail(errc::input, "lerp_rows shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.rows(); ++i) {
    const double m = mask[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < out.cols(); ++j)
      out.at(i, j) = m * ta.at(i, j) + (1.0 - m) * tb.at(i, j);
  }
  Var v = push(std::move(out), "lerp_rows", {});
  nodes_.back().back = [this, a, b, v, mask]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    for (std::int64_t i = 0; i < g.rows(); ++i) {
      const double m = mask[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < g.cols(); ++j) {
        ga.at(i, j) += m * g.at(i, j);
        gb.at(i, j) += (1.0 - m) * g.at(i, j);
      }
    }
  };
  return v;
}

Graph::Var Graph::gated_blend(Var z, Var h_prev, Var cand) {
  const Tensor& tz = val(z);
  const Tensor& th = val(h_prev);
  const Tensor& tc = val(cand);
  if (!tz.same_shape(th) || !tz.same_shape(tc))
    fail(errc::input, "gated_blend shape mismatch");
  Tensor out = th;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.at(i) = (1.0 - tz.at(i)) * th.at(i) + tz.at(i) * tc.at(i);
  Var v = push(std::move(out), "gated_blend", {});
  nodes_.back().back = [this, z, h_prev, cand, v]() {
    const Tensor& g = grad(v);
    const Tensor& tz2 = val(z);
    const Tensor& th2 = val(h_prev);
    const Tensor& tc2 = val(cand);
    Tensor& gz = grad_ref(z);
    Tensor& gh = grad_ref(h_prev);
    Tensor& gc = grad_ref(cand);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      gz.at(i) += g.at(i) * (tc2.at(i) - th2.at(i));
      gh.at(i) += g.at(i) * (1.0 - tz2.at(i));
      gc.at(i) += g.at(i) * tz2.at(i);
    }
  };
  return v;
}

Graph::Var Graph::scale_rows(const std::vector<double>& mask, Var a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2 || static_cast<std::int64_t>(mask.size()) != ta.rows())
    fail(errc::input, "scale_rows shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t j = 0; j < out.cols(); ++j)
      out.at(i, j) *= mask[static_cast<std::size_t>(i)];
  Var v = push(std::move(out), "scale_rows", {});
  nodes_.back().back = [this, a, v, mask]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j)
        ga.at(i, j) += mask[static_cast<std::size_t>(i)] * g.at(i, j);
  };
  return v;
}

Graph::Var Graph::lookup_rows(Var table, const std::vector<std::int64_t>& ids) {
  const Tensor& t = val(table);
  if (t.rank() != 2) fail(errc::input, "lookup_rows expects a 2-d table");
  const std::int64_t d = t.cols();
  Tensor out({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows())
      fail(errc::input, "lookup_rows: id " + std::to_string(ids[i]) +
                            " outside table of " + std::to_string(t.rows()));
    for (std::int64_t j = 0; j < d; ++j)
      out.at(static_cast<std::int64_t>(i), j) = t.at(ids[i], j);
  }
  Var v = push(std::move(out), "lookup_rows", {});
  nodes_.back().back = [this, table, v, ids]() {
    const Tensor& g = grad(v);
    Tensor& gt = grad_ref(table);
    const std::int64_t d = g.cols();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::int64_t j = 0; j < d; ++j)
        gt.at(ids[i], j) += g.at(static_cast<std::int64_t>(i), j);
  };
  return v;
}

Graph::Var Graph::concat_cols(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows())
    fail(errc::input, "concat_cols row mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  const std::int64_t n = ta.rows(), ca = ta.cols(), cb = tb.cols();
  Tensor out({n, ca + cb});
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < ca; ++j) out.at(i, j) = ta.at(i, j);
    for (std::int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = tb.at(i, j);
  }
  Var v = push(std::move(out), "concat_cols", {});
  nodes_.back().back = [this, a, b, v, ca, cb]() {
    const Tensor& g = grad(v);
    Tensor& ga = grad_ref(a);
    Tensor& gb = grad_ref(b);
    for (std::int64_t i = 0; i < g.rows(); ++i) {
      for (std::int64_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
      for (std::int64_t j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
    }
  };
  return v;
}

Graph::Var Graph::stack_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(errc::input, "stack_rows: no parts");
  const std::int64_t c = val(parts[0]).cols();
  std::int64_t n = 0;
  for (Var p : parts) {
    const Tensor& t = val(p);
    if (t.rank() != 2 || t.cols() != c)
      fail(errc::input, "stack_rows column mismatch");
    n += t.rows();
  }
  Tensor out({n, c});
  std::int64_t row = 0;
  for (Var p : parts) {
    const Tensor& t = val(p);
    for (std::int64_t i = 0; i < t.rows(); ++i, ++row)
      for (std::int64_t j = 0; j < c; ++j) out.at(row, j) = t.at(i, j);
  }
  Var v = push(std::move(out), "stack_rows", {});
  nodes_.back().back = [this, parts, v]() {
    const Tensor& g = grad(v);
    std::int64_t row = 0;
    for (Var p : parts) {
      Tensor& gp = grad_ref(p);
      for (std::int64_t i = 0; i < gp.rows(); ++i, ++row)
        for (std::int64_t j = 0; j < gp.cols(); ++j)
          gp.at(i, j) += g.at(row, j);
    }
  };
  return v;
}

Graph::Var Graph::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < ta.size(); ++i) s += ta.at(i);
  Var v = push(Tensor::scalar(s), "sum_all", {});
  nodes_.back().back = [this, a, v]() {
    const double g = grad(v).at(0);
    Tensor& ga = grad_ref(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
  };
  return v;
}

Graph::Var Graph::softmax_xent(Var logits,
                               const std::vector<std::int64_t>& targets,
                               const std::vector<double>& mask) {
  const Tensor& lg = val(logits);
  const std::int64_t n = lg.rows(), c = lg.cols();
  if (static_cast<std::int64_t>(targets.size()) != n ||
      static_cast<std::int64_t>(mask.size()) != n)
    fail(errc::input, "softmax_xent: targets/mask length must equal rows");
  double weight = 0.0;
  for (double m : mask) weight += m;
  if (weight == 0.0)
    fail(errc::degenerate, "softmax_xent: mask selects no positions");
  Tensor probs = softmax(lg);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0.0) continue;
    const std::int64_t t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c)
      fail(errc::input, "softmax_xent: target out of range");
    total -= mask[static_cast<std::size_t>(i)] * std::log(probs.at(i, t));
  }
  Var v = push(Tensor::scalar(total / weight), "softmax_xent", {});
  nodes_.back().back = [this, logits, v, targets, mask, probs, weight]() {
    const double g = grad(v).at(0);
    Tensor& gl = grad_ref(logits);
    const std::int64_t c2 = gl.cols();
    for (std::int64_t i = 0; i < gl.rows(); ++i) {
      const double m = mask[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      const double w = g * m / weight;
      for (std::int64_t j = 0; j < c2; ++j) gl.at(i, j) += w * probs.at(i, j);
      gl.at(i, targets[static_cast<std::size_t>(i)]) -= w;
    }
  };
  return v;
}

void Graph::backward(Var loss) {
  const Tensor& lt = val(loss);
  if (lt.size() != 1)
    fail(errc::internal, "backward: loss must be a scalar, got " +
                             lt.shape_str());
  if (!std::isfinite(lt.at(0))) {
    for (const auto& node : nodes_) {
      if (!node.value.all_finite())
        fail(errc::numeric, std::string("non-finite loss; first non-finite "
                                        "value produced by op '") +
                                node.op + "'");
    }
    fail(errc::numeric, "non-finite loss");
  }
  for (auto& node : nodes_) {
    node.grad = Tensor(node.value.shape(), 0.0);
  }
  grad_ref(loss).at(0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

}  // namespace mtse
