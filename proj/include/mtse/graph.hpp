#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mtse/tensor.hpp"

namespace mtse {

// Reverse-mode tape. One Graph per loss evaluation: bind leaves, compose ops,
// call backward on a scalar, then read gradients off the leaf vars. Nodes are
// never freed individually; the whole tape dies with the Graph.
class Graph {
 public:
  using Var = std::int32_t;

  Var leaf(Tensor value, const char* op = "leaf");
  Var leaf(const Tensor& value, const char* op, bool copy);

  const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  const Tensor& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }

  // --- elementwise / linear algebra ---
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);                 // same shape
  Var sub(Var a, Var b);                 // same shape
  Var mul(Var a, Var b);                 // elementwise, same shape
  Var add_row(Var a, Var bias);          // bias[m] broadcast over rows
  Var scale(Var a, double s);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var abs_(Var a);

  // out[i,j] = mask[i]*a[i,j] + (1-mask[i])*b[i,j]; mask entries are 0 or 1.
  Var lerp_rows(const std::vector<double>& mask, Var a, Var b);

  // GRU state update, kept in the literal (1-z)*h + z*c form so saturated
  // gates reproduce h or c exactly.
  Var gated_blend(Var z, Var h_prev, Var cand);
  // out[i,j] = mask[i]*a[i,j]
  Var scale_rows(const std::vector<double>& mask, Var a);

  // out[i,:] = table[ids[i],:]
  Var lookup_rows(Var table, const std::vector<std::int64_t>& ids);

  Var concat_cols(Var a, Var b);

  // Vertical stack of equal-width matrices, in argument order.
  Var stack_rows(const std::vector<Var>& parts);

  Var sum_all(Var a);                    // -> shape [1]

  // Mean over masked positions of -log softmax(logits)[i, targets[i]].
  // Shape [1]. Throws a degenerate error when the mask is all zero.
  Var softmax_xent(Var logits, const std::vector<std::int64_t>& targets,
                   const std::vector<double>& mask);

  // Seeds d(loss)=1 and sweeps the tape in reverse. loss must have size 1 and
  // be finite; a non-finite loss raises a numeric error naming the first op
  // on the tape that produced a non-finite value.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    const char* op;
    std::function<void()> back;  // empty for leaves
  };

  Var push(Tensor value, const char* op, std::function<void()> back);
  Tensor& grad_ref(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

  std::vector<Node> nodes_;
};

}  // namespace mtse
