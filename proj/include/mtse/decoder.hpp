#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtse/data.hpp"
#include "mtse/encoder.hpp"
#include "mtse/graph.hpp"

namespace mtse {

// Conditional GRU decoder: every gate receives an extra additive term from
// the fixed encoder representation h_x, the initial state is a learned tanh
// projection of h_x, and a linear layer maps states to target-vocab logits.
struct CondGruParams {
  Tensor embedding;  // |V_tgt| x emb_dim
  Tensor w_reset, u_reset, c_reset, b_reset;
  Tensor w_update, u_update, c_update, b_update;
  Tensor w_cand, u_cand, c_cand, b_cand;
  Tensor w_init, b_init;  // cond_dim -> hidden
  Tensor w_out, b_out;    // hidden -> |V_tgt|

  std::int64_t vocab_size() const { return embedding.rows(); }
  std::int64_t emb_dim() const { return embedding.cols(); }
  std::int64_t hidden() const { return u_reset.rows(); }
  std::int64_t cond_dim() const { return c_reset.rows(); }

  static CondGruParams init(std::int64_t vocab_size, std::int64_t emb_dim,
                            std::int64_t hidden, std::int64_t cond_dim,
                            Rng& rng);
};

struct CondGruVars {
  Graph::Var embedding;
  Graph::Var w_reset, u_reset, c_reset, b_reset;
  Graph::Var w_update, u_update, c_update, b_update;
  Graph::Var w_cand, u_cand, c_cand, b_cand;
  Graph::Var w_init, b_init;
  Graph::Var w_out, b_out;
};

CondGruVars bind_decoder(Graph& g, ParamBinding& pb, const std::string& prefix,
                         const CondGruParams& dec);

Graph::Var cond_gru_step_graph(Graph& g, Graph::Var x_t, Graph::Var h_prev,
                               Graph::Var h_x, const CondGruVars& dec);
Graph::Var decoder_init_graph(Graph& g, Graph::Var h_x,
                              const CondGruVars& dec);

// Plain-tensor wrappers.
Tensor cond_gru_step(const Tensor& x_t, const Tensor& h_prev,
                     const Tensor& h_x, const CondGruParams& dec);
Tensor decoder_init(const Tensor& h_x, const CondGruParams& dec);

// Teacher-forced mean cross-entropy per non-pad label position. target_in
// rows start from <s>; labels end with </s>.
Graph::Var teacher_forced_loss_graph(Graph& g, Graph::Var h_x,
                                     const Seq2SeqBatch& batch,
                                     const CondGruVars& dec);

double teacher_forced_loss(const BiEncoderParams& enc,
                           const CondGruParams& dec,
                           const Seq2SeqBatch& batch);

// Greedy decoding for one sentence representation (1 x cond_dim): starts
// from <s>, emits argmax tokens (ties to the lowest id, <s>/<pad> masked
// out), stops at </s> or max_len.
std::vector<std::int64_t> greedy_decode(const CondGruParams& dec,
                                        const Tensor& h_x_row,
                                        std::int64_t max_len);

}  // namespace mtse
