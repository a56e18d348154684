#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtse/data.hpp"
#include "mtse/graph.hpp"
#include "mtse/rng.hpp"
#include "mtse/tensor.hpp"

namespace mtse {

// Gate parameters of a plain GRU cell:
//   r = sigmoid(x W_r + h U_r + b_r)
//   z = sigmoid(x W_z + h U_z + b_z)
//   c = tanh(x W_c + (r*h) U_c + b_c)
//   h' = (1-z)*h + z*c
struct GruCellParams {
  Tensor w_reset, u_reset, b_reset;
  Tensor w_update, u_update, b_update;
  Tensor w_cand, u_cand, b_cand;

  std::int64_t input_dim() const { return w_reset.rows(); }
  std::int64_t hidden() const { return u_reset.rows(); }

  static GruCellParams init(std::int64_t input_dim, std::int64_t hidden,
                            Rng& rng);
};

struct GruCellVars {
  Graph::Var w_reset, u_reset, b_reset;
  Graph::Var w_update, u_update, b_update;
  Graph::Var w_cand, u_cand, b_cand;
};

// Shared bidirectional encoder: one embedding table, one or two stacked
// layers of forward/backward cells. The sentence representation is the
// concatenation of the top layer's final forward and final backward states.
struct BiEncoderParams {
  Tensor embedding;  // |V| x emb_dim
  struct Layer {
    GruCellParams fwd;
    GruCellParams bwd;
  };
  std::vector<Layer> layers;

  std::int64_t emb_dim() const { return embedding.cols(); }
  std::int64_t hidden() const { return layers.back().fwd.hidden(); }
  std::int64_t rep_dim() const { return 2 * hidden(); }

  static BiEncoderParams init(std::int64_t vocab_size, std::int64_t emb_dim,
                              std::int64_t hidden, std::int64_t n_layers,
                              Rng& rng);
};

struct BiEncoderVars {
  Graph::Var embedding;
  struct Layer {
    GruCellVars fwd;
    GruCellVars bwd;
  };
  std::vector<Layer> layers;
};

// (name, var) pairs accumulated while binding parameters into a graph;
// names match MultiTaskModel::named_params so gradients map back.
struct ParamBinding {
  std::vector<std::pair<std::string, Graph::Var>> items;

  Graph::Var bind(Graph& g, const std::string& name, const Tensor& t) {
    Graph::Var v = g.leaf(t, "param");
    items.emplace_back(name, v);
    return v;
  }
};

GruCellVars bind_gru_cell(Graph& g, ParamBinding& pb, const std::string& prefix,
                          const GruCellParams& cell);
BiEncoderVars bind_encoder(Graph& g, ParamBinding& pb,
                           const BiEncoderParams& enc);

Graph::Var gru_cell_step_graph(Graph& g, Graph::Var x_t, Graph::Var h_prev,
                               const GruCellVars& cell);

// Plain-tensor convenience wrapper around the graph implementation.
Tensor gru_cell_step(const Tensor& x_t, const Tensor& h_prev,
                     const GruCellParams& cell);

struct EncodeVars {
  Graph::Var h_x;                       // n x 2H
  std::vector<Graph::Var> fwd_states;   // per position, n x H, zero at pads
  std::vector<Graph::Var> bwd_states;
};

EncodeVars encode_graph(Graph& g, const BiEncoderVars& enc,
                        const SentenceBatch& batch);

struct EncodeResult {
  Tensor h_x;
  std::vector<Tensor> h_fwd;  // per position, zero rows at padded slots
  std::vector<Tensor> h_bwd;
};

EncodeResult encode_batch(const BiEncoderParams& enc,
                          const SentenceBatch& batch);

enum class Pooling { last, max };

Pooling pooling_from_name(const std::string& name);
const char* pooling_name(Pooling p);

// Generic sequence pooling: `last` picks the state at position length-1,
// `max` the coordinatewise maximum over positions < length.
Tensor pool_sequence(const std::vector<Tensor>& states,
                     const std::vector<std::int64_t>& lengths,
                     Pooling strategy);

// Encoder-level pooling over the concatenated bidirectional states; `last`
// returns h_x itself.
Tensor pooled_representation(const EncodeResult& enc,
                             const SentenceBatch& batch, Pooling strategy);

}  // namespace mtse
