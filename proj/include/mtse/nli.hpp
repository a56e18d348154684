#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mtse/data.hpp"
#include "mtse/encoder.hpp"
#include "mtse/graph.hpp"

namespace mtse {

// Tanh MLP with per-layer input dropout rates (inverted dropout during
// training; identity at evaluation). The final layer is linear.
struct MlpParams {
  struct Layer {
    Tensor weight;
    Tensor bias;
  };
  std::vector<Layer> layers;
  std::vector<double> dropout;  // rate applied to each layer's input

  std::int64_t input_dim() const { return layers.front().weight.rows(); }
  std::int64_t output_dim() const { return layers.back().weight.cols(); }

  // dims = {input, hidden..., classes}; dropout_rates aligned with layers.
  static MlpParams init(const std::vector<std::int64_t>& dims,
                        const std::vector<double>& dropout_rates, Rng& rng);
};

struct MlpVars {
  struct Layer {
    Graph::Var weight;
    Graph::Var bias;
  };
  std::vector<Layer> layers;
};

MlpVars bind_mlp(Graph& g, ParamBinding& pb, const std::string& prefix,
                 const MlpParams& mlp);

// Dropout masks drawn once per forward pass; kept entries scaled by
// 1/(1-rate). An empty slot means no dropout at that layer.
struct DropoutPlan {
  std::vector<std::optional<Tensor>> masks;
};

DropoutPlan draw_dropout(const MlpParams& mlp, std::int64_t n_rows, Rng& rng);
DropoutPlan eval_dropout(const MlpParams& mlp);

Graph::Var mlp_forward_graph(Graph& g, Graph::Var x, const MlpVars& mlp,
                             const DropoutPlan& plan);

// Plain forward pass; train_mode draws masks from rng, eval ignores rng.
Tensor mlp_forward(const Tensor& features, const MlpParams& mlp,
                   bool train_mode, Rng* rng);

// [u; v; |u-v|; u*v] in that order; inputs are row-aligned n x d matrices.
Graph::Var pair_features_graph(Graph& g, Graph::Var u, Graph::Var v);
Tensor pair_features(const Tensor& u, const Tensor& v);

// Encode both sides with the shared encoder (h_x), classify the pair
// features with the MLP, mean cross-entropy over the batch.
Graph::Var nli_loss_graph(Graph& g, const BiEncoderVars& enc,
                          const MlpVars& mlp, const PairBatch& batch,
                          const DropoutPlan& plan);

double nli_loss(const BiEncoderParams& enc, const MlpParams& mlp,
                const PairBatch& batch, const DropoutPlan& plan);

}  // namespace mtse
