#include "mtse/nli.hpp"

#include <cmath>

#include "mtse/errors.hpp"

namespace mtse {

MlpParams MlpParams::init(const std::vector<std::int64_t>& dims,
                          const std::vector<double>& dropout_rates, Rng& rng) {
  if (dims.size() < 2) fail(errc::config, "mlp needs at least input and output dims");
  if (dropout_rates.size() != dims.size() - 1)
    fail(errc::config, "mlp dropout rates must match layer count");
  for (double r : dropout_rates)
    if (r < 0.0 || r >= 1.0)
      fail(errc::config, "dropout rate must lie in [0,1)");
  MlpParams mlp;
  mlp.dropout = dropout_rates;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    layer.weight = Tensor({dims[l], dims[l + 1]});
    for (std::int64_t i = 0; i < layer.weight.size(); ++i)
      layer.weight.at(i) = rng.uniform(-bound, bound);
    layer.bias = Tensor({dims[l + 1]}, 0.0);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

MlpVars bind_mlp(Graph& g, ParamBinding& pb, const std::string& prefix,
                 const MlpParams& mlp) {
  MlpVars v;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    MlpVars::Layer lv;
    const std::string p = prefix + ".l" + std::to_string(l);
    lv.weight = pb.bind(g, p + ".weight", mlp.layers[l].weight);
    lv.bias = pb.bind(g, p + ".bias", mlp.layers[l].bias);
    v.layers.push_back(lv);
  }
  return v;
}

DropoutPlan draw_dropout(const MlpParams& mlp, std::int64_t n_rows, Rng& rng) {
  DropoutPlan plan;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const double rate = mlp.dropout[l];
    if (rate == 0.0) {
      plan.masks.emplace_back(std::nullopt);
      continue;
    }
    const std::int64_t d = mlp.layers[l].weight.rows();
    Tensor mask({n_rows, d});
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::int64_t i = 0; i < mask.size(); ++i)
      mask.at(i) = rng.next_double() < rate ? 0.0 : keep_scale;
    plan.masks.emplace_back(std::move(mask));
  }
  return plan;
}

DropoutPlan eval_dropout(const MlpParams& mlp) {
  DropoutPlan plan;
  plan.masks.resize(mlp.layers.size());
  return plan;
}

Graph::Var mlp_forward_graph(Graph& g, Graph::Var x, const MlpVars& mlp,
                             const DropoutPlan& plan) {
  if (plan.masks.size() != mlp.layers.size())
    fail(errc::input, "dropout plan does not match mlp layer count");
  Graph::Var h = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    if (plan.masks[l])
      h = g.mul(h, g.leaf(*plan.masks[l], "dropout_mask"));
    h = g.add_row(g.matmul(h, mlp.layers[l].weight), mlp.layers[l].bias);
    if (l + 1 < mlp.layers.size()) h = g.tanh_(h);
  }
  return h;
}

Tensor mlp_forward(const Tensor& features, const MlpParams& mlp,
                   bool train_mode, Rng* rng) {
  Graph g;
  ParamBinding pb;
  auto vars = bind_mlp(g, pb, "mlp", mlp);
  DropoutPlan plan;
  if (train_mode) {
    if (!rng) fail(errc::input, "mlp_forward: train mode needs an rng");
    plan = draw_dropout(mlp, features.rows(), *rng);
  } else {
    plan = eval_dropout(mlp);
  }
  return g.val(mlp_forward_graph(g, g.leaf(features, "x"), vars, plan));
}

Graph::Var pair_features_graph(Graph& g, Graph::Var u, Graph::Var v) {
  const Tensor& tu = g.val(u);
  const Tensor& tv = g.val(v);
  if (!tu.same_shape(tv))
    fail(errc::input, "pair_features dimension mismatch: " + tu.shape_str() +
                          " vs " + tv.shape_str());
  auto diff = g.abs_(g.sub(u, v));
  auto prod = g.mul(u, v);
  return g.concat_cols(g.concat_cols(u, v), g.concat_cols(diff, prod));
}

Tensor pair_features(const Tensor& u, const Tensor& v) {
  Graph g;
  auto uu = g.leaf(u.rank() == 1 ? Tensor({1, u.size()}, u.values()) : u, "u");
  auto vv = g.leaf(v.rank() == 1 ? Tensor({1, v.size()}, v.values()) : v, "v");
  Tensor out = g.val(pair_features_graph(g, uu, vv));
  if (u.rank() == 1) return Tensor({out.size()}, out.values());
  return out;
}

Graph::Var nli_loss_graph(Graph& g, const BiEncoderVars& enc,
                          const MlpVars& mlp, const PairBatch& batch,
                          const DropoutPlan& plan) {
  auto prem = encode_graph(g, enc, batch.premise);
  auto hyp = encode_graph(g, enc, batch.hypothesis);
  auto feats = pair_features_graph(g, prem.h_x, hyp.h_x);
  auto logits = mlp_forward_graph(g, feats, mlp, plan);
  std::vector<double> ones(batch.labels.size(), 1.0);
  return g.softmax_xent(logits, batch.labels, ones);
}

double nli_loss(const BiEncoderParams& enc, const MlpParams& mlp,
                const PairBatch& batch, const DropoutPlan& plan) {
  Graph g;
  ParamBinding pb;
  auto enc_vars = bind_encoder(g, pb, enc);
  auto mlp_vars = bind_mlp(g, pb, "nli", mlp);
  return g.val(nli_loss_graph(g, enc_vars, mlp_vars, batch, plan)).at(0);
}

}  // namespace mtse
