#include "mtse/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "mtse/errors.hpp"

namespace mtse {

namespace {

Tensor init_matrix(std::int64_t rows, std::int64_t cols, std::int64_t fan_in,
                   Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t({rows, cols});
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.at(i) = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

GruCellParams GruCellParams::init(std::int64_t input_dim, std::int64_t hidden,
                                  Rng& rng) {
  GruCellParams c;
  c.w_reset = init_matrix(input_dim, hidden, input_dim, rng);
  c.u_reset = init_matrix(hidden, hidden, hidden, rng);
  c.b_reset = Tensor({hidden}, 0.0);
  c.w_update = init_matrix(input_dim, hidden, input_dim, rng);
  c.u_update = init_matrix(hidden, hidden, hidden, rng);
  c.b_update = Tensor({hidden}, 0.0);
  c.w_cand = init_matrix(input_dim, hidden, input_dim, rng);
  c.u_cand = init_matrix(hidden, hidden, hidden, rng);
  c.b_cand = Tensor({hidden}, 0.0);
  return c;
}

BiEncoderParams BiEncoderParams::init(std::int64_t vocab_size,
                                      std::int64_t emb_dim,
                                      std::int64_t hidden,
                                      std::int64_t n_layers, Rng& rng) {
  if (n_layers < 1 || n_layers > 2)
    fail(errc::config, "encoder layers must be 1 or 2");
  BiEncoderParams enc;
  enc.embedding = init_matrix(vocab_size, emb_dim, emb_dim, rng);
  std::int64_t in_dim = emb_dim;
  for (std::int64_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.fwd = GruCellParams::init(in_dim, hidden, rng);
    layer.bwd = GruCellParams::init(in_dim, hidden, rng);
    enc.layers.push_back(std::move(layer));
    in_dim = 2 * hidden;  // next layer reads concatenated states
  }
  return enc;
}

GruCellVars bind_gru_cell(Graph& g, ParamBinding& pb, const std::string& prefix,
                          const GruCellParams& cell) {
  GruCellVars v;
  v.w_reset = pb.bind(g, prefix + ".w_reset", cell.w_reset);
  v.u_reset = pb.bind(g, prefix + ".u_reset", cell.u_reset);
  v.b_reset = pb.bind(g, prefix + ".b_reset", cell.b_reset);
  v.w_update = pb.bind(g, prefix + ".w_update", cell.w_update);
  v.u_update = pb.bind(g, prefix + ".u_update", cell.u_update);
  v.b_update = pb.bind(g, prefix + ".b_update", cell.b_update);
  v.w_cand = pb.bind(g, prefix + ".w_cand", cell.w_cand);
  v.u_cand = pb.bind(g, prefix + ".u_cand", cell.u_cand);
  v.b_cand = pb.bind(g, prefix + ".b_cand", cell.b_cand);
  return v;
}

BiEncoderVars bind_encoder(Graph& g, ParamBinding& pb,
                           const BiEncoderParams& enc) {
  BiEncoderVars v;
  v.embedding = pb.bind(g, "encoder.embedding", enc.embedding);
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    BiEncoderVars::Layer lv;
    const std::string prefix = "encoder.l" + std::to_string(l);
    lv.fwd = bind_gru_cell(g, pb, prefix + ".fwd", enc.layers[l].fwd);
    lv.bwd = bind_gru_cell(g, pb, prefix + ".bwd", enc.layers[l].bwd);
    v.layers.push_back(lv);
  }
  return v;
}

Graph::Var gru_cell_step_graph(Graph& g, Graph::Var x_t, Graph::Var h_prev,
                               const GruCellVars& cell) {
  auto r = g.sigmoid(g.add_row(
      g.add(g.matmul(x_t, cell.w_reset), g.matmul(h_prev, cell.u_reset)),
      cell.b_reset));
  auto z = g.sigmoid(g.add_row(
      g.add(g.matmul(x_t, cell.w_update), g.matmul(h_prev, cell.u_update)),
      cell.b_update));
  auto cand = g.tanh_(g.add_row(
      g.add(g.matmul(x_t, cell.w_cand),
            g.matmul(g.mul(r, h_prev), cell.u_cand)),
      cell.b_cand));
  return g.gated_blend(z, h_prev, cand);
}

namespace {

// Per-position 0/1 row masks for a batch.
std::vector<double> position_mask(const SentenceBatch& batch, std::int64_t t) {
  std::vector<double> m(static_cast<std::size_t>(batch.n));
  for (std::int64_t i = 0; i < batch.n; ++i)
    m[static_cast<std::size_t>(i)] =
        t < batch.lengths[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return m;
}

std::vector<std::int64_t> column_ids(const SentenceBatch& batch,
                                     std::int64_t t) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(batch.n));
  for (std::int64_t i = 0; i < batch.n; ++i)
    ids[static_cast<std::size_t>(i)] = batch.at(i, t);
  return ids;
}

struct DirectionOut {
  std::vector<Graph::Var> states;  // per position, masked to zero at pads
  Graph::Var final_state;          // frozen at each row's last processed step
};

DirectionOut run_direction(Graph& g, const GruCellVars& cell,
                           const std::vector<Graph::Var>& inputs,
                           const SentenceBatch& batch, bool backward) {
  const std::int64_t tmax = batch.max_len;
  const std::int64_t hidden = g.val(cell.u_reset).rows();
  DirectionOut out;
  out.states.resize(static_cast<std::size_t>(tmax));
  Graph::Var h = g.leaf(Tensor({batch.n, hidden}, 0.0), "h0");
  for (std::int64_t step = 0; step < tmax; ++step) {
    const std::int64_t t = backward ? tmax - 1 - step : step;
    const auto mask = position_mask(batch, t);
    auto cand = gru_cell_step_graph(
        g, inputs[static_cast<std::size_t>(t)], h, cell);
    h = g.lerp_rows(mask, cand, h);
    out.states[static_cast<std::size_t>(t)] = g.scale_rows(mask, h);
  }
  out.final_state = h;
  return out;
}

}  // namespace

EncodeVars encode_graph(Graph& g, const BiEncoderVars& enc,
                        const SentenceBatch& batch) {
  if (batch.n < 1) fail(errc::input, "encode: empty batch");
  for (auto len : batch.lengths)
    if (len < 1) fail(errc::input, "encode: sentence of length 0");
  const std::int64_t tmax = batch.max_len;

  // layer 0 inputs: embedded tokens
  std::vector<Graph::Var> inputs;
  inputs.reserve(static_cast<std::size_t>(tmax));
  for (std::int64_t t = 0; t < tmax; ++t)
    inputs.push_back(g.lookup_rows(enc.embedding, column_ids(batch, t)));

  DirectionOut fwd, bwd;
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    fwd = run_direction(g, enc.layers[l].fwd, inputs, batch, false);
    bwd = run_direction(g, enc.layers[l].bwd, inputs, batch, true);
    if (l + 1 < enc.layers.size()) {
      std::vector<Graph::Var> next_inputs;
      next_inputs.reserve(static_cast<std::size_t>(tmax));
      for (std::int64_t t = 0; t < tmax; ++t)
        next_inputs.push_back(
            g.concat_cols(fwd.states[static_cast<std::size_t>(t)],
                          bwd.states[static_cast<std::size_t>(t)]));
      inputs = std::move(next_inputs);
    }
  }

  EncodeVars out;
  out.fwd_states = fwd.states;
  out.bwd_states = bwd.states;
  out.h_x = g.concat_cols(fwd.final_state, bwd.final_state);
  return out;
}

Tensor gru_cell_step(const Tensor& x_t, const Tensor& h_prev,
                     const GruCellParams& cell) {
  Graph g;
  ParamBinding pb;
  auto vars = bind_gru_cell(g, pb, "cell", cell);
  auto xv = g.leaf(x_t, "x");
  auto hv = g.leaf(h_prev, "h");
  return g.val(gru_cell_step_graph(g, xv, hv, vars));
}

EncodeResult encode_batch(const BiEncoderParams& enc,
                          const SentenceBatch& batch) {
  Graph g;
  ParamBinding pb;
  auto vars = bind_encoder(g, pb, enc);
  auto ev = encode_graph(g, vars, batch);
  EncodeResult out;
  out.h_x = g.val(ev.h_x);
  for (auto v : ev.fwd_states) out.h_fwd.push_back(g.val(v));
  for (auto v : ev.bwd_states) out.h_bwd.push_back(g.val(v));
  return out;
}

Pooling pooling_from_name(const std::string& name) {
  if (name == "last") return Pooling::last;
  if (name == "max") return Pooling::max;
  fail(errc::config, "unknown pooling strategy '" + name + "'");
}

const char* pooling_name(Pooling p) {
  return p == Pooling::last ? "last" : "max";
}

Tensor pool_sequence(const std::vector<Tensor>& states,
                     const std::vector<std::int64_t>& lengths,
                     Pooling strategy) {
  if (states.empty()) fail(errc::input, "pool_sequence: no states");
  const std::int64_t n = states[0].rows();
  const std::int64_t d = states[0].cols();
  if (static_cast<std::int64_t>(lengths.size()) != n)
    fail(errc::input, "pool_sequence: lengths/rows mismatch");
  Tensor out({n, d});
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t len = lengths[static_cast<std::size_t>(i)];
    if (len < 1 || len > static_cast<std::int64_t>(states.size()))
      fail(errc::input, "pool_sequence: length out of range");
    if (strategy == Pooling::last) {
      const Tensor& s = states[static_cast<std::size_t>(len - 1)];
      for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = s.at(i, j);
    } else {
      for (std::int64_t j = 0; j < d; ++j) {
        double best = states[0].at(i, j);
        for (std::int64_t t = 1; t < len; ++t)
          best = std::max(best,
                          states[static_cast<std::size_t>(t)].at(i, j));
        out.at(i, j) = best;
      }
    }
  }
  return out;
}

Tensor pooled_representation(const EncodeResult& enc,
                             const SentenceBatch& batch, Pooling strategy) {
  if (strategy == Pooling::last) return enc.h_x;
  std::vector<Tensor> states;
  states.reserve(enc.h_fwd.size());
  for (std::size_t t = 0; t < enc.h_fwd.size(); ++t) {
    const Tensor& f = enc.h_fwd[t];
    const Tensor& b = enc.h_bwd[t];
    Tensor s({f.rows(), f.cols() + b.cols()});
    for (std::int64_t i = 0; i < f.rows(); ++i) {
      for (std::int64_t j = 0; j < f.cols(); ++j) s.at(i, j) = f.at(i, j);
      for (std::int64_t j = 0; j < b.cols(); ++j)
        s.at(i, f.cols() + j) = b.at(i, j);
    }
    states.push_back(std::move(s));
  }
  return pool_sequence(states, batch.lengths, strategy);
}

}  // namespace mtse
