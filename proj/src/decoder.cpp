#include "mtse/decoder.hpp"

#include <cmath>
#include <limits>

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

CondGruParams CondGruParams::init(std::int64_t vocab_size, std::int64_t emb_dim,
                                  std::int64_t hidden, std::int64_t cond_dim,
                                  Rng& rng) {
  if (vocab_size < Vocabulary::kReserved)
    fail(errc::config, "decoder vocabulary must contain the special tokens");
  CondGruParams d;
  d.embedding = init_matrix(vocab_size, emb_dim, emb_dim, rng);
  d.w_reset = init_matrix(emb_dim, hidden, emb_dim, rng);
  d.u_reset = init_matrix(hidden, hidden, hidden, rng);
  d.c_reset = init_matrix(cond_dim, hidden, cond_dim, rng);
  d.b_reset = Tensor({hidden}, 0.0);
  d.w_update = init_matrix(emb_dim, hidden, emb_dim, rng);
  d.u_update = init_matrix(hidden, hidden, hidden, rng);
  d.c_update = init_matrix(cond_dim, hidden, cond_dim, rng);
  d.b_update = Tensor({hidden}, 0.0);
  d.w_cand = init_matrix(emb_dim, hidden, emb_dim, rng);
  d.u_cand = init_matrix(hidden, hidden, hidden, rng);
  d.c_cand = init_matrix(cond_dim, hidden, cond_dim, rng);
  d.b_cand = Tensor({hidden}, 0.0);
  d.w_init = init_matrix(cond_dim, hidden, cond_dim, rng);
  d.b_init = Tensor({hidden}, 0.0);
  d.w_out = init_matrix(hidden, vocab_size, hidden, rng);
  d.b_out = Tensor({vocab_size}, 0.0);
  return d;
}

CondGruVars bind_decoder(Graph& g, ParamBinding& pb, const std::string& prefix,
                         const CondGruParams& dec) {
  CondGruVars v;
  v.embedding = pb.bind(g, prefix + ".embedding", dec.embedding);
  v.w_reset = pb.bind(g, prefix + ".w_reset", dec.w_reset);
  v.u_reset = pb.bind(g, prefix + ".u_reset", dec.u_reset);
  v.c_reset = pb.bind(g, prefix + ".c_reset", dec.c_reset);
  v.b_reset = pb.bind(g, prefix + ".b_reset", dec.b_reset);
  v.w_update = pb.bind(g, prefix + ".w_update", dec.w_update);
  v.u_update = pb.bind(g, prefix + ".u_update", dec.u_update);
  v.c_update = pb.bind(g, prefix + ".c_update", dec.c_update);
  v.b_update = pb.bind(g, prefix + ".b_update", dec.b_update);
  v.w_cand = pb.bind(g, prefix + ".w_cand", dec.w_cand);
  v.u_cand = pb.bind(g, prefix + ".u_cand", dec.u_cand);
  v.c_cand = pb.bind(g, prefix + ".c_cand", dec.c_cand);
  v.b_cand = pb.bind(g, prefix + ".b_cand", dec.b_cand);
  v.w_init = pb.bind(g, prefix + ".w_init", dec.w_init);
  v.b_init = pb.bind(g, prefix + ".b_init", dec.b_init);
  v.w_out = pb.bind(g, prefix + ".w_out", dec.w_out);
  v.b_out = pb.bind(g, prefix + ".b_out", dec.b_out);
  return v;
}

Graph::Var cond_gru_step_graph(Graph& g, Graph::Var x_t, Graph::Var h_prev,
                               Graph::Var h_x, const CondGruVars& dec) {
  auto r = g.sigmoid(g.add_row(
      g.add(g.add(g.matmul(x_t, dec.w_reset), g.matmul(h_prev, dec.u_reset)),
            g.matmul(h_x, dec.c_reset)),
      dec.b_reset));
  auto z = g.sigmoid(g.add_row(
      g.add(g.add(g.matmul(x_t, dec.w_update), g.matmul(h_prev, dec.u_update)),
            g.matmul(h_x, dec.c_update)),
      dec.b_update));
  auto cand = g.tanh_(g.add_row(
      g.add(g.add(g.matmul(x_t, dec.w_cand),
                  g.matmul(g.mul(r, h_prev), dec.u_cand)),
            g.matmul(h_x, dec.c_cand)),
      dec.b_cand));
  return g.gated_blend(z, h_prev, cand);
}

Graph::Var decoder_init_graph(Graph& g, Graph::Var h_x,
                              const CondGruVars& dec) {
  return g.tanh_(g.add_row(g.matmul(h_x, dec.w_init), dec.b_init));
}

Tensor cond_gru_step(const Tensor& x_t, const Tensor& h_prev,
                     const Tensor& h_x, const CondGruParams& dec) {
  Graph g;
  ParamBinding pb;
  auto vars = bind_decoder(g, pb, "dec", dec);
  return g.val(cond_gru_step_graph(g, g.leaf(x_t, "x"), g.leaf(h_prev, "h"),
                                   g.leaf(h_x, "hx"), vars));
}

Tensor decoder_init(const Tensor& h_x, const CondGruParams& dec) {
  Graph g;
  ParamBinding pb;
  auto vars = bind_decoder(g, pb, "dec", dec);
  return g.val(decoder_init_graph(g, g.leaf(h_x, "hx"), vars));
}

Graph::Var teacher_forced_loss_graph(Graph& g, Graph::Var h_x,
                                     const Seq2SeqBatch& batch,
                                     const CondGruVars& dec) {
  const SentenceBatch& tin = batch.target_in;
  if (tin.n < 1 || tin.max_len < 1)
    fail(errc::input, "teacher_forced_loss: empty target batch");
  auto h = decoder_init_graph(g, h_x, dec);
  std::vector<Graph::Var> step_logits;
  step_logits.reserve(static_cast<std::size_t>(tin.max_len));
  for (std::int64_t t = 0; t < tin.max_len; ++t) {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(tin.n));
    std::vector<double> mask(static_cast<std::size_t>(tin.n));
    for (std::int64_t i = 0; i < tin.n; ++i) {
      ids[static_cast<std::size_t>(i)] = tin.at(i, t);
      mask[static_cast<std::size_t>(i)] =
          t < tin.lengths[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    auto x_t = g.lookup_rows(dec.embedding, ids);
    auto cand = cond_gru_step_graph(g, x_t, h, h_x, dec);
    h = g.lerp_rows(mask, cand, h);
    step_logits.push_back(g.add_row(g.matmul(h, dec.w_out), dec.b_out));
  }
  // stack as (t, i) rows to match the label/mask layout below
  auto logits = g.stack_rows(step_logits);
  std::vector<std::int64_t> flat_targets;
  std::vector<double> flat_mask;
  flat_targets.reserve(static_cast<std::size_t>(tin.n * tin.max_len));
  flat_mask.reserve(static_cast<std::size_t>(tin.n * tin.max_len));
  for (std::int64_t t = 0; t < tin.max_len; ++t)
    for (std::int64_t i = 0; i < tin.n; ++i) {
      flat_targets.push_back(
          batch.target_labels[static_cast<std::size_t>(i * tin.max_len + t)]);
      flat_mask.push_back(
          batch.label_mask[static_cast<std::size_t>(i * tin.max_len + t)]);
    }
  return g.softmax_xent(logits, flat_targets, flat_mask);
}

double teacher_forced_loss(const BiEncoderParams& enc,
                           const CondGruParams& dec,
                           const Seq2SeqBatch& batch) {
  Graph g;
  ParamBinding pb;
  auto enc_vars = bind_encoder(g, pb, enc);
  auto dec_vars = bind_decoder(g, pb, "dec", dec);
  auto encoded = encode_graph(g, enc_vars, batch.source);
  return g.val(teacher_forced_loss_graph(g, encoded.h_x, batch, dec_vars))
      .at(0);
}

std::vector<std::int64_t> greedy_decode(const CondGruParams& dec,
                                        const Tensor& h_x_row,
                                        std::int64_t max_len) {
  if (max_len < 1) fail(errc::input, "greedy_decode: max_len must be >= 1");
  if (h_x_row.rank() != 2 || h_x_row.rows() != 1)
    fail(errc::input, "greedy_decode expects a single 1 x d representation");
  Graph g;
  ParamBinding pb;
  auto vars = bind_decoder(g, pb, "dec", dec);
  auto h_x = g.leaf(h_x_row, "hx");
  auto h = decoder_init_graph(g, h_x, vars);
  std::vector<std::int64_t> out;
  std::int64_t prev = Vocabulary::kBos;
  for (std::int64_t step = 0; step < max_len; ++step) {
    auto x = g.lookup_rows(vars.embedding, {prev});
    h = cond_gru_step_graph(g, x, h, h_x, vars);
    const Tensor& logits =
        g.val(g.add_row(g.matmul(h, vars.w_out), vars.b_out));
    std::int64_t best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < logits.cols(); ++j) {
      if (j == Vocabulary::kBos || j == Vocabulary::kPad) continue;
      if (logits.at(0, j) > best_score) {
        best_score = logits.at(0, j);
        best = j;
      }
    }
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace mtse
