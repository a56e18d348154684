#include <doctest.h>

#include <cmath>

#include "mtse/decoder.hpp"
#include "mtse/errors.hpp"
#include "mtse/optim.hpp"

using namespace mtse;

namespace {

CondGruParams random_decoder(std::int64_t vocab, std::int64_t emb,
                             std::int64_t hidden, std::int64_t cond,
                             std::uint64_t seed) {
  Rng rng(seed);
  return CondGruParams::init(vocab, emb, hidden, cond, rng);
}

// scalar-loop conditional GRU step for one row
std::vector<double> scalar_cond_step(const std::vector<double>& x,
                                     const std::vector<double>& h,
                                     const std::vector<double>& hx,
                                     const CondGruParams& d) {
  const auto emb = static_cast<std::size_t>(d.emb_dim());
  const auto hid = static_cast<std::size_t>(d.hidden());
  const auto cond = static_cast<std::size_t>(d.cond_dim());
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& c,
                  const Tensor& b, const std::vector<double>& hh) {
    std::vector<double> out(hid);
    for (std::size_t j = 0; j < hid; ++j) {
      double acc = b.at(static_cast<std::int64_t>(j));
      for (std::size_t k = 0; k < emb; ++k)
        acc += x[k] * w.at(static_cast<std::int64_t>(k),
                           static_cast<std::int64_t>(j));
      for (std::size_t k = 0; k < hid; ++k)
        acc += hh[k] * u.at(static_cast<std::int64_t>(k),
                            static_cast<std::int64_t>(j));
      for (std::size_t k = 0; k < cond; ++k)
        acc += hx[k] * c.at(static_cast<std::int64_t>(k),
                            static_cast<std::int64_t>(j));
      out[j] = acc;
    }
    return out;
  };
  auto r_pre = gate(d.w_reset, d.u_reset, d.c_reset, d.b_reset, h);
  auto z_pre = gate(d.w_update, d.u_update, d.c_update, d.b_update, h);
  std::vector<double> r(hid), z(hid), rh(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    r[j] = 1.0 / (1.0 + std::exp(-r_pre[j]));
    z[j] = 1.0 / (1.0 + std::exp(-z_pre[j]));
    rh[j] = r[j] * h[j];
  }
  auto c_pre = gate(d.w_cand, d.u_cand, d.c_cand, d.b_cand, rh);
  std::vector<double> out(hid);
  for (std::size_t j = 0; j < hid; ++j)
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(c_pre[j]);
  return out;
}

Seq2SeqBatch tiny_batch(const Vocabulary& src, const Vocabulary& tgt,
                        const std::vector<Seq2SeqExample>& ex) {
  std::vector<const Seq2SeqExample*> ptrs;
  for (const auto& e : ex) ptrs.push_back(&e);
  return make_seq2seq_batch(ptrs, src, tgt);
}

}  // namespace

TEST_CASE("cond_gru_step with zero C matrices equals the plain cell") {
  Rng rng(5);
  CondGruParams dec = CondGruParams::init(8, 3, 4, 6, rng);
  dec.c_reset.fill(0.0);
  dec.c_update.fill(0.0);
  dec.c_cand.fill(0.0);

  GruCellParams plain;
  plain.w_reset = dec.w_reset;
  plain.u_reset = dec.u_reset;
  plain.b_reset = dec.b_reset;
  plain.w_update = dec.w_update;
  plain.u_update = dec.u_update;
  plain.b_update = dec.b_update;
  plain.w_cand = dec.w_cand;
  plain.u_cand = dec.u_cand;
  plain.b_cand = dec.b_cand;

  Tensor x({2, 3});
  Tensor h({2, 4});
  Tensor hx({2, 6});
  Rng rng2(6);
  for (std::int64_t i = 0; i < x.size(); ++i) x.at(i) = rng2.uniform(-1, 1);
  for (std::int64_t i = 0; i < h.size(); ++i) h.at(i) = rng2.uniform(-1, 1);
  for (std::int64_t i = 0; i < hx.size(); ++i) hx.at(i) = rng2.uniform(-1, 1);

  Tensor a = cond_gru_step(x, h, hx, dec);
  Tensor b = gru_cell_step(x, h, plain);
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("cond_gru_step carry gate ignores h_x when closed") {
  Rng rng(7);
  CondGruParams dec = CondGruParams::init(8, 3, 4, 6, rng);
  dec.b_update.fill(-1e6);  // z -> 0
  dec.c_update.fill(0.0);   // keep the gate closed regardless of h_x
  Tensor x({1, 3}, 0.3);
  Tensor h({1, 4}, -0.2);
  Tensor hx1({1, 6}, 0.9);
  Tensor hx2({1, 6}, -0.9);
  Tensor a = cond_gru_step(x, h, hx1, dec);
  Tensor b = cond_gru_step(x, h, hx2, dec);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.at(i) == h.at(i));
    CHECK(b.at(i) == h.at(i));
  }
}

TEST_CASE("cond_gru_step matches the scalar oracle") {
  CondGruParams dec = random_decoder(8, 2, 2, 2, 31);
  Rng rng(32);
  std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
  std::vector<double> h{rng.uniform(-1, 1), rng.uniform(-1, 1)};
  std::vector<double> hx{rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Tensor out = cond_gru_step(Tensor({1, 2}, {x[0], x[1]}),
                             Tensor({1, 2}, {h[0], h[1]}),
                             Tensor({1, 2}, {hx[0], hx[1]}), dec);
  auto ref = scalar_cond_step(x, h, hx, dec);
  for (std::int64_t j = 0; j < 2; ++j)
    CHECK(std::fabs(out.at(0, j) - ref[static_cast<std::size_t>(j)]) < 1e-12);
}

TEST_CASE("decoder_init zero and constant cases") {
  Rng rng(41);
  CondGruParams dec = CondGruParams::init(8, 3, 4, 6, rng);
  dec.w_init.fill(0.0);
  dec.b_init.fill(0.0);
  Tensor hx({2, 6}, 0.77);
  Tensor h0 = decoder_init(hx, dec);
  for (std::int64_t i = 0; i < h0.size(); ++i) CHECK(h0.at(i) == 0.0);

  dec.b_init.fill(0.5);
  Tensor h0b = decoder_init(hx, dec);
  for (std::int64_t i = 0; i < h0b.size(); ++i)
    CHECK(h0b.at(i) == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
}

TEST_CASE("decoder_init hand 2x2 case") {
  Rng rng(43);
  CondGruParams dec = CondGruParams::init(8, 3, 2, 2, rng);
  dec.w_init = Tensor::matrix(2, 2, {1.0, 0.5, -0.5, 2.0});
  dec.b_init = Tensor::vec({0.1, -0.1});
  Tensor hx = Tensor::matrix(1, 2, {0.3, -0.2});
  Tensor h0 = decoder_init(hx, dec);
  CHECK(h0.at(0, 0) ==
        doctest::Approx(std::tanh(0.3 * 1.0 + (-0.2) * (-0.5) + 0.1))
            .epsilon(1e-15));
  CHECK(h0.at(0, 1) ==
        doctest::Approx(std::tanh(0.3 * 0.5 + (-0.2) * 2.0 - 0.1))
            .epsilon(1e-15));
}

TEST_CASE("teacher-forced loss with zero parameters is ln |V|") {
  Vocabulary src;
  src.add("a");
  src.add("b");
  Vocabulary tgt;
  tgt.add("x");
  tgt.add("y");
  tgt.add("z");  // |V_tgt| = 7
  Rng rng(51);
  CondGruParams dec = CondGruParams::init(tgt.size(), 3, 4, 6, rng);
  dec.w_out.fill(0.0);
  dec.b_out.fill(0.0);
  auto batch = tiny_batch(src, tgt,
                          {Seq2SeqExample{{"a", "b"}, {"x", "y"}},
                           Seq2SeqExample{{"b"}, {"z"}}});
  Graph g;
  ParamBinding pb;
  auto vars = bind_decoder(g, pb, "d", dec);
  auto hx = g.leaf(Tensor({2, 6}, 0.4), "hx");
  auto loss = teacher_forced_loss_graph(g, hx, batch, vars);
  CHECK(g.val(loss).at(0) ==
        doctest::Approx(std::log(static_cast<double>(tgt.size())))
            .epsilon(1e-12));
}

TEST_CASE("teacher-forced loss ignores pad extension") {
  Vocabulary src;
  src.add("a");
  src.add("b");
  Vocabulary tgt;
  tgt.add("x");
  tgt.add("y");
  Rng rng(53);
  CondGruParams dec = CondGruParams::init(tgt.size(), 3, 4, 6, rng);
  auto batch = tiny_batch(src, tgt,
                          {Seq2SeqExample{{"a"}, {"x", "y"}},
                           Seq2SeqExample{{"b"}, {"y"}}});
  Tensor hx({2, 6}, 0.25);

  auto loss_of = [&](const Seq2SeqBatch& b) {
    Graph g;
    ParamBinding pb;
    auto vars = bind_decoder(g, pb, "d", dec);
    return g.val(teacher_forced_loss_graph(g, g.leaf(hx, "hx"), b, vars))
        .at(0);
  };
  const double base = loss_of(batch);

  Seq2SeqBatch padded = batch;
  const std::int64_t old_t = padded.target_in.max_len;
  padded.target_in.max_len += 3;
  padded.target_in.ids.assign(
      static_cast<std::size_t>(padded.target_in.n * padded.target_in.max_len),
      Vocabulary::kPad);
  padded.target_labels.assign(
      static_cast<std::size_t>(padded.target_in.n * padded.target_in.max_len),
      Vocabulary::kPad);
  padded.label_mask.assign(
      static_cast<std::size_t>(padded.target_in.n * padded.target_in.max_len),
      0.0);
  for (std::int64_t i = 0; i < padded.target_in.n; ++i)
    for (std::int64_t t = 0; t < old_t; ++t) {
      const auto src_idx = static_cast<std::size_t>(i * old_t + t);
      const auto dst_idx =
          static_cast<std::size_t>(i * padded.target_in.max_len + t);
      padded.target_in.ids[dst_idx] = batch.target_in.ids[src_idx];
      padded.target_labels[dst_idx] = batch.target_labels[src_idx];
      padded.label_mask[dst_idx] = batch.label_mask[src_idx];
    }
  CHECK(std::fabs(loss_of(padded) - base) < 1e-12);
}

TEST_CASE("teacher-forced loss matches a scalar step-by-step trace") {
  // 1 sentence, 2 target tokens, tiny dims; trace the conditional GRU by hand
  Vocabulary tgt;
  tgt.add("u");
  tgt.add("w");  // ids 4, 5; |V| = 6
  CondGruParams dec = random_decoder(tgt.size(), 2, 2, 2, 61);
  Vocabulary src;
  src.add("a");
  auto batch = tiny_batch(src, tgt, {Seq2SeqExample{{"a"}, {"u", "w"}}});
  const std::vector<double> hx{0.3, -0.6};

  // reference: scalar forward through init, two steps, softmax losses
  auto softmax_neglog = [&](const std::vector<double>& h,
                            std::int64_t target) {
    std::vector<double> logits(static_cast<std::size_t>(tgt.size()));
    for (std::int64_t v = 0; v < tgt.size(); ++v) {
      double acc = dec.b_out.at(v);
      for (std::int64_t j = 0; j < 2; ++j)
        acc += h[static_cast<std::size_t>(j)] * dec.w_out.at(j, v);
      logits[static_cast<std::size_t>(v)] = acc;
    }
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double denom = 0;
    for (double l : logits) denom += std::exp(l - mx);
    return std::log(denom) -
           (logits[static_cast<std::size_t>(target)] - mx);
  };
  auto embed = [&](std::int64_t id) {
    return std::vector<double>{dec.embedding.at(id, 0),
                               dec.embedding.at(id, 1)};
  };
  std::vector<double> h(2);
  for (std::int64_t j = 0; j < 2; ++j) {
    double acc = dec.b_init.at(j);
    for (std::int64_t k = 0; k < 2; ++k)
      acc += hx[static_cast<std::size_t>(k)] * dec.w_init.at(k, j);
    h[static_cast<std::size_t>(j)] = std::tanh(acc);
  }
  double expected = 0.0;
  h = scalar_cond_step(embed(Vocabulary::kBos), h, hx, dec);
  expected += softmax_neglog(h, tgt.id("u"));
  h = scalar_cond_step(embed(tgt.id("u")), h, hx, dec);
  expected += softmax_neglog(h, tgt.id("w"));
  // third step: input "w", label </s>
  h = scalar_cond_step(embed(tgt.id("w")), h, hx, dec);
  expected += softmax_neglog(h, Vocabulary::kEos);
  expected /= 3.0;

  Graph g;
  ParamBinding pb;
  auto vars = bind_decoder(g, pb, "d", dec);
  auto hx_var = g.leaf(Tensor({1, 2}, {hx[0], hx[1]}), "hx");
  const double actual =
      g.val(teacher_forced_loss_graph(g, hx_var, batch, vars)).at(0);
  CHECK(actual == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("fresh decoder keeps initial loss under ln|V| + 1") {
  Vocabulary src;
  Vocabulary tgt;
  for (int i = 0; i < 30; ++i) {
    src.add("s" + std::to_string(i));
    tgt.add("t" + std::to_string(i));
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    CondGruParams dec = CondGruParams::init(tgt.size(), 8, 16, 32, rng);
    std::vector<Seq2SeqExample> ex;
    for (int i = 0; i < 8; ++i)
      ex.push_back(Seq2SeqExample{{"s1", "s2", "s3"},
                                  {"t4", "t5", "t6", "t7"}});
    auto batch = tiny_batch(src, tgt, ex);
    Graph g;
    ParamBinding pb;
    auto vars = bind_decoder(g, pb, "d", dec);
    auto hx = g.leaf(Tensor({8, 32}, 0.1), "hx");
    const double loss =
        g.val(teacher_forced_loss_graph(g, hx, batch, vars)).at(0);
    CHECK(loss <= std::log(static_cast<double>(tgt.size())) + 1.0);
  }
}

TEST_CASE("loss is invariant to batch row permutation") {
  Vocabulary src;
  src.add("a");
  src.add("b");
  Vocabulary tgt;
  tgt.add("x");
  tgt.add("y");
  Rng rng(71);
  CondGruParams dec = CondGruParams::init(tgt.size(), 3, 4, 2, rng);
  Tensor hx_a = Tensor::matrix(2, 2, {0.1, 0.2, -0.3, 0.4});
  Tensor hx_b = Tensor::matrix(2, 2, {-0.3, 0.4, 0.1, 0.2});
  auto b1 = tiny_batch(src, tgt,
                       {Seq2SeqExample{{"a"}, {"x", "y"}},
                        Seq2SeqExample{{"b"}, {"y"}}});
  auto b2 = tiny_batch(src, tgt,
                       {Seq2SeqExample{{"b"}, {"y"}},
                        Seq2SeqExample{{"a"}, {"x", "y"}}});
  auto loss_of = [&](const Seq2SeqBatch& b, const Tensor& hx) {
    Graph g;
    ParamBinding pb;
    auto vars = bind_decoder(g, pb, "d", dec);
    return g.val(teacher_forced_loss_graph(g, g.leaf(hx, "hx"), b, vars))
        .at(0);
  };
  CHECK(std::fabs(loss_of(b1, hx_a) - loss_of(b2, hx_b)) < 1e-12);
}

TEST_CASE("greedy decode repeats a forced non-eos token max_len times") {
  Rng rng(81);
  CondGruParams dec = CondGruParams::init(9, 3, 4, 2, rng);
  dec.b_out.fill(0.0);
  dec.b_out.at(7) = 1e9;  // force token 7
  auto out = greedy_decode(dec, Tensor({1, 2}, 0.3), 6);
  CHECK(out == std::vector<std::int64_t>{7, 7, 7, 7, 7, 7});
}

TEST_CASE("greedy decode stops immediately on a forced eos") {
  Rng rng(83);
  CondGruParams dec = CondGruParams::init(9, 3, 4, 2, rng);
  dec.b_out.fill(0.0);
  dec.b_out.at(Vocabulary::kEos) = 1e9;
  auto out = greedy_decode(dec, Tensor({1, 2}, 0.3), 6);
  CHECK(out.empty());
}

TEST_CASE("greedy decode never emits bos or pad and breaks ties low") {
  Rng rng(85);
  CondGruParams dec = CondGruParams::init(9, 3, 4, 2, rng);
  dec.w_out.fill(0.0);
  dec.b_out.fill(0.0);
  // all logits tie at 0; <pad>=0 and <s>=1 are masked, </s>=2 wins the tie
  auto out = greedy_decode(dec, Tensor({1, 2}, 0.3), 4);
  CHECK(out.empty());  // eos chosen immediately by the low-id tie rule

  dec.b_out.at(Vocabulary::kEos) = -1.0;  // now 3 is the lowest tied id
  auto out2 = greedy_decode(dec, Tensor({1, 2}, 0.3), 3);
  CHECK(out2 == std::vector<std::int64_t>{3, 3, 3});
}

TEST_CASE("decoder + encoder gradient check end to end") {
  Vocabulary src;
  src.add("a");
  src.add("b");
  src.add("c");
  Vocabulary tgt;
  tgt.add("x");
  tgt.add("y");
  Rng rng(97);
  BiEncoderParams enc = BiEncoderParams::init(src.size(), 3, 3, 1, rng);
  CondGruParams dec = CondGruParams::init(tgt.size(), 3, 3, 6, rng);
  auto batch = tiny_batch(src, tgt,
                          {Seq2SeqExample{{"a", "b"}, {"x", "y"}},
                           Seq2SeqExample{{"c"}, {"y"}}});

  auto build = [&](Graph& g, ParamBinding& pb) {
    auto enc_vars = bind_encoder(g, pb, enc);
    auto dec_vars = bind_decoder(g, pb, "d", dec);
    auto encoded = encode_graph(g, enc_vars, batch.source);
    return teacher_forced_loss_graph(g, encoded.h_x, batch, dec_vars);
  };
  Graph g;
  ParamBinding pb;
  auto loss = build(g, pb);
  g.backward(loss);

  std::vector<Tensor*> params;
  std::vector<Graph::Var> vars;
  // use the binding order for both lists
  std::vector<std::pair<std::string, Tensor*>> named;
  named.emplace_back("encoder.embedding", &enc.embedding);
  auto add_cell = [&named](const std::string& p, GruCellParams& c) {
    named.emplace_back(p + ".w_reset", &c.w_reset);
    named.emplace_back(p + ".u_reset", &c.u_reset);
    named.emplace_back(p + ".b_reset", &c.b_reset);
    named.emplace_back(p + ".w_update", &c.w_update);
    named.emplace_back(p + ".u_update", &c.u_update);
    named.emplace_back(p + ".b_update", &c.b_update);
    named.emplace_back(p + ".w_cand", &c.w_cand);
    named.emplace_back(p + ".u_cand", &c.u_cand);
    named.emplace_back(p + ".b_cand", &c.b_cand);
  };
  add_cell("encoder.l0.fwd", enc.layers[0].fwd);
  add_cell("encoder.l0.bwd", enc.layers[0].bwd);
  named.emplace_back("d.embedding", &dec.embedding);
  named.emplace_back("d.w_reset", &dec.w_reset);
  named.emplace_back("d.u_reset", &dec.u_reset);
  named.emplace_back("d.c_reset", &dec.c_reset);
  named.emplace_back("d.b_reset", &dec.b_reset);
  named.emplace_back("d.w_update", &dec.w_update);
  named.emplace_back("d.u_update", &dec.u_update);
  named.emplace_back("d.c_update", &dec.c_update);
  named.emplace_back("d.b_update", &dec.b_update);
  named.emplace_back("d.w_cand", &dec.w_cand);
  named.emplace_back("d.u_cand", &dec.u_cand);
  named.emplace_back("d.c_cand", &dec.c_cand);
  named.emplace_back("d.b_cand", &dec.b_cand);
  named.emplace_back("d.w_init", &dec.w_init);
  named.emplace_back("d.b_init", &dec.b_init);
  named.emplace_back("d.w_out", &dec.w_out);
  named.emplace_back("d.b_out", &dec.b_out);
  REQUIRE(named.size() == pb.items.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    CHECK(named[i].first == pb.items[i].first);
    params.push_back(named[i].second);
    vars.push_back(pb.items[i].second);
  }
  auto loss_value = [&]() {
    Graph g2;
    ParamBinding pb2;
    return g2.val(build(g2, pb2)).at(0);
  };
  auto fd = finite_diff_grad(params, loss_value, 1e-5);
  for (std::size_t k = 0; k < params.size(); ++k)
    CHECK(max_rel_err(g.grad(vars[k]), fd[k]) < 1e-4);
}
