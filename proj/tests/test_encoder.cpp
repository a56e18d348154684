#include <doctest.h>

#include <cmath>

#include "mtse/encoder.hpp"
#include "mtse/errors.hpp"
#include "mtse/optim.hpp"

using namespace mtse;

namespace {

GruCellParams random_cell(std::int64_t in_dim, std::int64_t hidden,
                          std::uint64_t seed) {
  Rng rng(seed);
  return GruCellParams::init(in_dim, hidden, rng);
}

// Independent scalar-loop GRU step, no tensor machinery.
std::vector<double> scalar_gru_step(const std::vector<double>& x,
                                    const std::vector<double>& h,
                                    const GruCellParams& c) {
  const auto in_dim = static_cast<std::size_t>(c.input_dim());
  const auto hid = static_cast<std::size_t>(c.hidden());
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                  const std::vector<double>& hh) {
    std::vector<double> out(hid, 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
      double acc = b.at(static_cast<std::int64_t>(j));
      for (std::size_t k = 0; k < in_dim; ++k)
        acc += x[k] * w.at(static_cast<std::int64_t>(k),
                           static_cast<std::int64_t>(j));
      for (std::size_t k = 0; k < hid; ++k)
        acc += hh[k] * u.at(static_cast<std::int64_t>(k),
                            static_cast<std::int64_t>(j));
      out[j] = acc;
    }
    return out;
  };
  auto r_pre = gate(c.w_reset, c.u_reset, c.b_reset, h);
  auto z_pre = gate(c.w_update, c.u_update, c.b_update, h);
  std::vector<double> r(hid), z(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    r[j] = 1.0 / (1.0 + std::exp(-r_pre[j]));
    z[j] = 1.0 / (1.0 + std::exp(-z_pre[j]));
  }
  std::vector<double> rh(hid);
  for (std::size_t j = 0; j < hid; ++j) rh[j] = r[j] * h[j];
  auto cand_pre = gate(c.w_cand, c.u_cand, c.b_cand, rh);
  std::vector<double> out(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const double cand = std::tanh(cand_pre[j]);
    out[j] = (1.0 - z[j]) * h[j] + z[j] * cand;
  }
  return out;
}

SentenceBatch batch_from(const std::vector<std::vector<std::int64_t>>& rows) {
  return make_batch(rows);
}

}  // namespace

TEST_CASE("gru_cell_step saturated update gate selects candidate or carry") {
  GruCellParams cell = random_cell(3, 4, 1);
  Tensor x({2, 3});
  Tensor h({2, 4});
  Rng rng(2);
  for (std::int64_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-1, 1);
  for (std::int64_t i = 0; i < h.size(); ++i) h.at(i) = rng.uniform(-1, 1);

  GruCellParams open = cell;
  open.b_update.fill(1e6);  // z -> 1, h' = candidate
  Tensor h_open = gru_cell_step(x, h, open);
  GruCellParams cand_only = open;
  Tensor expected = gru_cell_step(x, h, cand_only);
  for (std::int64_t i = 0; i < h_open.size(); ++i)
    CHECK(h_open.at(i) == expected.at(i));
  // with z=1 the result must not depend on h_prev's direct carry term
  Tensor h2 = h;
  for (std::int64_t i = 0; i < h2.size(); ++i) h2.at(i) += 0.25;
  Tensor h_open2 = gru_cell_step(x, h2, open);
  // candidate still depends on h via the reset path; verify z=1 removed the
  // (1-z)*h carry by checking the closed-gate case instead
  GruCellParams closed = cell;
  closed.b_update.fill(-1e6);  // z -> 0, h' = h_prev
  Tensor h_closed = gru_cell_step(x, h, closed);
  for (std::int64_t i = 0; i < h.size(); ++i)
    CHECK(h_closed.at(i) == h.at(i));
  (void)h_open2;
}

TEST_CASE("gru_cell_step matches an independent scalar re-implementation") {
  GruCellParams cell = random_cell(2, 2, 7);
  Rng rng(8);
  std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
  std::vector<double> h{rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Tensor xt({1, 2}, {x[0], x[1]});
  Tensor ht({1, 2}, {h[0], h[1]});
  Tensor out = gru_cell_step(xt, ht, cell);
  auto ref = scalar_gru_step(x, h, cell);
  for (std::int64_t j = 0; j < 2; ++j)
    CHECK(std::fabs(out.at(0, j) - ref[static_cast<std::size_t>(j)]) < 1e-12);
}

TEST_CASE("gru cell gradient check over all tensors and inputs") {
  GruCellParams cell = random_cell(3, 3, 17);
  Rng rng(18);
  Tensor x({2, 3});
  Tensor h({2, 3});
  for (std::int64_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-1, 1);
  for (std::int64_t i = 0; i < h.size(); ++i) h.at(i) = rng.uniform(-1, 1);

  auto build = [&](Graph& g, ParamBinding& pb) {
    auto vars = bind_gru_cell(g, pb, "cell", cell);
    auto xv = g.leaf(x, "x");
    auto hv = g.leaf(h, "h");
    pb.items.emplace_back("x", xv);
    pb.items.emplace_back("h", hv);
    return g.sum_all(g.mul(gru_cell_step_graph(g, xv, hv, vars),
                           gru_cell_step_graph(g, xv, hv, vars)));
  };
  Graph g;
  ParamBinding pb;
  auto loss = build(g, pb);
  g.backward(loss);

  std::vector<Tensor*> params{&cell.w_reset, &cell.u_reset, &cell.b_reset,
                              &cell.w_update, &cell.u_update, &cell.b_update,
                              &cell.w_cand, &cell.u_cand, &cell.b_cand,
                              &x, &h};
  auto loss_value = [&]() {
    Graph g2;
    ParamBinding pb2;
    return g2.val(build(g2, pb2)).at(0);
  };
  auto fd = finite_diff_grad(params, loss_value, 1e-5);
  for (std::size_t k = 0; k < params.size(); ++k) {
    CHECK(max_rel_err(g.grad(pb.items[k].second), fd[k]) < 1e-6);
  }
}

TEST_CASE("encode_batch: single-token sentence concatenates two single steps") {
  Rng rng(4);
  BiEncoderParams enc = BiEncoderParams::init(10, 3, 4, 1, rng);
  auto batch = batch_from({{5}});
  auto out = encode_batch(enc, batch);
  REQUIRE(out.h_x.cols() == 8);

  Tensor x({1, 3});
  for (std::int64_t j = 0; j < 3; ++j) x.at(0, j) = enc.embedding.at(5, j);
  Tensor h0({1, 4}, 0.0);
  Tensor fwd = gru_cell_step(x, h0, enc.layers[0].fwd);
  Tensor bwd = gru_cell_step(x, h0, enc.layers[0].bwd);
  for (std::int64_t j = 0; j < 4; ++j) {
    CHECK(out.h_x.at(0, j) == fwd.at(0, j));
    CHECK(out.h_x.at(0, 4 + j) == bwd.at(0, j));
  }
}

TEST_CASE("solo encoding equals padded-batch encoding exactly") {
  Rng rng(12);
  BiEncoderParams enc = BiEncoderParams::init(20, 4, 5, 1, rng);
  const std::vector<std::int64_t> sent{4, 9, 13};
  auto solo = encode_batch(enc, batch_from({sent}));
  // same sentence inside a batch with longer rows (forces padding)
  auto batch = batch_from({sent, {5, 6, 7, 8, 9, 10}, {11}});
  auto full = encode_batch(enc, batch);
  for (std::int64_t j = 0; j < solo.h_x.cols(); ++j)
    CHECK(full.h_x.at(0, j) == solo.h_x.at(0, j));
}

TEST_CASE("palindrome with tied cells gives symmetric fwd/bwd states") {
  Rng rng(21);
  BiEncoderParams enc = BiEncoderParams::init(16, 4, 4, 1, rng);
  enc.layers[0].bwd = enc.layers[0].fwd;  // tie the directions
  auto batch = batch_from({{4, 7, 4}});
  auto out = encode_batch(enc, batch);
  // H_fwd final (= fwd state at last position) equals H_bwd at position 0
  for (std::int64_t j = 0; j < 4; ++j)
    CHECK(out.h_fwd[2].at(0, j) == doctest::Approx(out.h_bwd[0].at(0, j))
                                       .epsilon(1e-15));
}

TEST_CASE("padding invariance: extra pad columns change nothing") {
  Rng rng(31);
  BiEncoderParams enc = BiEncoderParams::init(12, 3, 4, 1, rng);
  auto batch = batch_from({{4, 5}, {6, 7, 8}});
  auto out = encode_batch(enc, batch);

  SentenceBatch padded = batch;
  padded.max_len += 2;
  padded.ids.assign(static_cast<std::size_t>(padded.n * padded.max_len),
                    Vocabulary::kPad);
  for (std::int64_t i = 0; i < batch.n; ++i)
    for (std::int64_t t = 0; t < batch.max_len; ++t)
      padded.ids[static_cast<std::size_t>(i * padded.max_len + t)] =
          batch.at(i, t);
  auto out2 = encode_batch(enc, padded);
  for (std::int64_t j = 0; j < out.h_x.size(); ++j)
    CHECK(out2.h_x.at(j) == out.h_x.at(j));
  for (std::size_t t = 0; t < out.h_fwd.size(); ++t)
    for (std::int64_t j = 0; j < out.h_fwd[t].size(); ++j) {
      CHECK(out2.h_fwd[t].at(j) == out.h_fwd[t].at(j));
      CHECK(out2.h_bwd[t].at(j) == out.h_bwd[t].at(j));
    }
  // padded positions hold zero states
  for (std::size_t t = batch.max_len; t < out2.h_fwd.size(); ++t)
    for (std::int64_t j = 0; j < out2.h_fwd[t].size(); ++j) {
      CHECK(out2.h_fwd[t].at(j) == 0.0);
      CHECK(out2.h_bwd[t].at(j) == 0.0);
    }
}

TEST_CASE("batch-order invariance: permuting rows permutes outputs") {
  Rng rng(41);
  BiEncoderParams enc = BiEncoderParams::init(12, 3, 4, 1, rng);
  auto a = encode_batch(enc, batch_from({{4, 5, 6}, {7, 8}}));
  auto b = encode_batch(enc, batch_from({{7, 8}, {4, 5, 6}}));
  for (std::int64_t j = 0; j < a.h_x.cols(); ++j) {
    CHECK(a.h_x.at(0, j) == b.h_x.at(1, j));
    CHECK(a.h_x.at(1, j) == b.h_x.at(0, j));
  }
}

TEST_CASE("empty sentences are rejected") {
  Rng rng(51);
  BiEncoderParams enc = BiEncoderParams::init(12, 3, 4, 1, rng);
  SentenceBatch bad;
  bad.n = 1;
  bad.max_len = 2;
  bad.ids = {0, 0};
  bad.lengths = {0};
  Graph g;
  ParamBinding pb;
  auto vars = bind_encoder(g, pb, enc);
  CHECK_THROWS_AS(encode_graph(g, vars, bad), Error);
}

TEST_CASE("pool_sequence: T=1 and constant sequences make last equal max") {
  Tensor s0 = Tensor::matrix(1, 2, {0.5, -0.25});
  CHECK(pool_sequence({s0}, {1}, Pooling::last).values() ==
        pool_sequence({s0}, {1}, Pooling::max).values());

  Tensor c = Tensor::matrix(1, 2, {0.1, 0.2});
  CHECK(pool_sequence({c, c, c}, {3}, Pooling::last).values() ==
        pool_sequence({c, c, c}, {3}, Pooling::max).values());
}

TEST_CASE("pool_sequence direct arithmetic example") {
  // states [[1,5],[3,2]] over 2 steps -> max [3,5], last [3,2]
  Tensor s0 = Tensor::matrix(1, 2, {1, 5});
  Tensor s1 = Tensor::matrix(1, 2, {3, 2});
  auto mx = pool_sequence({s0, s1}, {2}, Pooling::max);
  auto last = pool_sequence({s0, s1}, {2}, Pooling::last);
  CHECK(mx.values() == std::vector<double>{3, 5});
  CHECK(last.values() == std::vector<double>{3, 2});
}

TEST_CASE("pooled_representation(last) is h_x exactly") {
  Rng rng(61);
  BiEncoderParams enc = BiEncoderParams::init(14, 3, 5, 1, rng);
  auto batch = batch_from({{4, 5, 6, 7}, {8, 9}});
  auto out = encode_batch(enc, batch);
  auto pooled = pooled_representation(out, batch, Pooling::last);
  for (std::int64_t i = 0; i < pooled.size(); ++i)
    CHECK(pooled.at(i) == out.h_x.at(i));
}

TEST_CASE("max pooling ignores padded positions") {
  Rng rng(71);
  BiEncoderParams enc = BiEncoderParams::init(14, 3, 5, 1, rng);
  auto batch = batch_from({{4, 5}, {6, 7, 8, 9}});
  auto out = encode_batch(enc, batch);
  auto pooled = pooled_representation(out, batch, Pooling::max);
  // row 0: max over its 2 real positions of the concatenated states
  for (std::int64_t j = 0; j < 5; ++j) {
    const double expected =
        std::max(out.h_fwd[0].at(0, j), out.h_fwd[1].at(0, j));
    CHECK(pooled.at(0, j) == expected);
  }
}

TEST_CASE("unknown pooling strategy is a configuration error") {
  CHECK_THROWS_AS(pooling_from_name("mean"), Error);
  try {
    pooling_from_name("mean");
  } catch (const Error& e) {
    CHECK(e.code() == errc::config);
  }
}

TEST_CASE("two-layer encoder produces the top layer's representation") {
  Rng rng(81);
  BiEncoderParams enc = BiEncoderParams::init(12, 3, 4, 2, rng);
  REQUIRE(enc.layers.size() == 2);
  CHECK(enc.layers[1].fwd.input_dim() == 8);  // 2H from layer 1
  auto batch = batch_from({{4, 5, 6}});
  auto out = encode_batch(enc, batch);
  CHECK(out.h_x.cols() == 8);
  CHECK(out.h_x.all_finite());
}

TEST_CASE("encoder gradients pass the finite-difference check") {
  Rng rng(91);
  BiEncoderParams enc = BiEncoderParams::init(10, 3, 3, 1, rng);
  auto batch = batch_from({{4, 5, 6}, {7, 8}});

  auto build = [&](Graph& g, ParamBinding& pb) {
    auto vars = bind_encoder(g, pb, enc);
    auto out = encode_graph(g, vars, batch);
    return g.sum_all(g.mul(out.h_x, out.h_x));
  };
  Graph g;
  ParamBinding pb;
  auto loss = build(g, pb);
  g.backward(loss);

  auto params = [&]() {
    std::vector<Tensor*> p;
    p.push_back(&enc.embedding);
    for (auto& layer : enc.layers)
      for (auto* cell : {&layer.fwd, &layer.bwd}) {
        p.push_back(&cell->w_reset);
        p.push_back(&cell->u_reset);
        p.push_back(&cell->b_reset);
        p.push_back(&cell->w_update);
        p.push_back(&cell->u_update);
        p.push_back(&cell->b_update);
        p.push_back(&cell->w_cand);
        p.push_back(&cell->u_cand);
        p.push_back(&cell->b_cand);
      }
    return p;
  }();
  auto loss_value = [&]() {
    Graph g2;
    ParamBinding pb2;
    return g2.val(build(g2, pb2)).at(0);
  };
  auto fd = finite_diff_grad(params, loss_value, 1e-5);
  REQUIRE(pb.items.size() == params.size());
  for (std::size_t k = 0; k < params.size(); ++k)
    CHECK(max_rel_err(g.grad(pb.items[k].second), fd[k]) < 1e-4);
}
