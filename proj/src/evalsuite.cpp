#include "mtse/evalsuite.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "mtse/errors.hpp"
#include "mtse/optim.hpp"

namespace mtse {

// ---------------------------------------------------------------------------
// threading
// ---------------------------------------------------------------------------

int eval_thread_budget() {
  const char* env = std::getenv("MTSE_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// representations
// ---------------------------------------------------------------------------

RepresentationMatrix encode_corpus(
    const MultiTaskModel& model,
    const std::vector<std::vector<std::string>>& sentences, Pooling pooling,
    std::int64_t batch_size, const std::string& model_id) {
  if (batch_size < 1) fail(errc::config, "encode batch size must be >= 1");
  if (sentences.empty()) fail(errc::input, "encode_corpus: empty corpus");
  RepresentationMatrix out;
  out.pooling = pooling_name(pooling);
  out.model_id = model_id;
  out.values = Tensor({static_cast<std::int64_t>(sentences.size()),
                       model.rep_dim()});
  std::size_t row = 0;
  for (std::size_t start = 0; start < sentences.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(
        sentences.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<std::int64_t>> rows;
    for (std::size_t i = start; i < end; ++i) {
      if (sentences[i].empty())
        fail(errc::input, "encode_corpus: sentence " + std::to_string(i) +
                              " is empty");
      rows.push_back(model.source_vocab.encode(sentences[i]));
    }
    const SentenceBatch batch = make_batch(rows);
    const EncodeResult enc = encode_batch(model.encoder, batch);
    const Tensor pooled = pooled_representation(enc, batch, pooling);
    for (std::int64_t i = 0; i < pooled.rows(); ++i, ++row)
      for (std::int64_t j = 0; j < pooled.cols(); ++j)
        out.values.at(static_cast<std::int64_t>(row), j) = pooled.at(i, j);
  }
  return out;
}

RepresentationMatrix concat_representations(
    const std::vector<const RepresentationMatrix*>& reps) {
  if (reps.empty()) fail(errc::input, "concat_representations: no inputs");
  const std::int64_t n = reps[0]->n();
  std::int64_t total_d = 0;
  for (const auto* r : reps) {
    if (r->n() != n)
      fail(errc::input, "concat_representations: row misalignment (" +
                            std::to_string(r->n()) + " vs " +
                            std::to_string(n) + " rows)");
    total_d += r->dim();
  }
  RepresentationMatrix out;
  out.pooling = reps[0]->pooling;
  out.model_id = "concat";
  out.values = Tensor({n, total_d});
  std::int64_t col = 0;
  for (const auto* r : reps) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < r->dim(); ++j)
        out.values.at(i, col + j) = r->values.at(i, j);
    col += r->dim();
  }
  return out;
}

void save_representations(const RepresentationMatrix& reps,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write representations '" + path + "'");
  out << "MTSE-REP v1 n=" << reps.n() << " d=" << reps.dim()
      << " pooling=" << reps.pooling << "\n";
  for (std::int64_t i = 0; i < reps.values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(reps.values.at(i));
    unsigned char b[8];
    for (int k = 0; k < 8; ++k)
      b[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

RepresentationMatrix load_representations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open representations '" + path + "'");
  std::string header;
  std::getline(in, header);
  std::int64_t n = -1, d = -1;
  std::string pooling = "last";
  {
    std::istringstream hs(header);
    std::string magic, vers, field;
    hs >> magic >> vers;
    if (magic != "MTSE-REP" || vers != "v1")
      fail(errc::format, path + ": bad representation header '" + header + "'");
    while (hs >> field) {
      if (field.rfind("n=", 0) == 0) n = std::stoll(field.substr(2));
      else if (field.rfind("d=", 0) == 0) d = std::stoll(field.substr(2));
      else if (field.rfind("pooling=", 0) == 0) pooling = field.substr(8);
    }
  }
  if (n < 0 || d <= 0)
    fail(errc::format, path + ": representation header misses n= or d=");
  RepresentationMatrix out;
  out.pooling = pooling;
  out.values = Tensor({n, d});
  for (std::int64_t i = 0; i < n * d; ++i) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8)
      fail(errc::format, path + ": truncated representation file");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    out.values.at(i) = std::bit_cast<double>(bits);
  }
  return out;
}

// ---------------------------------------------------------------------------
// logistic regression
// ---------------------------------------------------------------------------

namespace {

double logreg_loss_grad(const Tensor& x, const std::vector<std::int64_t>& y,
                        const Tensor& w, const Tensor& b, double l2,
                        Tensor* gw, Tensor* gb) {
  const std::int64_t n = x.rows(), c = w.cols();
  Tensor logits = affine(x, w, b);
  Tensor probs = softmax(logits);
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    loss -= std::log(std::max(probs.at(i, y[static_cast<std::size_t>(i)]),
                              1e-300));
  loss /= static_cast<double>(n);
  for (std::int64_t i = 0; i < w.size(); ++i)
    loss += 0.5 * l2 * w.at(i) * w.at(i);
  if (gw) {
    Tensor delta = probs;  // P - Y
    for (std::int64_t i = 0; i < n; ++i)
      delta.at(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    *gw = Tensor({x.cols(), c});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < x.cols(); ++k) {
        const double xv = x.at(i, k);
        for (std::int64_t j = 0; j < c; ++j)
          gw->at(k, j) += xv * delta.at(i, j);
      }
    for (std::int64_t i = 0; i < gw->size(); ++i)
      gw->at(i) = gw->at(i) / static_cast<double>(n) + l2 * w.at(i);
    *gb = Tensor({c});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) gb->at(j) += delta.at(i, j);
    for (std::int64_t j = 0; j < c; ++j)
      gb->at(j) /= static_cast<double>(n);
  }
  return loss;
}

}  // namespace

LogRegModel train_logreg(const Tensor& x, const std::vector<std::int64_t>& y,
                         std::int64_t classes, double l2,
                         std::int64_t max_iter, double tol) {
  if (x.rows() != static_cast<std::int64_t>(y.size()))
    fail(errc::input, "train_logreg: feature/label count mismatch");
  if (classes < 2) fail(errc::degenerate, "train_logreg: needs >= 2 classes");
  LogRegModel m{Tensor({x.cols(), classes}, 0.0), Tensor({classes}, 0.0)};
  double step = 1.0;
  for (std::int64_t it = 0; it < max_iter; ++it) {
    Tensor gw, gb;
    const double loss = logreg_loss_grad(x, y, m.w, m.b, l2, &gw, &gb);
    double gnorm_sq = 0.0;
    for (std::int64_t i = 0; i < gw.size(); ++i) gnorm_sq += gw.at(i) * gw.at(i);
    for (std::int64_t i = 0; i < gb.size(); ++i) gnorm_sq += gb.at(i) * gb.at(i);
    if (std::sqrt(gnorm_sq) < tol) break;
    // backtracking line search on the Armijo condition
    step = std::min(step * 2.0, 1e4);
    for (int half = 0; half < 60; ++half) {
      LogRegModel trial = m;
      for (std::int64_t i = 0; i < trial.w.size(); ++i)
        trial.w.at(i) -= step * gw.at(i);
      for (std::int64_t i = 0; i < trial.b.size(); ++i)
        trial.b.at(i) -= step * gb.at(i);
      const double trial_loss =
          logreg_loss_grad(x, y, trial.w, trial.b, l2, nullptr, nullptr);
      if (trial_loss <= loss - 1e-4 * step * gnorm_sq) {
        m = std::move(trial);
        break;
      }
      step *= 0.5;
    }
  }
  return m;
}

std::vector<std::int64_t> logreg_predict(const LogRegModel& m,
                                         const Tensor& x) {
  Tensor logits = affine(x, m.w, m.b);
  std::vector<std::int64_t> pred(static_cast<std::size_t>(x.rows()));
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    pred[static_cast<std::size_t>(i)] = best;
  }
  return pred;
}

double accuracy(const std::vector<std::int64_t>& pred,
                const std::vector<std::int64_t>& gold) {
  if (pred.size() != gold.size() || pred.empty())
    fail(errc::input, "accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  Tensor out({static_cast<std::int64_t>(idx.size()), x.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::int64_t j = 0; j < x.cols(); ++j)
      out.at(static_cast<std::int64_t>(i), j) =
          x.at(static_cast<std::int64_t>(idx[i]), j);
  return out;
}

std::vector<std::int64_t> gather_labels(const std::vector<std::int64_t>& y,
                                        const std::vector<std::size_t>& idx) {
  std::vector<std::int64_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(y[i]);
  return out;
}

std::int64_t class_count(const std::vector<std::int64_t>& labels) {
  std::int64_t c = 0;
  for (auto l : labels) c = std::max(c, l + 1);
  return c;
}

}  // namespace

CvEvalResult logreg_cv_eval(const Tensor& reps,
                            const std::vector<std::int64_t>& labels,
                            std::int64_t folds, std::vector<double> l2_grid,
                            std::uint64_t seed, double test_fraction) {
  const std::int64_t n = reps.rows();
  if (n != static_cast<std::int64_t>(labels.size()))
    fail(errc::input, "logreg_cv_eval: feature/label count mismatch");
  if (folds < 2) fail(errc::config, "logreg_cv_eval: folds must be >= 2");
  if (l2_grid.empty()) fail(errc::config, "logreg_cv_eval: empty l2 grid");
  const std::int64_t classes = class_count(labels);
  {
    std::vector<std::int64_t> seen(static_cast<std::size_t>(classes), 0);
    for (auto l : labels) seen[static_cast<std::size_t>(l)] = 1;
    std::int64_t distinct = 0;
    for (auto s : seen) distinct += s;
    if (distinct < 2)
      fail(errc::degenerate, "logreg_cv_eval: single-class data");
  }
  std::sort(l2_grid.begin(), l2_grid.end());

  Rng rng(seed);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  const std::size_t test_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             static_cast<double>(n) * test_fraction)));
  if (test_count >= idx.size())
    fail(errc::input, "logreg_cv_eval: not enough rows for a train split");
  std::vector<std::size_t> train_idx(idx.begin(),
                                     idx.end() - static_cast<std::ptrdiff_t>(
                                                     test_count));
  std::vector<std::size_t> test_idx(idx.end() - static_cast<std::ptrdiff_t>(
                                                    test_count),
                                    idx.end());
  if (static_cast<std::int64_t>(train_idx.size()) < folds)
    fail(errc::input, "logreg_cv_eval: fewer training rows than folds");

  const Tensor train_x = gather_rows(reps, train_idx);
  const auto train_y = gather_labels(labels, train_idx);
  const Tensor test_x = gather_rows(reps, test_idx);
  const auto test_y = gather_labels(labels, test_idx);

  const std::size_t n_train = train_idx.size();
  auto fold_range = [&](std::int64_t f) {
    const std::size_t lo = n_train * static_cast<std::size_t>(f) /
                           static_cast<std::size_t>(folds);
    const std::size_t hi = n_train * static_cast<std::size_t>(f + 1) /
                           static_cast<std::size_t>(folds);
    return std::make_pair(lo, hi);
  };

  const int threads = eval_thread_budget();
  double best_l2 = l2_grid.front();
  double best_cv = -1.0;
  for (const double l2 : l2_grid) {
    std::vector<double> fold_acc(static_cast<std::size_t>(folds), 0.0);
    parallel_for(static_cast<std::size_t>(folds), threads, [&](std::size_t f) {
      const auto [lo, hi] = fold_range(static_cast<std::int64_t>(f));
      std::vector<std::size_t> tr, va;
      for (std::size_t i = 0; i < n_train; ++i)
        (i >= lo && i < hi ? va : tr).push_back(i);
      if (va.empty() || tr.empty()) {
        fold_acc[f] = 0.0;
        return;
      }
      const auto m = train_logreg(gather_rows(train_x, tr),
                                  gather_labels(train_y, tr), classes, l2);
      fold_acc[f] = accuracy(logreg_predict(m, gather_rows(train_x, va)),
                             gather_labels(train_y, va));
    });
    double mean = 0.0;
    for (double a : fold_acc) mean += a;
    mean /= static_cast<double>(folds);
    if (mean > best_cv) {  // ties keep the smaller l2 (grid is sorted)
      best_cv = mean;
      best_l2 = l2;
    }
  }

  const auto final_model = train_logreg(train_x, train_y, classes, best_l2);
  CvEvalResult result;
  result.best_l2 = best_l2;
  result.cv_accuracy = best_cv;
  result.test_accuracy = accuracy(logreg_predict(final_model, test_x), test_y);
  return result;
}

// ---------------------------------------------------------------------------
// MLP classifiers
// ---------------------------------------------------------------------------

MlpParams train_mlp_classifier(const Tensor& x,
                               const std::vector<std::int64_t>& y,
                               std::int64_t classes,
                               const MlpClassifierConfig& cfg,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int64_t> dims{x.cols()};
  for (auto h : cfg.hidden) dims.push_back(h);
  dims.push_back(classes);
  MlpParams mlp = MlpParams::init(
      dims, std::vector<double>(dims.size() - 1, 0.0), rng);
  std::vector<AdamState> states;
  for (auto& layer : mlp.layers) {
    states.push_back(AdamState::like(layer.weight));
    states.push_back(AdamState::like(layer.bias));
  }
  const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8};
  std::vector<double> ones(y.size(), 1.0);
  for (std::int64_t it = 0; it < cfg.iters; ++it) {
    Graph g;
    ParamBinding pb;
    auto vars = bind_mlp(g, pb, "clf", mlp);
    auto logits =
        mlp_forward_graph(g, g.leaf(x, "x"), vars, eval_dropout(mlp));
    auto loss = g.softmax_xent(logits, y, ones);
    g.backward(loss);
    std::size_t s = 0;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      adam_step(mlp.layers[l].weight, g.grad(vars.layers[l].weight),
                states[s++], acfg);
      adam_step(mlp.layers[l].bias, g.grad(vars.layers[l].bias), states[s++],
                acfg);
    }
  }
  return mlp;
}

std::vector<std::int64_t> mlp_predict(const MlpParams& mlp, const Tensor& x) {
  const Tensor logits = mlp_forward(x, mlp, false, nullptr);
  std::vector<std::int64_t> pred(static_cast<std::size_t>(x.rows()));
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    pred[static_cast<std::size_t>(i)] = best;
  }
  return pred;
}

double mlp_pair_eval(const RepresentationMatrix& u,
                     const RepresentationMatrix& v,
                     const std::vector<std::int64_t>& labels,
                     std::int64_t classes, const PairEvalConfig& cfg) {
  if (u.n() != v.n() || u.n() != static_cast<std::int64_t>(labels.size()))
    fail(errc::input, "mlp_pair_eval: misaligned pair rows");
  const Tensor feats = pair_features(u.values, v.values);
  const std::int64_t n = feats.rows();
  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  const std::size_t n_train = static_cast<std::size_t>(n) * 6 / 10;
  const std::size_t n_val = static_cast<std::size_t>(n) * 2 / 10;
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + n_train);
  std::vector<std::size_t> va(idx.begin() + n_train,
                              idx.begin() + n_train + n_val);
  std::vector<std::size_t> te(idx.begin() + n_train + n_val, idx.end());
  if (tr.empty() || va.empty() || te.empty())
    fail(errc::input, "mlp_pair_eval: not enough pairs for a 60/20/20 split");

  const Tensor train_x = gather_rows(feats, tr);
  const auto train_y = gather_labels(labels, tr);
  const Tensor val_x = gather_rows(feats, va);
  const auto val_y = gather_labels(labels, va);
  const Tensor test_x = gather_rows(feats, te);
  const auto test_y = gather_labels(labels, te);

  std::vector<std::int64_t> dims{feats.cols()};
  for (auto h : cfg.hidden) dims.push_back(h);
  dims.push_back(classes);
  MlpParams mlp = MlpParams::init(
      dims, std::vector<double>(dims.size() - 1, 0.0), rng);
  std::vector<AdamState> states;
  for (auto& layer : mlp.layers) {
    states.push_back(AdamState::like(layer.weight));
    states.push_back(AdamState::like(layer.bias));
  }
  const AdamConfig acfg{cfg.lr, 0.9, 0.999, 1e-8};
  std::vector<double> ones(train_y.size(), 1.0);

  MlpParams best = mlp;
  double best_val = accuracy(mlp_predict(mlp, val_x), val_y);
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Graph g;
    ParamBinding pb;
    auto vars = bind_mlp(g, pb, "pair", mlp);
    auto logits =
        mlp_forward_graph(g, g.leaf(train_x, "x"), vars, eval_dropout(mlp));
    auto loss = g.softmax_xent(logits, train_y, ones);
    g.backward(loss);
    std::size_t s = 0;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      adam_step(mlp.layers[l].weight, g.grad(vars.layers[l].weight),
                states[s++], acfg);
      adam_step(mlp.layers[l].bias, g.grad(vars.layers[l].bias), states[s++],
                acfg);
    }
    const double val_acc = accuracy(mlp_predict(mlp, val_x), val_y);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = mlp;
    }
  }
  return accuracy(mlp_predict(best, test_x), test_y);
}

// ---------------------------------------------------------------------------
// probes
// ---------------------------------------------------------------------------

ProbeKind probe_kind_from_name(const std::string& name) {
  if (name == "length") return ProbeKind::length;
  if (name == "content") return ProbeKind::content;
  if (name == "order") return ProbeKind::order;
  if (name == "passive") return ProbeKind::passive;
  if (name == "tense") return ProbeKind::tense;
  if (name == "tss") return ProbeKind::tss;
  fail(errc::usage, "unknown probe kind '" + name + "'");
}

const char* probe_kind_name(ProbeKind k) {
  switch (k) {
    case ProbeKind::length: return "length";
    case ProbeKind::content: return "content";
    case ProbeKind::order: return "order";
    case ProbeKind::passive: return "passive";
    case ProbeKind::tense: return "tense";
    case ProbeKind::tss: return "tss";
  }
  return "?";
}

ProbeClassifier default_probe_classifier(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::content:
    case ProbeKind::order:
      return ProbeClassifier::mlp;
    default:
      return ProbeClassifier::logreg;
  }
}

namespace {

Tensor embedding_row(const MultiTaskModel& model, const std::string& token) {
  const std::int64_t id = model.source_vocab.id(token);
  Tensor row({1, model.encoder.emb_dim()});
  for (std::int64_t j = 0; j < model.encoder.emb_dim(); ++j)
    row.at(0, j) = model.encoder.embedding.at(id, j);
  return row;
}

void copy_row(Tensor& dst, std::int64_t dst_row, std::int64_t dst_col,
              const Tensor& src, std::int64_t src_row) {
  for (std::int64_t j = 0; j < src.cols(); ++j)
    dst.at(dst_row, dst_col + j) = src.at(src_row, j);
}

}  // namespace

ProbeDataset make_probe_dataset(ProbeKind kind, const ProbeCorpus& corpus,
                                const RepresentationMatrix& reps,
                                const MultiTaskModel* word_source,
                                std::int64_t length_bins, std::uint64_t seed) {
  const std::int64_t n = static_cast<std::int64_t>(corpus.sentences.size());
  if (n == 0) fail(errc::input, "probe corpus is empty");
  if (reps.n() != n)
    fail(errc::input, "probe corpus and representations are misaligned");
  ProbeDataset out;
  out.kind = probe_kind_name(kind);
  Rng rng(seed);
  const std::int64_t d = reps.dim();

  switch (kind) {
    case ProbeKind::length: {
      if (length_bins < 2) fail(errc::config, "length probe needs >= 2 bins");
      std::vector<std::size_t> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return corpus.sentences[a].size() <
                                corpus.sentences[b].size();
                       });
      out.labels.assign(static_cast<std::size_t>(n), 0);
      std::vector<double> edges(static_cast<std::size_t>(length_bins), 0.0);
      for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto bin = static_cast<std::int64_t>(
            rank * static_cast<std::size_t>(length_bins) / order.size());
        out.labels[order[rank]] = bin;
        edges[static_cast<std::size_t>(bin)] = static_cast<double>(
            corpus.sentences[order[rank]].size());  // max length per bin
      }
      out.bin_edges = edges;
      out.classes = length_bins;
      out.features = reps.values;
      break;
    }
    case ProbeKind::content: {
      if (!word_source)
        fail(errc::input, "content probe needs the model's word embeddings");
      const auto& vocab = word_source->source_vocab;
      std::vector<std::string> vocab_words;
      for (std::int64_t i = Vocabulary::kReserved; i < vocab.size(); ++i)
        vocab_words.push_back(vocab.token(i));
      if (vocab_words.empty())
        fail(errc::input, "content probe: empty vocabulary");
      const std::int64_t emb = word_source->encoder.emb_dim();
      out.features = Tensor({2 * n, d + emb});
      std::int64_t row = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& sent = corpus.sentences[static_cast<std::size_t>(i)];
        const auto& pos_word =
            sent[static_cast<std::size_t>(rng.next_below(sent.size()))];
        std::string neg_word;
        for (int tries = 0; tries < 1000; ++tries) {
          const auto& cand = vocab_words[static_cast<std::size_t>(
              rng.next_below(vocab_words.size()))];
          if (std::find(sent.begin(), sent.end(), cand) == sent.end()) {
            neg_word = cand;
            break;
          }
        }
        if (neg_word.empty())
          fail(errc::input, "content probe: cannot sample a negative word");
        copy_row(out.features, row, 0, reps.values, i);
        copy_row(out.features, row, d, embedding_row(*word_source, pos_word),
                 0);
        out.labels.push_back(1);
        out.group.push_back(i);
        ++row;
        copy_row(out.features, row, 0, reps.values, i);
        copy_row(out.features, row, d, embedding_row(*word_source, neg_word),
                 0);
        out.labels.push_back(0);
        out.group.push_back(i);
        ++row;
      }
      out.classes = 2;
      break;
    }
    case ProbeKind::order: {
      if (!word_source)
        fail(errc::input, "order probe needs the model's word embeddings");
      const std::int64_t emb = word_source->encoder.emb_dim();
      std::vector<std::array<std::string, 2>> picks;
      std::vector<std::int64_t> rows_used;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& sent = corpus.sentences[static_cast<std::size_t>(i)];
        std::vector<std::size_t> single_positions;
        for (std::size_t p = 0; p < sent.size(); ++p) {
          std::size_t count = 0;
          for (const auto& t : sent)
            if (t == sent[p]) ++count;
          if (count == 1) single_positions.push_back(p);
        }
        if (single_positions.size() < 2) continue;
        const std::size_t a = static_cast<std::size_t>(
            rng.next_below(single_positions.size() - 1));
        const std::size_t b = a + 1 + static_cast<std::size_t>(rng.next_below(
                                          single_positions.size() - 1 - a));
        picks.push_back({sent[single_positions[a]], sent[single_positions[b]]});
        rows_used.push_back(i);
      }
      if (picks.empty())
        fail(errc::input,
             "order probe: no sentence has two words occurring exactly once");
      out.features = Tensor(
          {static_cast<std::int64_t>(2 * picks.size()), d + 2 * emb});
      std::int64_t row = 0;
      for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto& [w1, w2] = picks[k];
        const std::int64_t i = rows_used[k];
        // orientation 1: w1 (earlier) listed first
        copy_row(out.features, row, 0, reps.values, i);
        copy_row(out.features, row, d, embedding_row(*word_source, w1), 0);
        copy_row(out.features, row, d + emb, embedding_row(*word_source, w2),
                 0);
        out.labels.push_back(1);
        out.group.push_back(i);
        ++row;
        // orientation 2: swapped
        copy_row(out.features, row, 0, reps.values, i);
        copy_row(out.features, row, d, embedding_row(*word_source, w2), 0);
        copy_row(out.features, row, d + emb, embedding_row(*word_source, w1),
                 0);
        out.labels.push_back(0);
        out.group.push_back(i);
        ++row;
      }
      out.classes = 2;
      break;
    }
    case ProbeKind::passive:
    case ProbeKind::tense:
    case ProbeKind::tss: {
      if (corpus.meta.size() != static_cast<std::size_t>(n))
        fail(errc::input, std::string("probe corpus lacks metadata field '") +
                              probe_kind_name(kind) + "'");
      out.features = reps.values;
      for (const auto& m : corpus.meta) {
        if (kind == ProbeKind::passive)
          out.labels.push_back(m.passive ? 1 : 0);
        else if (kind == ProbeKind::tense)
          out.labels.push_back(m.past ? 1 : 0);
        else
          out.labels.push_back(m.tss);
      }
      out.classes = kind == ProbeKind::tss ? class_count(out.labels) : 2;
      break;
    }
  }
  return out;
}

ProbeResult run_probe(const ProbeDataset& probe, ProbeClassifier classifier,
                      std::uint64_t seed) {
  const std::int64_t n = probe.features.rows();
  if (n < 5) fail(errc::input, "probe dataset too small");
  // split by groups so paired rows stay on one side
  std::vector<std::int64_t> group = probe.group;
  if (group.empty())
    for (std::int64_t i = 0; i < n; ++i) group.push_back(i);
  std::vector<std::int64_t> distinct = group;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()),
                 distinct.end());
  Rng rng(seed);
  rng.shuffle(distinct);
  const std::size_t train_groups = distinct.size() * 8 / 10;
  std::vector<std::int64_t> train_set(
      distinct.begin(),
      distinct.begin() + static_cast<std::ptrdiff_t>(train_groups));
  std::sort(train_set.begin(), train_set.end());
  std::vector<std::size_t> tr, te;
  for (std::int64_t i = 0; i < n; ++i) {
    const bool in_train =
        std::binary_search(train_set.begin(), train_set.end(),
                           group[static_cast<std::size_t>(i)]);
    (in_train ? tr : te).push_back(static_cast<std::size_t>(i));
  }
  if (tr.empty() || te.empty())
    fail(errc::input, "probe split produced an empty side");
  const Tensor train_x = gather_rows(probe.features, tr);
  const auto train_y = gather_labels(probe.labels, tr);
  const Tensor test_x = gather_rows(probe.features, te);
  const auto test_y = gather_labels(probe.labels, te);

  std::vector<std::int64_t> pred;
  if (classifier == ProbeClassifier::logreg) {
    const auto m = train_logreg(train_x, train_y, probe.classes, 0.01);
    pred = logreg_predict(m, test_x);
  } else {
    MlpClassifierConfig cfg;
    const auto mlp =
        train_mlp_classifier(train_x, train_y, probe.classes, cfg, seed);
    pred = mlp_predict(mlp, test_x);
  }
  ProbeResult result;
  result.accuracy = accuracy(pred, test_y);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(probe.classes), 0);
  for (auto y : test_y) counts[static_cast<std::size_t>(y)] += 1;
  result.baseline =
      static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
      static_cast<double>(test_y.size());
  result.test_size = static_cast<std::int64_t>(test_y.size());
  return result;
}

// ---------------------------------------------------------------------------
// similarity
// ---------------------------------------------------------------------------

double cosine(const Tensor& a, std::int64_t row_a, const Tensor& b,
              std::int64_t row_b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::int64_t j = 0; j < a.cols(); ++j) {
    const double x = a.at(row_a, j), y = b.at(row_b, j);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

StsResult cosine_sts(const Tensor& u, const Tensor& v,
                     const std::vector<double>& gold) {
  const std::int64_t n = u.rows();
  if (v.rows() != n || static_cast<std::int64_t>(gold.size()) != n)
    fail(errc::input, "cosine_sts: misaligned inputs");
  if (n < 3) fail(errc::input, "cosine_sts: needs at least 3 pairs");
  StsResult result;
  std::vector<double> cos(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double na = 0, nb = 0;
    for (std::int64_t j = 0; j < u.cols(); ++j) {
      na += u.at(i, j) * u.at(i, j);
      nb += v.at(i, j) * v.at(i, j);
    }
    if (na == 0.0 || nb == 0.0) result.zero_vector_pairs += 1;
    cos[static_cast<std::size_t>(i)] = cosine(u, i, v, i);
  }
  double mean_c = 0, mean_g = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    mean_c += cos[static_cast<std::size_t>(i)];
    mean_g += gold[static_cast<std::size_t>(i)];
  }
  mean_c /= static_cast<double>(n);
  mean_g /= static_cast<double>(n);
  double cov = 0, var_c = 0, var_g = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double dc = cos[static_cast<std::size_t>(i)] - mean_c;
    const double dg = gold[static_cast<std::size_t>(i)] - mean_g;
    cov += dc * dg;
    var_c += dc * dc;
    var_g += dg * dg;
  }
  if (var_g == 0.0)
    fail(errc::degenerate, "cosine_sts: gold scores have zero variance");
  if (var_c == 0.0)
    fail(errc::degenerate, "cosine_sts: cosine similarities have zero "
                           "variance");
  result.pearson = cov / std::sqrt(var_c * var_g);
  return result;
}

std::vector<std::int64_t> nearest_neighbors(const Tensor& matrix,
                                            const Tensor& query,
                                            std::int64_t k) {
  const std::int64_t n = matrix.rows();
  if (k < 1 || k > n)
    fail(errc::input, "nearest_neighbors: k must lie in [1, n]");
  Tensor q = query;
  if (q.rank() == 1) q = Tensor({1, q.size()}, q.values());
  if (q.cols() != matrix.cols())
    fail(errc::input, "nearest_neighbors: dimension mismatch");
  double qnorm = 0.0;
  for (std::int64_t j = 0; j < q.cols(); ++j) qnorm += q.at(0, j) * q.at(0, j);
  if (qnorm == 0.0)
    fail(errc::input, "nearest_neighbors: zero query vector");
  std::vector<std::pair<double, std::int64_t>> scored;
  scored.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    bool same = true;
    for (std::int64_t j = 0; j < q.cols() && same; ++j)
      if (matrix.at(i, j) != q.at(0, j)) same = false;
    if (same) continue;  // the query row itself
    scored.emplace_back(cosine(matrix, i, q, 0), i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::int64_t> out;
  for (std::size_t i = 0;
       i < scored.size() && i < static_cast<std::size_t>(k); ++i)
    out.push_back(scored[i].second);
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary expansion
// ---------------------------------------------------------------------------

PretrainedTable load_word_vectors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open word vectors '" + path + "'");
  PretrainedTable table;
  std::string line;
  std::vector<std::vector<double>> rows;
  std::int64_t dim = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (vec.empty())
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": no vector values");
    if (dim < 0) dim = static_cast<std::int64_t>(vec.size());
    if (static_cast<std::int64_t>(vec.size()) != dim)
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": expected " + std::to_string(dim) +
                             " values, got " + std::to_string(vec.size()));
    table.tokens.push_back(token);
    rows.push_back(std::move(vec));
  }
  if (rows.empty()) fail(errc::input, path + ": empty word vector file");
  table.vectors = Tensor({static_cast<std::int64_t>(rows.size()), dim});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::int64_t j = 0; j < dim; ++j)
      table.vectors.at(static_cast<std::int64_t>(i), j) =
          rows[i][static_cast<std::size_t>(j)];
  return table;
}

void save_word_vectors(const PretrainedTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write word vectors '" + path + "'");
  char buf[64];
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    out << table.tokens[i];
    for (std::int64_t j = 0; j < table.vectors.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    table.vectors.at(static_cast<std::int64_t>(i), j));
      out << ' ' << buf;
    }
    out << '\n';
  }
}

namespace {

// Gaussian elimination with partial pivoting; solves A X = B in place.
Tensor solve_linear(Tensor a, Tensor b) {
  const std::int64_t n = a.rows();
  if (a.cols() != n || b.rows() != n)
    fail(errc::input, "solve_linear: shape mismatch");
  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t pivot = col;
    for (std::int64_t r = col + 1; r < n; ++r)
      if (std::fabs(a.at(r, col)) > std::fabs(a.at(pivot, col))) pivot = r;
    if (std::fabs(a.at(pivot, col)) < 1e-300)
      fail(errc::numeric, "solve_linear: singular system");
    if (pivot != col) {
      for (std::int64_t j = 0; j < n; ++j)
        std::swap(a.at(col, j), a.at(pivot, j));
      for (std::int64_t j = 0; j < b.cols(); ++j)
        std::swap(b.at(col, j), b.at(pivot, j));
    }
    const double inv = 1.0 / a.at(col, col);
    for (std::int64_t r = col + 1; r < n; ++r) {
      const double factor = a.at(r, col) * inv;
      if (factor == 0.0) continue;
      for (std::int64_t j = col; j < n; ++j)
        a.at(r, j) -= factor * a.at(col, j);
      for (std::int64_t j = 0; j < b.cols(); ++j)
        b.at(r, j) -= factor * b.at(col, j);
    }
  }
  Tensor x({n, b.cols()});
  for (std::int64_t r = n - 1; r >= 0; --r) {
    for (std::int64_t j = 0; j < b.cols(); ++j) {
      double acc = b.at(r, j);
      for (std::int64_t kk = r + 1; kk < n; ++kk)
        acc -= a.at(r, kk) * x.at(kk, j);
      x.at(r, j) = acc / a.at(r, r);
    }
  }
  return x;
}

}  // namespace

ExpandResult expand_vocab(const PretrainedTable& pretrained,
                          const std::vector<std::string>& model_tokens,
                          const Tensor& model_embedding, double lambda) {
  if (static_cast<std::int64_t>(model_tokens.size()) !=
      model_embedding.rows())
    fail(errc::input, "expand_vocab: token/embedding row mismatch");
  std::unordered_map<std::string, std::int64_t> model_index;
  for (std::size_t i = 0; i < model_tokens.size(); ++i)
    model_index.emplace(model_tokens[i], static_cast<std::int64_t>(i));

  std::vector<std::pair<std::int64_t, std::int64_t>> shared;  // (pre, model)
  for (std::size_t i = 0; i < pretrained.tokens.size(); ++i) {
    auto it = model_index.find(pretrained.tokens[i]);
    if (it != model_index.end())
      shared.emplace_back(static_cast<std::int64_t>(i), it->second);
  }
  if (shared.empty())
    fail(errc::input, "expand_vocab: no shared tokens between the tables");

  const std::int64_t dp = pretrained.vectors.cols();
  const std::int64_t dm = model_embedding.cols();
  const auto s = static_cast<std::int64_t>(shared.size());

  // A = [P 1], X = [M; c]; ridge applies to M rows only.
  Tensor a({s, dp + 1});
  Tensor e({s, dm});
  for (std::int64_t i = 0; i < s; ++i) {
    const auto [pi, mi] = shared[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < dp; ++j)
      a.at(i, j) = pretrained.vectors.at(pi, j);
    a.at(i, dp) = 1.0;
    for (std::int64_t j = 0; j < dm; ++j)
      e.at(i, j) = model_embedding.at(mi, j);
  }
  Tensor ata({dp + 1, dp + 1});
  for (std::int64_t i = 0; i < s; ++i)
    for (std::int64_t r = 0; r < dp + 1; ++r) {
      const double av = a.at(i, r);
      for (std::int64_t c = 0; c < dp + 1; ++c)
        ata.at(r, c) += av * a.at(i, c);
    }
  for (std::int64_t r = 0; r < dp; ++r) ata.at(r, r) += lambda;
  Tensor atb({dp + 1, dm});
  for (std::int64_t i = 0; i < s; ++i)
    for (std::int64_t r = 0; r < dp + 1; ++r) {
      const double av = a.at(i, r);
      for (std::int64_t j = 0; j < dm; ++j)
        atb.at(r, j) += av * e.at(i, j);
    }
  const Tensor x = solve_linear(std::move(ata), std::move(atb));

  ExpandResult result;
  result.shared = s;
  const Tensor fitted = matmul(a, x);
  for (std::int64_t i = 0; i < s; ++i)
    for (std::int64_t j = 0; j < dm; ++j) {
      const double diff = fitted.at(i, j) - e.at(i, j);
      result.residual += diff * diff;
    }

  result.table.tokens = pretrained.tokens;
  result.table.vectors =
      Tensor({static_cast<std::int64_t>(pretrained.tokens.size()), dm});
  for (std::size_t i = 0; i < pretrained.tokens.size(); ++i) {
    auto it = model_index.find(pretrained.tokens[i]);
    if (it != model_index.end()) {
      for (std::int64_t j = 0; j < dm; ++j)
        result.table.vectors.at(static_cast<std::int64_t>(i), j) =
            model_embedding.at(it->second, j);
      continue;
    }
    for (std::int64_t j = 0; j < dm; ++j) {
      double acc = x.at(dp, j);  // bias
      for (std::int64_t p = 0; p < dp; ++p)
        acc += pretrained.vectors.at(static_cast<std::int64_t>(i), p) *
               x.at(p, j);
      result.table.vectors.at(static_cast<std::int64_t>(i), j) = acc;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// pooling selection
// ---------------------------------------------------------------------------

PoolingChoice select_pooling(const MultiTaskModel& model,
                             const std::vector<std::vector<std::string>>& sents,
                             const std::vector<std::int64_t>& labels,
                             std::int64_t classes, std::uint64_t seed,
                             double l2) {
  if (sents.empty()) fail(errc::input, "select_pooling: empty validation set");
  if (sents.size() != labels.size())
    fail(errc::input, "select_pooling: sentence/label mismatch");
  Rng rng(seed);
  std::vector<std::size_t> idx(sents.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  const std::size_t n_train = idx.size() / 2;
  std::vector<std::size_t> tr(idx.begin(),
                              idx.begin() + static_cast<std::ptrdiff_t>(
                                                n_train));
  std::vector<std::size_t> va(idx.begin() + static_cast<std::ptrdiff_t>(
                                                n_train),
                              idx.end());
  if (tr.empty() || va.empty())
    fail(errc::input, "select_pooling: validation set too small to split");

  auto score = [&](Pooling p) {
    const auto reps = encode_corpus(model, sents, p);
    const auto m = train_logreg(gather_rows(reps.values, tr),
                                gather_labels(labels, tr), classes, l2);
    return accuracy(logreg_predict(m, gather_rows(reps.values, va)),
                    gather_labels(labels, va));
  };
  PoolingChoice choice;
  choice.accuracy_last = score(Pooling::last);
  choice.accuracy_max = score(Pooling::max);
  choice.strategy = choice.accuracy_max > choice.accuracy_last ? Pooling::max
                                                               : Pooling::last;
  return choice;
}

}  // namespace mtse
