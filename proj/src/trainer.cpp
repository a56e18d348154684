#include "mtse/trainer.hpp"

#include <cmath>
#include <unordered_map>

#include "mtse/errors.hpp"

namespace mtse {

std::size_t sample_task(const std::vector<double>& alpha, Rng& rng) {
  if (alpha.empty()) fail(errc::config, "sample_task: empty probability vector");
  double sum = 0.0;
  for (double p : alpha) {
    if (p < 0.0) fail(errc::config, "sample_task: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    fail(errc::config, "sample_task: probabilities sum to " +
                           std::to_string(sum) + ", expected 1");
  return rng.categorical(alpha);
}

void TaskStream::ensure(std::size_t n, std::int64_t batch, Rng& rng) {
  (void)batch;
  if (perm.empty() || pos >= static_cast<std::int64_t>(perm.size())) {
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      perm[i] = static_cast<std::int64_t>(i);
    rng.shuffle(perm);
    pos = 0;
  }
}

std::vector<std::size_t> TaskStream::next(std::size_t n, std::int64_t batch,
                                          Rng& rng) {
  ensure(n, batch, rng);
  std::vector<std::size_t> idx;
  const std::int64_t end =
      std::min<std::int64_t>(pos + batch, static_cast<std::int64_t>(n));
  for (std::int64_t i = pos; i < end; ++i)
    idx.push_back(static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]));
  pos = end;
  return idx;
}

Seq2SeqBatch assemble_seq2seq(const TaskDataset& data,
                              const std::vector<std::size_t>& idx,
                              const Vocabulary& src, const Vocabulary& tgt) {
  std::vector<const Seq2SeqExample*> ex;
  ex.reserve(idx.size());
  for (auto i : idx) ex.push_back(&data.pairs[i]);
  return make_seq2seq_batch(ex, src, tgt);
}

PairBatch assemble_pairs(const TaskDataset& data,
                         const std::vector<std::size_t>& idx,
                         const Vocabulary& vocab) {
  std::vector<const PairExample*> ex;
  ex.reserve(idx.size());
  for (auto i : idx) ex.push_back(&data.pair_items[i]);
  return make_pair_batch(ex, vocab);
}

double global_grad_norm(const std::vector<Tensor>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (std::int64_t i = 0; i < g.size(); ++i) sq += g.at(i) * g.at(i);
  return std::sqrt(sq);
}

Trainer::Trainer(MultiTaskModel model, std::vector<TrainTask> tasks,
                 TrainConfig config)
    : model_(std::move(model)),
      tasks_(std::move(tasks)),
      config_(config),
      rng_(config.seed) {
  if (config_.nli_every < 1) fail(errc::config, "nli_every must be >= 1");
  if (config_.total_updates < 0)
    fail(errc::config, "total_updates must be >= 0");
  if (config_.batch_size < 1) fail(errc::config, "batch size must be >= 1");
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& t = tasks_[i];
    if (t.data.size() == 0)
      fail(errc::config, "task '" + t.data.name + "' has no examples");
    if (t.data.kind == TaskKind::seq2seq) {
      model_.decoder(t.data.name);  // must exist
      seq2seq_tasks_.push_back(i);
      weight_sum += t.weight;
    } else {
      if (nli_task_)
        fail(errc::config, "at most one pair-classification task supported");
      if (!model_.nli)
        fail(errc::config, "pair-classification task configured but the "
                           "model has no NLI head");
      nli_task_ = i;
    }
  }
  if (seq2seq_tasks_.empty())
    fail(errc::config, "training needs at least one seq2seq task");
  if (weight_sum <= 0) fail(errc::config, "task weights must sum > 0");
  for (auto i : seq2seq_tasks_)
    alpha_.push_back(tasks_[i].weight / weight_sum);
  params_ = model_.named_params();
  for (auto& [name, t] : params_) adam_.push_back(AdamState::like(*t));
  streams_.resize(tasks_.size());
}

void Trainer::apply_grads(
    const std::vector<std::pair<std::string, Graph::Var>>& items,
    const Graph& g) {
  static thread_local std::unordered_map<std::string, std::size_t> index;
  index.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index[params_[i].first] = i;
  std::vector<Tensor> grads;
  grads.reserve(params_.size());
  for (auto& [name, t] : params_) grads.emplace_back(t->shape(), 0.0);
  for (const auto& [name, var] : items) {
    auto it = index.find(name);
    if (it == index.end())
      fail(errc::internal, "gradient for unknown parameter '" + name + "'");
    grads[it->second] = g.grad(var);
  }
  const double norm = global_grad_norm(grads);
  if (config_.grad_clip_norm > 0 && norm > config_.grad_clip_norm) {
    const double scale = config_.grad_clip_norm / norm;
    for (auto& gr : grads)
      for (std::int64_t i = 0; i < gr.size(); ++i) gr.at(i) *= scale;
  }
  const AdamConfig acfg{config_.lr, config_.beta1, config_.beta2,
                        config_.adam_eps};
  for (std::size_t i = 0; i < params_.size(); ++i)
    adam_step(*params_[i].second, grads[i], adam_[i], acfg);
}

LossLogEntry Trainer::seq2seq_update(std::size_t task_idx) {
  auto& task = tasks_[task_idx];
  const auto idx =
      streams_[task_idx].next(task.data.size(), config_.batch_size, rng_);
  const auto& slot = model_.decoder(task.data.name);
  const auto batch =
      assemble_seq2seq(task.data, idx, model_.source_vocab, slot.vocab);
  Graph g;
  ParamBinding pb;
  auto enc_vars = bind_encoder(g, pb, model_.encoder);
  auto dec_vars = bind_decoder(g, pb, "dec." + slot.task_name, slot.params);
  auto encoded = encode_graph(g, enc_vars, batch.source);
  auto loss = teacher_forced_loss_graph(g, encoded.h_x, batch, dec_vars);
  g.backward(loss);
  apply_grads(pb.items, g);
  return LossLogEntry{update_, task.data.name, g.val(loss).at(0)};
}

LossLogEntry Trainer::nli_update() {
  auto& task = tasks_[*nli_task_];
  const auto idx =
      streams_[*nli_task_].next(task.data.size(), config_.batch_size, rng_);
  const auto batch = assemble_pairs(task.data, idx, model_.source_vocab);
  const auto plan = draw_dropout(*model_.nli, batch.premise.n, rng_);
  Graph g;
  ParamBinding pb;
  auto enc_vars = bind_encoder(g, pb, model_.encoder);
  auto mlp_vars = bind_mlp(g, pb, "nli", *model_.nli);
  auto loss = nli_loss_graph(g, enc_vars, mlp_vars, batch, plan);
  g.backward(loss);
  apply_grads(pb.items, g);
  return LossLogEntry{update_, task.data.name, g.val(loss).at(0)};
}

LossLogEntry Trainer::step() {
  update_ += 1;
  LossLogEntry entry;
  try {
    if (nli_task_ && since_nli_ >= config_.nli_every) {
      entry = nli_update();
      since_nli_ = 0;
    } else {
      const std::size_t pick = sample_task(alpha_, rng_);
      entry = seq2seq_update(seq2seq_tasks_[pick]);
      since_nli_ += 1;
    }
  } catch (const Error& e) {
    if (e.code() == errc::numeric)
      fail(errc::numeric, "update " + std::to_string(update_) + ": " +
                              e.what());
    throw;
  }
  log_.push_back(entry);
  return entry;
}

void Trainer::run(const std::function<void(std::int64_t)>& on_checkpoint) {
  while (update_ < config_.total_updates) {
    step();
    if (on_checkpoint && config_.checkpoint_every > 0 &&
        update_ % config_.checkpoint_every == 0)
      on_checkpoint(update_);
  }
}

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

namespace {

struct GradCheckSetup {
  std::vector<Seq2SeqBatch> seq_batches;        // aligned with seq task list
  std::vector<const DecoderSlot*> seq_slots;
  std::optional<PairBatch> nli_batch;
  DropoutPlan nli_plan;
};

GradCheckSetup build_setup(MultiTaskModel& model,
                           const std::vector<TrainTask>& tasks,
                           std::int64_t batch_size, std::uint64_t seed) {
  GradCheckSetup setup;
  Rng rng(seed);
  for (const auto& task : tasks) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0;
         i < std::min<std::size_t>(task.data.size(),
                                   static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    if (idx.empty())
      fail(errc::config, "grad check task '" + task.data.name + "' is empty");
    if (task.data.kind == TaskKind::seq2seq) {
      const auto& slot = model.decoder(task.data.name);
      setup.seq_batches.push_back(
          assemble_seq2seq(task.data, idx, model.source_vocab, slot.vocab));
      setup.seq_slots.push_back(&slot);
    } else {
      if (!model.nli)
        fail(errc::config, "grad check: model has no NLI head");
      setup.nli_batch = assemble_pairs(task.data, idx, model.source_vocab);
      // one fixed mask shared by every finite-difference evaluation
      setup.nli_plan =
          draw_dropout(*model.nli, setup.nli_batch->premise.n, rng);
    }
  }
  return setup;
}

double total_loss(const MultiTaskModel& model, const GradCheckSetup& setup) {
  double total = 0.0;
  for (std::size_t k = 0; k < setup.seq_batches.size(); ++k) {
    Graph g;
    ParamBinding pb;
    auto enc = bind_encoder(g, pb, model.encoder);
    auto dec = bind_decoder(g, pb, "d", setup.seq_slots[k]->params);
    auto encoded = encode_graph(g, enc, setup.seq_batches[k].source);
    total +=
        g.val(teacher_forced_loss_graph(g, encoded.h_x, setup.seq_batches[k],
                                        dec))
            .at(0);
  }
  if (setup.nli_batch) {
    Graph g;
    ParamBinding pb;
    auto enc = bind_encoder(g, pb, model.encoder);
    auto mlp = bind_mlp(g, pb, "nli", *model.nli);
    total += g.val(nli_loss_graph(g, enc, mlp, *setup.nli_batch,
                                  setup.nli_plan))
                 .at(0);
  }
  return total;
}

}  // namespace

ModelGradData model_grad_data(MultiTaskModel& model,
                              const std::vector<TrainTask>& tasks,
                              std::int64_t batch_size, double eps,
                              std::uint64_t seed) {
  const auto setup = build_setup(model, tasks, batch_size, seed);

  // analytic: one graph holding the summed loss over every task
  Graph g;
  ParamBinding pb;
  auto vars = bind_model(g, pb, model);
  Graph::Var loss = -1;
  for (std::size_t k = 0; k < setup.seq_batches.size(); ++k) {
    std::size_t slot_idx = 0;
    for (std::size_t d = 0; d < model.decoders.size(); ++d)
      if (&model.decoders[d] == setup.seq_slots[k]) slot_idx = d;
    auto encoded = encode_graph(g, vars.encoder, setup.seq_batches[k].source);
    auto l = teacher_forced_loss_graph(g, encoded.h_x, setup.seq_batches[k],
                                       vars.decoders[slot_idx]);
    loss = (loss < 0) ? l : g.add(loss, l);
  }
  if (setup.nli_batch) {
    auto l = nli_loss_graph(g, vars.encoder, vars.nli, *setup.nli_batch,
                            setup.nli_plan);
    loss = (loss < 0) ? l : g.add(loss, l);
  }
  if (loss < 0) fail(errc::config, "grad check: no tasks");
  g.backward(loss);

  ModelGradData data;
  auto params = model.named_params();
  std::unordered_map<std::string, Graph::Var> bound;
  for (const auto& [name, var] : pb.items) bound[name] = var;
  std::vector<Tensor*> param_ptrs;
  for (auto& [name, t] : params) {
    data.names.push_back(name);
    param_ptrs.push_back(t);
    auto it = bound.find(name);
    if (it == bound.end())
      fail(errc::internal, "grad check: parameter '" + name + "' not bound");
    data.analytic.push_back(g.grad(it->second));
  }

  data.fd = finite_diff_grad(
      param_ptrs, [&]() { return total_loss(model, setup); }, eps);
  return data;
}

GradCheckReport grad_check_model(MultiTaskModel& model,
                                 const std::vector<TrainTask>& tasks,
                                 std::int64_t batch_size, double eps,
                                 double tol, std::uint64_t seed) {
  auto data = model_grad_data(model, tasks, batch_size, eps, seed);
  return compare_grad_sets(data.names, data.analytic, data.fd, tol);
}

}  // namespace mtse
