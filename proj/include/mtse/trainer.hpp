#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtse/data.hpp"
#include "mtse/model.hpp"
#include "mtse/optim.hpp"
#include "mtse/rng.hpp"

namespace mtse {

// A training objective bound to a dataset. Seq2seq tasks own a decoder of
// the same name; the (single) pair-classification task drives the NLI head.
struct TrainTask {
  TaskDataset data;
  double weight = 1.0;
};

struct TrainConfig {
  std::int64_t batch_size = 16;   // paper uses 48
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t total_updates = 1000;
  std::int64_t nli_every = 10;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 42;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic saves
};

struct LossLogEntry {
  std::int64_t update = 0;
  std::string task;
  double loss = 0.0;
};

// Categorical draw from alpha; the vector must sum to 1 within 1e-9.
std::size_t sample_task(const std::vector<double>& alpha, Rng& rng);

// Epoch stream over one task: a seeded permutation walked in batch_size
// chunks, reshuffled from the shared rng when exhausted.
struct TaskStream {
  std::vector<std::int64_t> perm;
  std::int64_t pos = 0;

  void ensure(std::size_t n, std::int64_t batch, Rng& rng);
  std::vector<std::size_t> next(std::size_t n, std::int64_t batch, Rng& rng);
};

class Trainer {
 public:
  Trainer(MultiTaskModel model, std::vector<TrainTask> tasks,
          TrainConfig config);

  // Runs until config.total_updates, appending to the loss log. The callback
  // (when set) fires after every checkpoint_every-th update.
  void run(const std::function<void(std::int64_t)>& on_checkpoint = {});

  // One update; returns the log entry. Exposed for tests.
  LossLogEntry step();

  MultiTaskModel& model() { return model_; }
  const MultiTaskModel& model() const { return model_; }
  const std::vector<TrainTask>& tasks() const { return tasks_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<LossLogEntry>& log() const { return log_; }
  std::int64_t update_count() const { return update_; }

  // Serialized trainer state, exposed for checkpointing.
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  std::vector<AdamState>& adam_states() { return adam_; }
  const std::vector<AdamState>& adam_states() const { return adam_; }
  std::vector<TaskStream>& streams() { return streams_; }
  const std::vector<TaskStream>& streams() const { return streams_; }
  std::int64_t& update_counter() { return update_; }
  std::int64_t& since_nli_counter() { return since_nli_; }
  std::int64_t since_nli() const { return since_nli_; }

 private:
  LossLogEntry seq2seq_update(std::size_t task_idx);
  LossLogEntry nli_update();
  void apply_grads(const std::vector<std::pair<std::string, Graph::Var>>& items,
                   const Graph& g);

  MultiTaskModel model_;
  std::vector<TrainTask> tasks_;
  TrainConfig config_;
  Rng rng_;
  std::vector<AdamState> adam_;
  std::vector<TaskStream> streams_;
  std::vector<std::size_t> seq2seq_tasks_;
  std::optional<std::size_t> nli_task_;
  std::vector<double> alpha_;
  std::vector<LossLogEntry> log_;
  std::int64_t update_ = 0;
  std::int64_t since_nli_ = 0;
  std::vector<std::pair<std::string, Tensor*>> params_;
};

// ---------------------------------------------------------------------------
// Gradient verification harness: analytic gradients of the summed multi-task
// loss on one tiny batch per task vs central finite differences.
// ---------------------------------------------------------------------------

struct ModelGradData {
  std::vector<std::string> names;
  std::vector<Tensor> analytic;
  std::vector<Tensor> fd;
};

ModelGradData model_grad_data(MultiTaskModel& model,
                              const std::vector<TrainTask>& tasks,
                              std::int64_t batch_size, double eps,
                              std::uint64_t seed);

GradCheckReport grad_check_model(MultiTaskModel& model,
                                 const std::vector<TrainTask>& tasks,
                                 std::int64_t batch_size, double eps,
                                 double tol, std::uint64_t seed);

// Batch assembly against the model's vocabularies.
Seq2SeqBatch assemble_seq2seq(const TaskDataset& data,
                              const std::vector<std::size_t>& idx,
                              const Vocabulary& src, const Vocabulary& tgt);
PairBatch assemble_pairs(const TaskDataset& data,
                         const std::vector<std::size_t>& idx,
                         const Vocabulary& vocab);

double global_grad_norm(const std::vector<Tensor>& grads);

}  // namespace mtse
