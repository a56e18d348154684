#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtse/checkpoint.hpp"
#include "mtse/config.hpp"
#include "mtse/evalsuite.hpp"

namespace mtse {

// Materialized datasets for every configured task.
struct DatasetBundle {
  std::vector<TrainTask> train;     // aligned with cfg.tasks
  std::vector<TaskDataset> heldout;
  std::optional<ParsingData> parse_heldout;  // metadata for syntax probes
  std::string parse_task_name;
};

DatasetBundle build_datasets(const RunConfig& cfg);

// Builds vocabularies from the task corpora and initializes the model from
// the head of the run's rng stream; the returned state continues that
// stream (the trainer picks it up).
struct TrainSetup {
  MultiTaskModel model;
  std::array<std::uint64_t, 4> rng_state;
};

TrainSetup prepare_model(const RunConfig& cfg, const DatasetBundle& data);

// --- command implementations (reports as JSON) ---

nlohmann::json cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);

nlohmann::json cmd_train(const RunConfig& cfg, const std::string& out_path,
                         const std::optional<std::string>& resume_from);

nlohmann::json cmd_encode(const std::string& checkpoint_path,
                          const std::string& input_path,
                          const std::string& pooling,
                          const std::string& out_path);

nlohmann::json cmd_eval_transfer(const std::string& checkpoint_path,
                                 const std::string& data_path,
                                 const std::string& pooling,
                                 std::optional<std::uint64_t> seed_override);

nlohmann::json cmd_eval_sts(const std::string& checkpoint_path,
                            const std::string& data_path,
                            const std::string& pooling);

nlohmann::json cmd_eval_pair(const std::string& checkpoint_path,
                             const std::string& data_path,
                             const std::string& pooling,
                             std::optional<std::uint64_t> seed_override);

nlohmann::json cmd_probe(const std::string& checkpoint_path,
                         const std::string& kind, const std::string& data_path,
                         const std::string& pooling,
                         std::optional<std::uint64_t> seed_override,
                         std::int64_t length_bins = 8);

nlohmann::json cmd_nn(const std::string& checkpoint_path,
                      const std::string& corpus_path, const std::string& query,
                      std::int64_t k, const std::string& pooling);

nlohmann::json cmd_expand_vocab(const std::string& checkpoint_path,
                                const std::string& pretrained_path,
                                const std::string& out_path);

nlohmann::json cmd_grad_check(const RunConfig& cfg);

// Pooling resolution: "last"/"max" parse directly; "auto" needs labels and
// is handled inside eval transfer.
Pooling resolve_pooling_strict(const std::string& name);

}  // namespace mtse
