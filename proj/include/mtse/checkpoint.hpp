#pragma once

#include <array>
#include <optional>
#include <string>

#include <json.hpp>

#include "mtse/trainer.hpp"

namespace mtse {

// Checkpoint wire format: magic "MTSE", format version u32, length-prefixed
// JSON blob (model dims, vocabularies, decoder bindings, train config), then
// repeated records {name_len u32, name bytes, rank u32, dims u32 x rank,
// float64 little-endian row-major values}. Optimizer, rng and stream state
// ride along as records under the reserved "opt." / "state." prefixes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Trainer& trainer, const nlohmann::json& run_config,
                     const std::string& path);

struct LoadedCheckpoint {
  MultiTaskModel model;
  nlohmann::json blob;          // full JSON header
  nlohmann::json run_config;    // original run configuration

  // trainer state (present when the checkpoint was written by training)
  bool has_trainer_state = false;
  std::int64_t update = 0;
  std::int64_t since_nli = 0;
  std::int64_t adam_t = 0;
  std::array<std::uint64_t, 4> rng_state{};
  std::vector<std::pair<std::string, Tensor>> opt_m;  // by param name
  std::vector<std::pair<std::string, Tensor>> opt_v;
  std::vector<TaskStream> streams;
};

LoadedCheckpoint checkpoint_load(const std::string& path);

// Rebuilds a Trainer mid-run from a loaded checkpoint. Tasks must match the
// checkpoint's task list (names, kinds and order).
Trainer resume_trainer(const LoadedCheckpoint& ck, std::vector<TrainTask> tasks,
                       const TrainConfig& config);

void write_loss_log(const std::vector<LossLogEntry>& log,
                    const std::string& path,
                    const std::vector<std::string>& comment_lines = {});

}  // namespace mtse
