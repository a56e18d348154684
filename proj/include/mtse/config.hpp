#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtse/model.hpp"
#include "mtse/trainer.hpp"

namespace mtse {

// Synthetic dataset description; `generator` picks one of cipher / books /
// pcfg / nli and the remaining knobs apply per generator.
struct SyntheticSpec {
  std::string generator;
  std::optional<std::uint64_t> seed;  // default derived from train seed
  std::int64_t n = 5000;
  std::int64_t n_heldout = 500;
  std::int64_t vocab_size = 64;
  std::int64_t min_len = 3;
  std::int64_t max_len = 10;
  bool reverse = false;          // cipher
  std::int64_t states = 8;       // books
  std::int64_t n_books = 40;
  std::int64_t heldout_books = 8;
  std::int64_t sentences_per_book = 25;
  double stay_prob = 0.8;
  double noise = 0.1;
  std::string direction = "next";  // books: next | prev
};

struct TaskFileSource {
  std::string train;
  std::string heldout;  // optional
};

struct TaskConfig {
  std::string name;
  TaskKind kind = TaskKind::seq2seq;
  double weight = 1.0;
  std::int64_t duplication = 1;  // gold-parse style oversampling
  std::optional<SyntheticSpec> synthetic;
  std::optional<TaskFileSource> files;
};

struct EvalConfig {
  std::string pooling = "last";  // last | max | auto
  std::int64_t folds = 10;
  std::vector<double> l2_grid = {0.015625, 0.0625, 0.25, 1.0, 4.0, 16.0};
};

// Full run configuration. Unknown keys are rejected; missing keys take the
// documented desk-scale defaults (paper-scale values: embeddings 512, hidden
// 1500/2048, batch 48).
struct RunConfig {
  ModelDims model;
  TrainConfig train;
  NliHeadConfig nli_head;
  std::vector<TaskConfig> tasks;
  EvalConfig eval;
  nlohmann::json raw;  // as parsed, for provenance and hashing
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

std::string config_hash(const nlohmann::json& j);

// Seed for a task's generator: explicit when configured, otherwise derived
// from the train seed and the task name.
std::uint64_t task_seed(const RunConfig& cfg, const TaskConfig& task);
std::uint64_t heldout_seed(std::uint64_t seed);

}  // namespace mtse
