#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtse/rng.hpp"
#include "mtse/vocab.hpp"

namespace mtse {

// Padded integer token matrix with per-row lengths. Positions >= length hold
// the pad id.
struct SentenceBatch {
  std::vector<std::int64_t> ids;  // row-major n x max_len
  std::vector<std::int64_t> lengths;
  std::int64_t n = 0;
  std::int64_t max_len = 0;

  std::int64_t at(std::int64_t row, std::int64_t t) const {
    return ids[static_cast<std::size_t>(row * max_len + t)];
  }
};

SentenceBatch make_batch(const std::vector<std::vector<std::int64_t>>& rows);

enum class TaskKind { seq2seq, pair_classification };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct Seq2SeqExample {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

struct PairExample {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  std::int64_t label = 0;
};

// NLI label order is fixed: 0=entailment, 1=contradiction, 2=neutral.
constexpr std::int64_t kNliClasses = 3;
const char* nli_label_name(std::int64_t label);
std::int64_t nli_label_from_name(const std::string& name);

struct TaskDataset {
  std::string name;
  TaskKind kind = TaskKind::seq2seq;
  std::vector<Seq2SeqExample> pairs;     // seq2seq only
  std::vector<PairExample> pair_items;   // pair-classification only

  std::size_t size() const {
    return kind == TaskKind::seq2seq ? pairs.size() : pair_items.size();
  }
};

// A numericised seq2seq batch: padded source rows plus the teacher-forcing
// view of the target (inputs <s>,y1..y_{k-1}; labels y1..y_{k-1},</s>).
struct Seq2SeqBatch {
  SentenceBatch source;
  SentenceBatch target_in;
  std::vector<std::int64_t> target_labels;  // row-major n x target_in.max_len
  std::vector<double> label_mask;           // 1 at real label positions
};

struct PairBatch {
  SentenceBatch premise;
  SentenceBatch hypothesis;
  std::vector<std::int64_t> labels;
};

Seq2SeqBatch make_seq2seq_batch(const std::vector<const Seq2SeqExample*>& ex,
                                const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab);
PairBatch make_pair_batch(const std::vector<const PairExample*>& ex,
                          const Vocabulary& vocab);

// Seeded epoch order: a shuffled permutation of example indices chunked into
// batches of batch_size, last short batch kept.
std::vector<std::vector<std::size_t>> batch_order(std::size_t n,
                                                  std::int64_t batch_size,
                                                  Rng& rng);

struct LoadStats {
  std::size_t blank_skipped = 0;
};

// One whitespace-tokenized sentence per line; blank lines skipped with a
// warning count; CRLF normalized.
std::vector<std::vector<std::string>> load_lines(const std::string& path,
                                                 LoadStats* stats = nullptr);

// source<TAB>target per line.
TaskDataset load_parallel_tsv(const std::string& path, const std::string& name,
                              LoadStats* stats = nullptr);

// premise<TAB>hypothesis<TAB>{entailment|contradiction|neutral} per line.
TaskDataset load_nli_tsv(const std::string& path, const std::string& name,
                         LoadStats* stats = nullptr);

void save_parallel_tsv(const TaskDataset& data, const std::string& path);
void save_nli_tsv(const TaskDataset& data, const std::string& path);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace mtse
