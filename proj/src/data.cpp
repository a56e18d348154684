#include "mtse/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mtse/errors.hpp"

namespace mtse {

const char* task_kind_name(TaskKind k) {
  return k == TaskKind::seq2seq ? "seq2seq" : "pair-classification";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "seq2seq") return TaskKind::seq2seq;
  if (name == "pair-classification") return TaskKind::pair_classification;
  fail(errc::config, "unknown task kind '" + name + "'");
}

const char* nli_label_name(std::int64_t label) {
  switch (label) {
    case 0: return "entailment";
    case 1: return "contradiction";
    case 2: return "neutral";
  }
  fail(errc::input, "nli label " + std::to_string(label) + " out of range");
}

std::int64_t nli_label_from_name(const std::string& name) {
  if (name == "entailment") return 0;
  if (name == "contradiction") return 1;
  if (name == "neutral") return 2;
  fail(errc::format, "unknown nli label '" + name + "'");
}

SentenceBatch make_batch(const std::vector<std::vector<std::int64_t>>& rows) {
  SentenceBatch b;
  b.n = static_cast<std::int64_t>(rows.size());
  for (const auto& r : rows) {
    if (r.empty()) fail(errc::input, "empty sentence in batch");
    b.max_len = std::max(b.max_len, static_cast<std::int64_t>(r.size()));
  }
  b.ids.assign(static_cast<std::size_t>(b.n * b.max_len), Vocabulary::kPad);
  for (std::int64_t i = 0; i < b.n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    b.lengths.push_back(static_cast<std::int64_t>(r.size()));
    for (std::size_t t = 0; t < r.size(); ++t)
      b.ids[static_cast<std::size_t>(i * b.max_len) + t] = r[t];
  }
  return b;
}

Seq2SeqBatch make_seq2seq_batch(const std::vector<const Seq2SeqExample*>& ex,
                                const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab) {
  Seq2SeqBatch out;
  std::vector<std::vector<std::int64_t>> src_rows;
  std::vector<std::vector<std::int64_t>> in_rows;
  std::vector<std::vector<std::int64_t>> label_rows;
  for (const auto* e : ex) {
    src_rows.push_back(src_vocab.encode(e->source));
    auto tgt = tgt_vocab.encode(e->target);
    std::vector<std::int64_t> in{Vocabulary::kBos};
    in.insert(in.end(), tgt.begin(), tgt.end());
    std::vector<std::int64_t> labels(tgt.begin(), tgt.end());
    labels.push_back(Vocabulary::kEos);
    in_rows.push_back(std::move(in));
    label_rows.push_back(std::move(labels));
  }
  out.source = make_batch(src_rows);
  out.target_in = make_batch(in_rows);
  const std::int64_t n = out.target_in.n, t_max = out.target_in.max_len;
  out.target_labels.assign(static_cast<std::size_t>(n * t_max),
                           Vocabulary::kPad);
  out.label_mask.assign(static_cast<std::size_t>(n * t_max), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& labels = label_rows[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < labels.size(); ++t) {
      out.target_labels[static_cast<std::size_t>(i * t_max) + t] = labels[t];
      out.label_mask[static_cast<std::size_t>(i * t_max) + t] = 1.0;
    }
  }
  return out;
}

PairBatch make_pair_batch(const std::vector<const PairExample*>& ex,
                          const Vocabulary& vocab) {
  PairBatch out;
  std::vector<std::vector<std::int64_t>> prem, hyp;
  for (const auto* e : ex) {
    prem.push_back(vocab.encode(e->premise));
    hyp.push_back(vocab.encode(e->hypothesis));
    out.labels.push_back(e->label);
  }
  out.premise = make_batch(prem);
  out.hypothesis = make_batch(hyp);
  return out;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n,
                                                  std::int64_t batch_size,
                                                  Rng& rng) {
  if (batch_size < 1) fail(errc::config, "batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n;
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

std::vector<std::string> read_physical_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<std::vector<std::string>> load_lines(const std::string& path,
                                                 LoadStats* stats) {
  std::vector<std::vector<std::string>> out;
  LoadStats local;
  for (const auto& line : read_physical_lines(path)) {
    auto toks = tokenize(line);
    if (toks.empty()) {
      local.blank_skipped++;
      continue;
    }
    out.push_back(std::move(toks));
  }
  if (stats) *stats = local;
  return out;
}

TaskDataset load_parallel_tsv(const std::string& path, const std::string& name,
                              LoadStats* stats) {
  TaskDataset data;
  data.name = name;
  data.kind = TaskKind::seq2seq;
  LoadStats local;
  std::size_t line_no = 0;
  for (const auto& line : read_physical_lines(path)) {
    ++line_no;
    if (tokenize(line).empty()) {
      local.blank_skipped++;
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 2)
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": expected source<TAB>target, got " +
                             std::to_string(fields.size()) + " fields");
    Seq2SeqExample ex{tokenize(fields[0]), tokenize(fields[1])};
    if (ex.source.empty() || ex.target.empty())
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": empty source or target");
    data.pairs.push_back(std::move(ex));
  }
  if (stats) *stats = local;
  return data;
}

TaskDataset load_nli_tsv(const std::string& path, const std::string& name,
                         LoadStats* stats) {
  TaskDataset data;
  data.name = name;
  data.kind = TaskKind::pair_classification;
  LoadStats local;
  std::size_t line_no = 0;
  for (const auto& line : read_physical_lines(path)) {
    ++line_no;
    if (tokenize(line).empty()) {
      local.blank_skipped++;
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      fail(errc::format,
           path + ":" + std::to_string(line_no) +
               ": expected premise<TAB>hypothesis<TAB>label, got " +
               std::to_string(fields.size()) + " fields");
    PairExample ex;
    ex.premise = tokenize(fields[0]);
    ex.hypothesis = tokenize(fields[1]);
    if (ex.premise.empty() || ex.hypothesis.empty())
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": empty premise or hypothesis");
    try {
      ex.label = nli_label_from_name(fields[2]);
    } catch (const Error&) {
      fail(errc::format, path + ":" + std::to_string(line_no) +
                             ": unknown label '" + fields[2] + "'");
    }
    data.pair_items.push_back(std::move(ex));
  }
  if (stats) *stats = local;
  return data;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

void save_parallel_tsv(const TaskDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write '" + path + "'");
  for (const auto& ex : data.pairs)
    out << join_tokens(ex.source) << '\t' << join_tokens(ex.target) << '\n';
}

void save_nli_tsv(const TaskDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write '" + path + "'");
  for (const auto& ex : data.pair_items)
    out << join_tokens(ex.premise) << '\t' << join_tokens(ex.hypothesis)
        << '\t' << nli_label_name(ex.label) << '\n';
}

}  // namespace mtse
