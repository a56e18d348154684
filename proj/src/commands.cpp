#include "mtse/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "mtse/errors.hpp"

namespace mtse {

namespace {

namespace fs = std::filesystem;

TaskDataset rename_dataset(TaskDataset data, const std::string& name) {
  data.name = name;
  return data;
}

TaskDataset duplicated(TaskDataset data, std::int64_t times) {
  if (times <= 1) return data;
  TaskDataset out = data;
  for (std::int64_t k = 1; k < times; ++k) {
    for (const auto& p : data.pairs) out.pairs.push_back(p);
    for (const auto& p : data.pair_items) out.pair_items.push_back(p);
  }
  return out;
}

BooksConfig books_config(const SyntheticSpec& s) {
  BooksConfig b;
  b.vocab_size = s.vocab_size;
  b.states = s.states;
  b.n_books = s.n_books;
  b.sentences_per_book = s.sentences_per_book;
  b.min_len = s.min_len;
  b.max_len = s.max_len;
  b.stay_prob = s.stay_prob;
  b.noise = s.noise;
  return b;
}

CipherConfig cipher_config(const SyntheticSpec& s, std::int64_t n) {
  CipherConfig c;
  c.vocab_size = s.vocab_size;
  c.n = n;
  c.min_len = s.min_len;
  c.max_len = s.max_len;
  c.reverse = s.reverse;
  return c;
}

}  // namespace

DatasetBundle build_datasets(const RunConfig& cfg) {
  if (cfg.tasks.empty())
    fail(errc::config, "run config declares no tasks");
  DatasetBundle out;
  for (const auto& task : cfg.tasks) {
    const std::uint64_t seed = task_seed(cfg, task);
    TaskDataset train, heldout;
    if (task.synthetic) {
      const auto& s = *task.synthetic;
      if (s.generator == "cipher") {
        if (task.kind != TaskKind::seq2seq)
          fail(errc::config, "cipher generator is seq2seq only");
        train = gen_cipher_task(seed, cipher_config(s, s.n), task.name);
        heldout = gen_cipher_task(heldout_seed(seed),
                                  cipher_config(s, s.n_heldout), task.name);
      } else if (s.generator == "books") {
        if (task.kind != TaskKind::seq2seq)
          fail(errc::config, "books generator is seq2seq only");
        auto train_books = gen_books(seed, books_config(s));
        BooksConfig held_cfg = books_config(s);
        held_cfg.n_books = s.heldout_books;
        auto held_books = gen_books(heldout_seed(seed), held_cfg);
        const bool next = s.direction == "next";
        train = rename_dataset(next ? train_books.stn : train_books.stp,
                               task.name);
        heldout = rename_dataset(next ? held_books.stn : held_books.stp,
                                 task.name);
      } else if (s.generator == "pcfg") {
        if (task.kind != TaskKind::seq2seq)
          fail(errc::config, "pcfg generator is seq2seq only");
        const Pcfg grammar = Pcfg::default_grammar();
        auto parse_train = gen_pcfg_parsing(seed, grammar, s.n, task.name);
        auto parse_held =
            gen_pcfg_parsing(heldout_seed(seed), grammar, s.n_heldout,
                             task.name);
        train = parse_train.data;
        heldout = parse_held.data;
        out.parse_heldout = std::move(parse_held);
        out.parse_task_name = task.name;
      } else if (s.generator == "nli") {
        if (task.kind != TaskKind::pair_classification)
          fail(errc::config, "nli generator needs kind pair-classification");
        const auto gen = default_nli_sentence_gen(s.min_len, s.max_len);
        train = rename_dataset(gen_nli(seed, s.n, gen), task.name);
        heldout = rename_dataset(gen_nli(heldout_seed(seed), s.n_heldout, gen),
                                 task.name);
      }
    } else if (task.files) {
      if (task.kind == TaskKind::seq2seq) {
        train = load_parallel_tsv(task.files->train, task.name);
        if (!task.files->heldout.empty())
          heldout = load_parallel_tsv(task.files->heldout, task.name);
        else
          heldout.name = task.name;
      } else {
        train = load_nli_tsv(task.files->train, task.name);
        if (!task.files->heldout.empty())
          heldout = load_nli_tsv(task.files->heldout, task.name);
        else {
          heldout.name = task.name;
          heldout.kind = TaskKind::pair_classification;
        }
      }
    }
    if (train.size() == 0)
      fail(errc::config, "task '" + task.name + "' produced no examples");
    TrainTask tt;
    tt.data = duplicated(std::move(train), task.duplication);
    tt.weight = task.weight;
    out.train.push_back(std::move(tt));
    out.heldout.push_back(std::move(heldout));
  }
  return out;
}

TrainSetup prepare_model(const RunConfig& cfg, const DatasetBundle& data) {
  // shared source vocabulary over every task's encoder-side text
  std::vector<std::vector<std::string>> source_lines;
  for (const auto& task : data.train) {
    if (task.data.kind == TaskKind::seq2seq) {
      for (const auto& ex : task.data.pairs) source_lines.push_back(ex.source);
    } else {
      for (const auto& ex : task.data.pair_items) {
        source_lines.push_back(ex.premise);
        source_lines.push_back(ex.hypothesis);
      }
    }
  }
  Vocabulary source_vocab = build_vocab(source_lines, 1 << 20, 1);

  std::vector<std::pair<std::string, Vocabulary>> decoder_specs;
  bool has_nli = false;
  for (const auto& task : data.train) {
    if (task.data.kind == TaskKind::seq2seq) {
      std::vector<std::vector<std::string>> target_lines;
      for (const auto& ex : task.data.pairs) target_lines.push_back(ex.target);
      decoder_specs.emplace_back(task.data.name,
                                 build_vocab(target_lines, 1 << 20, 1));
    } else {
      has_nli = true;
    }
  }

  Rng rng(cfg.train.seed);
  TrainSetup setup{
      MultiTaskModel::init(cfg.model, std::move(source_vocab), decoder_specs,
                           has_nli ? std::optional(cfg.nli_head) : std::nullopt,
                           rng),
      rng.state()};
  return setup;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

nlohmann::json cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec && !fs::is_directory(out_dir))
    fail(errc::io, "cannot create output directory '" + out_dir + "'");
  const DatasetBundle bundle = build_datasets(cfg);
  nlohmann::json manifest;
  manifest["seed"] = cfg.train.seed;
  manifest["config_hash"] = config_hash(cfg.raw);
  nlohmann::json tasks = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const auto& task = cfg.tasks[i];
    const auto& train = bundle.train[i].data;
    const auto& heldout = bundle.heldout[i];
    nlohmann::json files;
    const std::string base = (fs::path(out_dir) / task.name).string();
    if (task.kind == TaskKind::seq2seq) {
      save_parallel_tsv(train, base + ".train.tsv");
      files["train"] = base + ".train.tsv";
      if (heldout.size() > 0) {
        save_parallel_tsv(heldout, base + ".heldout.tsv");
        files["heldout"] = base + ".heldout.tsv";
        std::ofstream src(base + ".heldout.src.txt", std::ios::binary);
        if (!src) fail(errc::io, "cannot write '" + base + ".heldout.src.txt'");
        for (const auto& ex : heldout.pairs)
          src << join_tokens(ex.source) << '\n';
        files["heldout_sources"] = base + ".heldout.src.txt";
      }
    } else {
      save_nli_tsv(train, base + ".train.tsv");
      files["train"] = base + ".train.tsv";
      if (heldout.size() > 0) {
        save_nli_tsv(heldout, base + ".heldout.tsv");
        files["heldout"] = base + ".heldout.tsv";
      }
    }
    if (bundle.parse_heldout && task.name == bundle.parse_task_name) {
      const std::string meta_path = base + ".meta.tsv";
      std::ofstream meta(meta_path, std::ios::binary);
      if (!meta) fail(errc::io, "cannot write '" + meta_path + "'");
      const auto& parsed = *bundle.parse_heldout;
      for (std::size_t k = 0; k < parsed.data.pairs.size(); ++k) {
        const auto& m = parsed.meta[k];
        meta << join_tokens(parsed.data.pairs[k].source) << '\t'
             << (m.passive ? "passive" : "active") << '\t'
             << (m.past ? "past" : "nonpast") << '\t'
             << parsed.tss_names[static_cast<std::size_t>(m.tss)] << '\n';
      }
      files["probe_meta"] = meta_path;
    }
    tasks.push_back({{"name", task.name},
                     {"kind", task_kind_name(task.kind)},
                     {"weight", task.weight},
                     {"files", files}});
  }
  manifest["tasks"] = tasks;
  const std::string manifest_path =
      (fs::path(out_dir) / "manifest.json").string();
  std::ofstream mf(manifest_path, std::ios::binary);
  if (!mf) fail(errc::io, "cannot write '" + manifest_path + "'");
  mf << manifest.dump(2) << '\n';
  nlohmann::json report = manifest;
  report["manifest"] = manifest_path;
  return report;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

nlohmann::json cmd_train(const RunConfig& cfg, const std::string& out_path,
                         const std::optional<std::string>& resume_from) {
  DatasetBundle bundle = build_datasets(cfg);
  std::optional<Trainer> trainer;
  if (resume_from) {
    LoadedCheckpoint ck = checkpoint_load(*resume_from);
    // the task list must line up with the checkpoint
    const auto& ck_tasks = ck.blob.at("tasks");
    if (ck_tasks.size() != cfg.tasks.size())
      fail(errc::config, "resume: task count differs from checkpoint");
    for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
      if (ck_tasks.at(i).at("name").get<std::string>() != cfg.tasks[i].name)
        fail(errc::config, "resume: task list differs from checkpoint");
    }
    trainer.emplace(resume_trainer(ck, std::move(bundle.train), cfg.train));
  } else {
    TrainSetup setup = prepare_model(cfg, bundle);
    trainer.emplace(std::move(setup.model), std::move(bundle.train),
                    cfg.train);
    trainer->rng().set_state(setup.rng_state);
  }

  const std::string log_path = out_path + ".log";
  try {
    trainer->run([&](std::int64_t) {
      checkpoint_save(*trainer, cfg.raw, out_path);
    });
  } catch (const Error& e) {
    write_loss_log(trainer->log(), log_path,
                   {std::string("aborted: ") + e.what()});
    throw;
  }
  checkpoint_save(*trainer, cfg.raw, out_path);
  write_loss_log(trainer->log(), log_path);

  nlohmann::json report;
  report["checkpoint"] = out_path;
  report["loss_log"] = log_path;
  report["updates"] = trainer->update_count();
  report["config_hash"] = config_hash(cfg.raw);
  report["seed"] = cfg.train.seed;
  if (!trainer->log().empty())
    report["final_loss"] = trainer->log().back().loss;
  return report;
}

// ---------------------------------------------------------------------------
// encode / eval / probe / nn / expand
// ---------------------------------------------------------------------------

Pooling resolve_pooling_strict(const std::string& name) {
  if (name == "auto")
    fail(errc::config,
         "pooling 'auto' needs labeled data; it is only available for "
         "'eval transfer'");
  return pooling_from_name(name);
}

namespace {

struct LabeledRows {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> raw_labels;
  std::vector<std::int64_t> labels;
  std::vector<std::string> class_names;
};

std::vector<std::vector<std::string>> read_tsv_rows(const std::string& path,
                                                    std::size_t min_fields) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() < min_fields)
      fail(errc::format, path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(min_fields) + " fields, got " +
                             std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) fail(errc::input, path + ": no data rows");
  return rows;
}

LabeledRows read_labeled(const std::string& path) {
  LabeledRows out;
  for (const auto& fields : read_tsv_rows(path, 2)) {
    auto toks = tokenize(fields[0]);
    if (toks.empty()) fail(errc::format, path + ": empty sentence");
    out.sentences.push_back(std::move(toks));
    out.raw_labels.push_back(fields[1]);
  }
  std::vector<std::string> classes = out.raw_labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  out.class_names = classes;
  for (const auto& l : out.raw_labels)
    out.labels.push_back(static_cast<std::int64_t>(
        std::lower_bound(classes.begin(), classes.end(), l) -
        classes.begin()));
  return out;
}

std::uint64_t effective_seed(const LoadedCheckpoint& ck,
                             std::optional<std::uint64_t> seed_override) {
  if (seed_override) return *seed_override;
  if (ck.run_config.contains("train") &&
      ck.run_config.at("train").contains("seed"))
    return ck.run_config.at("train").at("seed").get<std::uint64_t>();
  return 42;
}

EvalConfig eval_config_of(const LoadedCheckpoint& ck) {
  if (!ck.run_config.is_object() || ck.run_config.empty()) return EvalConfig{};
  return parse_run_config(ck.run_config).eval;
}

nlohmann::json base_report(const LoadedCheckpoint& ck, std::uint64_t seed) {
  nlohmann::json r;
  r["config_hash"] = config_hash(ck.run_config);
  r["seed"] = seed;
  return r;
}

}  // namespace

nlohmann::json cmd_encode(const std::string& checkpoint_path,
                          const std::string& input_path,
                          const std::string& pooling,
                          const std::string& out_path) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const Pooling p = resolve_pooling_strict(pooling);
  const auto sentences = load_lines(input_path);
  if (sentences.empty()) fail(errc::input, input_path + ": no sentences");
  const auto reps = encode_corpus(ck.model, sentences, p, 32,
                                  config_hash(ck.run_config));
  save_representations(reps, out_path);
  nlohmann::json report = base_report(ck, effective_seed(ck, std::nullopt));
  report["n"] = reps.n();
  report["d"] = reps.dim();
  report["pooling"] = reps.pooling;
  report["out"] = out_path;
  return report;
}

nlohmann::json cmd_eval_transfer(const std::string& checkpoint_path,
                                 const std::string& data_path,
                                 const std::string& pooling,
                                 std::optional<std::uint64_t> seed_override) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const LabeledRows data = read_labeled(data_path);
  const EvalConfig ecfg = eval_config_of(ck);
  const std::uint64_t seed = effective_seed(ck, seed_override);
  const std::int64_t classes =
      static_cast<std::int64_t>(data.class_names.size());

  Pooling p = Pooling::last;
  nlohmann::json pooling_report;
  if (pooling == "auto") {
    const auto choice =
        select_pooling(ck.model, data.sentences, data.labels, classes, seed);
    p = choice.strategy;
    pooling_report = {{"accuracy_last", choice.accuracy_last},
                      {"accuracy_max", choice.accuracy_max}};
  } else {
    p = pooling_from_name(pooling);
  }
  const auto reps = encode_corpus(ck.model, data.sentences, p);
  const auto result =
      logreg_cv_eval(reps.values, data.labels, ecfg.folds, ecfg.l2_grid, seed);
  nlohmann::json report = base_report(ck, seed);
  report["task"] = "transfer";
  report["pooling"] = pooling_name(p);
  if (!pooling_report.is_null()) report["pooling_selection"] = pooling_report;
  report["classes"] = classes;
  report["folds"] = ecfg.folds;
  report["best_l2"] = result.best_l2;
  report["cv_accuracy"] = result.cv_accuracy;
  report["test_accuracy"] = result.test_accuracy;
  return report;
}

nlohmann::json cmd_eval_sts(const std::string& checkpoint_path,
                            const std::string& data_path,
                            const std::string& pooling) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const Pooling p = resolve_pooling_strict(pooling);
  std::vector<std::vector<std::string>> left, right;
  std::vector<double> gold;
  for (const auto& fields : read_tsv_rows(data_path, 3)) {
    left.push_back(tokenize(fields[0]));
    right.push_back(tokenize(fields[1]));
    try {
      gold.push_back(std::stod(fields[2]));
    } catch (const std::exception&) {
      fail(errc::format, data_path + ": bad gold score '" + fields[2] + "'");
    }
  }
  const auto u = encode_corpus(ck.model, left, p);
  const auto v = encode_corpus(ck.model, right, p);
  const auto result = cosine_sts(u.values, v.values, gold);
  nlohmann::json report = base_report(ck, effective_seed(ck, std::nullopt));
  report["task"] = "sts";
  report["pooling"] = pooling_name(p);
  report["n"] = gold.size();
  report["pearson"] = result.pearson;
  report["zero_vector_pairs"] = result.zero_vector_pairs;
  return report;
}

nlohmann::json cmd_eval_pair(const std::string& checkpoint_path,
                             const std::string& data_path,
                             const std::string& pooling,
                             std::optional<std::uint64_t> seed_override) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const Pooling p = resolve_pooling_strict(pooling);
  const std::uint64_t seed = effective_seed(ck, seed_override);
  std::vector<std::vector<std::string>> left, right;
  std::vector<std::string> raw_labels;
  for (const auto& fields : read_tsv_rows(data_path, 3)) {
    left.push_back(tokenize(fields[0]));
    right.push_back(tokenize(fields[1]));
    raw_labels.push_back(fields[2]);
  }
  std::vector<std::string> classes = raw_labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<std::int64_t> labels;
  for (const auto& l : raw_labels)
    labels.push_back(static_cast<std::int64_t>(
        std::lower_bound(classes.begin(), classes.end(), l) -
        classes.begin()));
  const auto u = encode_corpus(ck.model, left, p);
  const auto v = encode_corpus(ck.model, right, p);
  PairEvalConfig pcfg;
  pcfg.seed = seed;
  const double acc = mlp_pair_eval(
      u, v, labels, static_cast<std::int64_t>(classes.size()), pcfg);
  nlohmann::json report = base_report(ck, seed);
  report["task"] = "pair";
  report["pooling"] = pooling_name(p);
  report["classes"] = classes.size();
  report["accuracy"] = acc;
  return report;
}

nlohmann::json cmd_probe(const std::string& checkpoint_path,
                         const std::string& kind, const std::string& data_path,
                         const std::string& pooling,
                         std::optional<std::uint64_t> seed_override,
                         std::int64_t length_bins) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const ProbeKind probe_kind = probe_kind_from_name(kind);
  const Pooling p = resolve_pooling_strict(pooling);
  const std::uint64_t seed = effective_seed(ck, seed_override);

  ProbeCorpus corpus;
  const bool needs_meta = probe_kind == ProbeKind::passive ||
                          probe_kind == ProbeKind::tense ||
                          probe_kind == ProbeKind::tss;
  const auto rows = read_tsv_rows(data_path, needs_meta ? 4 : 1);
  std::vector<std::string> tss_raw;
  for (const auto& fields : rows) {
    auto toks = tokenize(fields[0]);
    if (toks.empty()) fail(errc::format, data_path + ": empty sentence");
    corpus.sentences.push_back(std::move(toks));
    if (needs_meta) tss_raw.push_back(fields[3]);
  }
  if (needs_meta) {
    std::vector<std::string> tss_classes = tss_raw;
    std::sort(tss_classes.begin(), tss_classes.end());
    tss_classes.erase(std::unique(tss_classes.begin(), tss_classes.end()),
                      tss_classes.end());
    corpus.tss_names = tss_classes;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ParseMeta m;
      const std::string& voice = rows[i][1];
      const std::string& tense = rows[i][2];
      if (voice != "active" && voice != "passive")
        fail(errc::format, data_path + ": voice must be active/passive, got '" +
                               voice + "'");
      if (tense != "past" && tense != "nonpast")
        fail(errc::format, data_path + ": tense must be past/nonpast, got '" +
                               tense + "'");
      m.passive = voice == "passive";
      m.past = tense == "past";
      m.tss = static_cast<std::int64_t>(
          std::lower_bound(tss_classes.begin(), tss_classes.end(),
                           tss_raw[i]) -
          tss_classes.begin());
      m.length = static_cast<std::int64_t>(corpus.sentences[i].size());
      corpus.meta.push_back(m);
    }
  }

  const auto reps = encode_corpus(ck.model, corpus.sentences, p);
  const auto probe = make_probe_dataset(probe_kind, corpus, reps, &ck.model,
                                        length_bins, seed);
  const auto result =
      run_probe(probe, default_probe_classifier(probe_kind), seed);
  nlohmann::json report = base_report(ck, seed);
  report["task"] = std::string("probe-") + probe_kind_name(probe_kind);
  report["pooling"] = pooling_name(p);
  report["classes"] = probe.classes;
  report["test_size"] = result.test_size;
  // probe scores are reported in percentage points
  report["accuracy"] = 100.0 * result.accuracy;
  report["baseline"] = 100.0 * result.baseline;
  if (probe_kind == ProbeKind::length) report["bin_edges"] = probe.bin_edges;
  return report;
}

nlohmann::json cmd_nn(const std::string& checkpoint_path,
                      const std::string& corpus_path, const std::string& query,
                      std::int64_t k, const std::string& pooling) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const Pooling p = resolve_pooling_strict(pooling);
  const auto sentences = load_lines(corpus_path);
  if (sentences.empty()) fail(errc::input, corpus_path + ": no sentences");
  auto query_tokens = tokenize(query);
  if (query_tokens.empty()) fail(errc::input, "empty query");
  const auto reps = encode_corpus(ck.model, sentences, p);
  const auto query_rep = encode_corpus(ck.model, {query_tokens}, p);
  const auto hits = nearest_neighbors(reps.values, query_rep.values,
                                      std::min<std::int64_t>(k, reps.n()));
  nlohmann::json report = base_report(ck, effective_seed(ck, std::nullopt));
  report["task"] = "nn";
  report["pooling"] = pooling_name(p);
  report["query"] = query;
  report["k"] = k;
  nlohmann::json neighbors = nlohmann::json::array();
  for (auto idx : hits) {
    neighbors.push_back(
        {{"index", idx},
         {"cosine", cosine(reps.values, idx, query_rep.values, 0)},
         {"sentence",
          join_tokens(sentences[static_cast<std::size_t>(idx)])}});
  }
  report["neighbors"] = neighbors;
  return report;
}

nlohmann::json cmd_expand_vocab(const std::string& checkpoint_path,
                                const std::string& pretrained_path,
                                const std::string& out_path) {
  const LoadedCheckpoint ck = checkpoint_load(checkpoint_path);
  const auto pretrained = load_word_vectors(pretrained_path);
  const auto result =
      expand_vocab(pretrained, ck.model.source_vocab.tokens(),
                   ck.model.encoder.embedding);
  save_word_vectors(result.table, out_path);
  nlohmann::json report = base_report(ck, effective_seed(ck, std::nullopt));
  report["task"] = "expand-vocab";
  report["shared_tokens"] = result.shared;
  report["residual"] = result.residual;
  report["tokens"] = result.table.tokens.size();
  report["dim"] = result.table.vectors.cols();
  report["out"] = out_path;
  return report;
}

nlohmann::json cmd_grad_check(const RunConfig& cfg) {
  DatasetBundle bundle = build_datasets(cfg);
  TrainSetup setup = prepare_model(cfg, bundle);
  constexpr double kEps = 1e-5;
  constexpr double kTol = 1e-4;
  constexpr std::int64_t kBatch = 2;
  const auto report = grad_check_model(setup.model, bundle.train, kBatch, kEps,
                                       kTol, cfg.train.seed);
  nlohmann::json out;
  out["task"] = "grad-check";
  out["config_hash"] = config_hash(cfg.raw);
  out["seed"] = cfg.train.seed;
  out["eps"] = kEps;
  out["tol"] = kTol;
  out["batch"] = kBatch;
  out["pass"] = report.pass;
  double worst = 0.0;
  std::string worst_name;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : report.entries) {
    tensors.push_back({{"name", e.name},
                       {"max_rel_err", e.max_rel_err},
                       {"pass", e.pass}});
    if (e.max_rel_err >= worst) {
      worst = e.max_rel_err;
      worst_name = e.name;
    }
  }
  out["tensors"] = tensors;
  out["worst"] = {{"name", worst_name}, {"max_rel_err", worst}};
  return out;
}

}  // namespace mtse
