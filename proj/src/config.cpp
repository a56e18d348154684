#include "mtse/config.hpp"

#include <fstream>
#include <set>

#include "mtse/errors.hpp"

namespace mtse {

namespace {

void expect_keys(const nlohmann::json& obj,
                 const std::set<std::string>& allowed,
                 const std::string& context) {
  if (!obj.is_object())
    fail(errc::config, context + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      fail(errc::config, "unknown key '" + key + "' in " + context);
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(errc::config, "key '" + key + "' has the wrong type");
  }
}

SyntheticSpec parse_synthetic(const nlohmann::json& j,
                              const std::string& context) {
  expect_keys(j,
              {"generator", "seed", "n", "n_heldout", "vocab_size", "min_len",
               "max_len", "reverse", "states", "n_books", "heldout_books",
               "sentences_per_book", "stay_prob", "noise", "direction"},
              context);
  SyntheticSpec s;
  if (!j.contains("generator"))
    fail(errc::config, context + " misses 'generator'");
  s.generator = j.at("generator").get<std::string>();
  if (s.generator != "cipher" && s.generator != "books" &&
      s.generator != "pcfg" && s.generator != "nli")
    fail(errc::config, context + ": unknown generator '" + s.generator + "'");
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  s.n = get_or<std::int64_t>(j, "n", s.n);
  s.n_heldout = get_or<std::int64_t>(j, "n_heldout", s.n_heldout);
  s.vocab_size = get_or<std::int64_t>(j, "vocab_size", s.vocab_size);
  s.min_len = get_or<std::int64_t>(j, "min_len", s.min_len);
  s.max_len = get_or<std::int64_t>(j, "max_len", s.max_len);
  s.reverse = get_or<bool>(j, "reverse", s.reverse);
  s.states = get_or<std::int64_t>(j, "states", s.states);
  s.n_books = get_or<std::int64_t>(j, "n_books", s.n_books);
  s.heldout_books = get_or<std::int64_t>(j, "heldout_books", s.heldout_books);
  s.sentences_per_book =
      get_or<std::int64_t>(j, "sentences_per_book", s.sentences_per_book);
  s.stay_prob = get_or<double>(j, "stay_prob", s.stay_prob);
  s.noise = get_or<double>(j, "noise", s.noise);
  s.direction = get_or<std::string>(j, "direction", s.direction);
  if (s.direction != "next" && s.direction != "prev")
    fail(errc::config, context + ": direction must be 'next' or 'prev'");
  return s;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  expect_keys(j, {"model", "train", "nli_head", "tasks", "eval"},
              "run config");
  RunConfig cfg;
  cfg.raw = j;

  const auto model = j.value("model", nlohmann::json::object());
  expect_keys(model, {"emb_dim", "H_enc", "H_dec", "layers"}, "model");
  cfg.model.emb_dim = get_or<std::int64_t>(model, "emb_dim", 32);
  cfg.model.h_enc = get_or<std::int64_t>(model, "H_enc", 64);
  cfg.model.h_dec = get_or<std::int64_t>(model, "H_dec", 64);
  cfg.model.layers = get_or<std::int64_t>(model, "layers", 1);
  if (cfg.model.emb_dim < 1 || cfg.model.h_enc < 1 || cfg.model.h_dec < 1)
    fail(errc::config, "model dimensions must be positive");
  if (cfg.model.layers < 1 || cfg.model.layers > 2)
    fail(errc::config, "model.layers must be 1 or 2");

  const auto train = j.value("train", nlohmann::json::object());
  expect_keys(train,
              {"batch", "lr", "updates", "nli_every", "clip", "seed",
               "checkpoint_every"},
              "train");
  cfg.train.batch_size = get_or<std::int64_t>(train, "batch", 16);
  cfg.train.lr = get_or<double>(train, "lr", 0.002);
  cfg.train.total_updates = get_or<std::int64_t>(train, "updates", 1000);
  cfg.train.nli_every = get_or<std::int64_t>(train, "nli_every", 10);
  cfg.train.grad_clip_norm = get_or<double>(train, "clip", 5.0);
  cfg.train.seed = get_or<std::uint64_t>(train, "seed", 42);
  cfg.train.checkpoint_every =
      get_or<std::int64_t>(train, "checkpoint_every", 0);
  if (cfg.train.batch_size < 1) fail(errc::config, "train.batch must be >= 1");
  if (cfg.train.nli_every < 1)
    fail(errc::config, "train.nli_every must be >= 1");
  if (cfg.train.total_updates < 0)
    fail(errc::config, "train.updates must be >= 0");

  const auto nli_head = j.value("nli_head", nlohmann::json::object());
  expect_keys(nli_head, {"hidden", "dropout"}, "nli_head");
  cfg.nli_head.hidden = get_or<std::vector<std::int64_t>>(
      nli_head, "hidden", {64});
  cfg.nli_head.input_dropout = get_or<double>(nli_head, "dropout", 0.3);
  if (cfg.nli_head.input_dropout < 0.0 || cfg.nli_head.input_dropout >= 1.0)
    fail(errc::config, "nli_head.dropout must lie in [0,1)");

  if (j.contains("tasks")) {
    if (!j.at("tasks").is_array())
      fail(errc::config, "tasks must be an array");
    for (std::size_t i = 0; i < j.at("tasks").size(); ++i) {
      const auto& tj = j.at("tasks").at(i);
      const std::string context = "tasks[" + std::to_string(i) + "]";
      expect_keys(tj, {"name", "kind", "weight", "duplication", "source"},
                  context);
      TaskConfig task;
      if (!tj.contains("name"))
        fail(errc::config, context + " misses 'name'");
      task.name = tj.at("name").get<std::string>();
      task.kind = task_kind_from_name(
          get_or<std::string>(tj, "kind", "seq2seq"));
      task.weight = get_or<double>(tj, "weight", 1.0);
      task.duplication = get_or<std::int64_t>(tj, "duplication", 1);
      if (task.duplication < 1)
        fail(errc::config, context + ": duplication must be >= 1");
      if (!tj.contains("source"))
        fail(errc::config, context + " misses 'source'");
      const auto& src = tj.at("source");
      expect_keys(src, {"synthetic", "files"}, context + ".source");
      if (src.contains("synthetic") == src.contains("files"))
        fail(errc::config,
             context + ".source needs exactly one of 'synthetic'/'files'");
      if (src.contains("synthetic"))
        task.synthetic = parse_synthetic(src.at("synthetic"),
                                         context + ".source.synthetic");
      if (src.contains("files")) {
        expect_keys(src.at("files"), {"train", "heldout"},
                    context + ".source.files");
        TaskFileSource fs;
        if (!src.at("files").contains("train"))
          fail(errc::config, context + ".source.files misses 'train'");
        fs.train = src.at("files").at("train").get<std::string>();
        fs.heldout = get_or<std::string>(src.at("files"), "heldout", "");
        task.files = fs;
      }
      for (const auto& other : cfg.tasks)
        if (other.name == task.name)
          fail(errc::config, "duplicate task name '" + task.name + "'");
      cfg.tasks.push_back(std::move(task));
    }
  }

  const auto eval = j.value("eval", nlohmann::json::object());
  expect_keys(eval, {"pooling", "folds", "l2_grid"}, "eval");
  cfg.eval.pooling = get_or<std::string>(eval, "pooling", "last");
  if (cfg.eval.pooling != "last" && cfg.eval.pooling != "max" &&
      cfg.eval.pooling != "auto")
    fail(errc::config, "eval.pooling must be last, max or auto");
  cfg.eval.folds = get_or<std::int64_t>(eval, "folds", 10);
  cfg.eval.l2_grid =
      get_or<std::vector<double>>(eval, "l2_grid", cfg.eval.l2_grid);
  if (cfg.eval.folds < 2) fail(errc::config, "eval.folds must be >= 2");
  if (cfg.eval.l2_grid.empty())
    fail(errc::config, "eval.l2_grid must not be empty");

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config, path + ": " + e.what());
  }
  return parse_run_config(j);
}

std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t task_seed(const RunConfig& cfg, const TaskConfig& task) {
  if (task.synthetic && task.synthetic->seed) return *task.synthetic->seed;
  std::uint64_t h = cfg.train.seed ^ 0x7461736bULL;
  for (unsigned char c : task.name) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(h);
}

std::uint64_t heldout_seed(std::uint64_t seed) {
  std::uint64_t s = seed ^ 0x48454c44ULL;
  return splitmix64(s);
}

}  // namespace mtse
