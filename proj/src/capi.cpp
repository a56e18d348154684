#include "mtse/mtse.h"

#include <cstring>
#include <new>
#include <string>

#include "mtse/commands.hpp"
#include "mtse/errors.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MTSE_OK;
  } catch (const mtse::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MTSE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MTSE_ERR_INTERNAL;
  }
}

mtse::RunConfig load_config_with_seed(const char* config_path,
                                      int64_t seed_override) {
  if (!config_path) mtse::fail(mtse::errc::usage, "config path is null");
  mtse::RunConfig cfg = mtse::load_run_config(config_path);
  if (seed_override >= 0) {
    nlohmann::json j = cfg.raw;
    j["train"]["seed"] = static_cast<std::uint64_t>(seed_override);
    cfg = mtse::parse_run_config(j);
  }
  return cfg;
}

std::optional<std::uint64_t> opt_seed(int64_t seed_override) {
  if (seed_override < 0) return std::nullopt;
  return static_cast<std::uint64_t>(seed_override);
}

void require(const void* p, const char* what) {
  if (!p) mtse::fail(mtse::errc::usage, std::string(what) + " is null");
}

void emit(char** report_json, const nlohmann::json& report) {
  if (report_json) *report_json = dup_string(report.dump(2));
}

}  // namespace

struct mtse_model {
  mtse::LoadedCheckpoint ck;
};

struct mtse_reps {
  mtse::RepresentationMatrix m;
};

extern "C" {

const char* mtse_status_name(int status) {
  return mtse::errc_name(static_cast<mtse::errc>(status));
}

const char* mtse_last_error(void) { return g_last_error.c_str(); }

void mtse_string_free(char* s) { std::free(s); }

int mtse_gen_data(const char* config_path, int64_t seed_override,
                  const char* out_dir, char** report_json) {
  return guarded([&] {
    require(out_dir, "output directory");
    const auto cfg = load_config_with_seed(config_path, seed_override);
    emit(report_json, mtse::cmd_gen_data(cfg, out_dir));
  });
}

int mtse_train(const char* config_path, int64_t seed_override,
               const char* resume_checkpoint, const char* out_path,
               char** report_json) {
  return guarded([&] {
    require(out_path, "output path");
    const auto cfg = load_config_with_seed(config_path, seed_override);
    std::optional<std::string> resume;
    if (resume_checkpoint) resume = resume_checkpoint;
    emit(report_json, mtse::cmd_train(cfg, out_path, resume));
  });
}

int mtse_grad_check(const char* config_path, int64_t seed_override,
                    int* passed, char** report_json) {
  return guarded([&] {
    const auto cfg = load_config_with_seed(config_path, seed_override);
    const auto report = mtse::cmd_grad_check(cfg);
    if (passed) *passed = report.at("pass").get<bool>() ? 1 : 0;
    emit(report_json, report);
  });
}

int mtse_encode_file(const char* checkpoint_path, const char* input_path,
                     const char* pooling, const char* out_path,
                     char** report_json) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(input_path, "input path");
    require(out_path, "output path");
    emit(report_json,
         mtse::cmd_encode(checkpoint_path, input_path,
                          pooling ? pooling : "last", out_path));
  });
}

int mtse_eval(const char* checkpoint_path, const char* benchmark,
              const char* data_path, const char* pooling,
              int64_t seed_override, char** report_json) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(benchmark, "benchmark");
    require(data_path, "data path");
    const std::string bench = benchmark;
    const std::string pool = pooling ? pooling : "last";
    nlohmann::json report;
    if (bench == "transfer")
      report = mtse::cmd_eval_transfer(checkpoint_path, data_path, pool,
                                       opt_seed(seed_override));
    else if (bench == "sts")
      report = mtse::cmd_eval_sts(checkpoint_path, data_path, pool);
    else if (bench == "pair")
      report = mtse::cmd_eval_pair(checkpoint_path, data_path, pool,
                                   opt_seed(seed_override));
    else
      mtse::fail(mtse::errc::usage,
                 "unknown benchmark '" + bench +
                     "', expected transfer|sts|pair");
    emit(report_json, report);
  });
}

int mtse_probe(const char* checkpoint_path, const char* kind,
               const char* data_path, const char* pooling,
               int64_t seed_override, int64_t length_bins,
               char** report_json) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(kind, "probe kind");
    require(data_path, "data path");
    emit(report_json,
         mtse::cmd_probe(checkpoint_path, kind, data_path,
                         pooling ? pooling : "last", opt_seed(seed_override),
                         length_bins > 0 ? length_bins : 8));
  });
}

int mtse_nn(const char* checkpoint_path, const char* corpus_path,
            const char* query, int64_t k, const char* pooling,
            char** report_json) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(corpus_path, "corpus path");
    require(query, "query");
    if (k < 1) mtse::fail(mtse::errc::usage, "k must be >= 1");
    emit(report_json, mtse::cmd_nn(checkpoint_path, corpus_path, query, k,
                                   pooling ? pooling : "last"));
  });
}

int mtse_expand_vocab(const char* checkpoint_path,
                      const char* pretrained_path, const char* out_path,
                      char** report_json) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(pretrained_path, "pretrained path");
    require(out_path, "output path");
    emit(report_json,
         mtse::cmd_expand_vocab(checkpoint_path, pretrained_path, out_path));
  });
}

int mtse_model_open(const char* checkpoint_path, mtse_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(out, "output handle");
    auto* handle = new mtse_model{mtse::checkpoint_load(checkpoint_path)};
    *out = handle;
  });
}

void mtse_model_close(mtse_model* model) { delete model; }

int64_t mtse_model_rep_dim(const mtse_model* model) {
  return model ? model->ck.model.rep_dim() : -1;
}

int mtse_model_encode_lines(const mtse_model* model, const char* const* lines,
                            size_t n_lines, const char* pooling,
                            mtse_reps** out) {
  return guarded([&] {
    require(model, "model handle");
    require(lines, "lines");
    require(out, "output handle");
    std::vector<std::vector<std::string>> sentences;
    for (size_t i = 0; i < n_lines; ++i) {
      require(lines[i], "line");
      auto toks = mtse::tokenize(lines[i]);
      if (toks.empty())
        mtse::fail(mtse::errc::input,
                   "line " + std::to_string(i) + " is empty");
      sentences.push_back(std::move(toks));
    }
    const auto p = mtse::pooling_from_name(pooling ? pooling : "last");
    auto* handle = new mtse_reps{
        mtse::encode_corpus(model->ck.model, sentences, p)};
    *out = handle;
  });
}

int mtse_reps_open(const char* path, mtse_reps** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output handle");
    *out = new mtse_reps{mtse::load_representations(path)};
  });
}

int mtse_reps_save(const mtse_reps* reps, const char* path) {
  return guarded([&] {
    require(reps, "representations handle");
    require(path, "path");
    mtse::save_representations(reps->m, path);
  });
}

int64_t mtse_reps_rows(const mtse_reps* reps) {
  return reps ? reps->m.n() : -1;
}

int64_t mtse_reps_dim(const mtse_reps* reps) {
  return reps ? reps->m.dim() : -1;
}

const double* mtse_reps_data(const mtse_reps* reps) {
  return reps ? reps->m.values.data() : nullptr;
}

void mtse_reps_close(mtse_reps* reps) { delete reps; }

}  // extern "C"
