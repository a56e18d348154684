/*
 * mtse — multi-task sentence embeddings, C API.
 *
 * Every function returns 0 (MTSE_OK) on success or a nonzero mtse_status;
 * mtse_last_error() holds a thread-local message for the most recent
 * failure. Strings returned through char** out-parameters are heap
 * allocated and must be released with mtse_string_free().
 */
#ifndef MTSE_H
#define MTSE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtse_status {
  MTSE_OK = 0,
  MTSE_ERR_USAGE = 2,
  MTSE_ERR_CONFIG = 3,
  MTSE_ERR_IO = 4,
  MTSE_ERR_FORMAT = 5,
  MTSE_ERR_INPUT = 6,
  MTSE_ERR_NUMERIC = 7,
  MTSE_ERR_DEGENERATE = 8,
  MTSE_ERR_INTERNAL = 9
} mtse_status;

const char* mtse_status_name(int status);
const char* mtse_last_error(void);
void mtse_string_free(char* s);

/* Opaque handles. */
typedef struct mtse_model mtse_model; /* loaded checkpoint */
typedef struct mtse_reps mtse_reps;   /* representation matrix */

/*
 * Command-style entry points. `config_path` names a run-config JSON file;
 * `seed_override` < 0 keeps the configured seed. Reports are JSON strings.
 */
int mtse_gen_data(const char* config_path, int64_t seed_override,
                  const char* out_dir, char** report_json);

int mtse_train(const char* config_path, int64_t seed_override,
               const char* resume_checkpoint /* NULL for a fresh run */,
               const char* out_path, char** report_json);

int mtse_grad_check(const char* config_path, int64_t seed_override,
                    int* passed, char** report_json);

int mtse_encode_file(const char* checkpoint_path, const char* input_path,
                     const char* pooling, const char* out_path,
                     char** report_json);

/* benchmark: "transfer" | "sts" | "pair" */
int mtse_eval(const char* checkpoint_path, const char* benchmark,
              const char* data_path, const char* pooling,
              int64_t seed_override, char** report_json);

/* kind: "length" | "content" | "order" | "passive" | "tense" | "tss" */
int mtse_probe(const char* checkpoint_path, const char* kind,
               const char* data_path, const char* pooling,
               int64_t seed_override, int64_t length_bins,
               char** report_json);

int mtse_nn(const char* checkpoint_path, const char* corpus_path,
            const char* query, int64_t k, const char* pooling,
            char** report_json);

int mtse_expand_vocab(const char* checkpoint_path,
                      const char* pretrained_path, const char* out_path,
                      char** report_json);

/* Handle-based access for embedding work into other programs. */
int mtse_model_open(const char* checkpoint_path, mtse_model** out);
void mtse_model_close(mtse_model* model);
int64_t mtse_model_rep_dim(const mtse_model* model);

int mtse_model_encode_lines(const mtse_model* model, const char* const* lines,
                            size_t n_lines, const char* pooling,
                            mtse_reps** out);

int mtse_reps_open(const char* path, mtse_reps** out);
int mtse_reps_save(const mtse_reps* reps, const char* path);
int64_t mtse_reps_rows(const mtse_reps* reps);
int64_t mtse_reps_dim(const mtse_reps* reps);
const double* mtse_reps_data(const mtse_reps* reps);
void mtse_reps_close(mtse_reps* reps);

#ifdef __cplusplus
}
#endif

#endif /* MTSE_H */
