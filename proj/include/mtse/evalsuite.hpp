#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtse/model.hpp"
#include "mtse/synthgen.hpp"

namespace mtse {

// Frozen sentence representations with provenance.
struct RepresentationMatrix {
  Tensor values;  // n x d
  std::string pooling = "last";
  std::string model_id;

  std::int64_t n() const { return values.rows(); }
  std::int64_t dim() const { return values.cols(); }
};

// Encodes a corpus without touching model parameters. Unknown tokens map to
// <unk>; batch size never changes the result.
RepresentationMatrix encode_corpus(
    const MultiTaskModel& model,
    const std::vector<std::vector<std::string>>& sentences, Pooling pooling,
    std::int64_t batch_size = 32, const std::string& model_id = "");

RepresentationMatrix concat_representations(
    const std::vector<const RepresentationMatrix*>& reps);

// Text header "MTSE-REP v1 n=<n> d=<d> pooling=<tag>" followed by n*d
// little-endian float64 values.
void save_representations(const RepresentationMatrix& reps,
                          const std::string& path);
RepresentationMatrix load_representations(const std::string& path);

// ---------------------------------------------------------------------------
// classifiers
// ---------------------------------------------------------------------------

struct LogRegModel {
  Tensor w;  // d x c
  Tensor b;  // c
};

// Multinomial logistic regression by full-batch gradient descent with a
// backtracking line search; stops after max_iter or when the gradient norm
// drops under tol. The l2 penalty applies to weights, not biases.
LogRegModel train_logreg(const Tensor& x, const std::vector<std::int64_t>& y,
                         std::int64_t classes, double l2,
                         std::int64_t max_iter = 500, double tol = 1e-6);

std::vector<std::int64_t> logreg_predict(const LogRegModel& m,
                                         const Tensor& x);
double accuracy(const std::vector<std::int64_t>& pred,
                const std::vector<std::int64_t>& gold);

struct CvEvalResult {
  double best_l2 = 0.0;
  double cv_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// 10-fold cross-validated L2 selection on a seeded 80/20 train/test split;
// folds are contiguous blocks of the shuffled training part, ties go to the
// smaller penalty, and the winning model is refit on all training rows.
CvEvalResult logreg_cv_eval(const Tensor& reps,
                            const std::vector<std::int64_t>& labels,
                            std::int64_t folds, std::vector<double> l2_grid,
                            std::uint64_t seed, double test_fraction = 0.2);

// Small tanh MLP classifier trained with full-batch Adam; deterministic
// under seed.
struct MlpClassifierConfig {
  std::vector<std::int64_t> hidden = {64};
  std::int64_t iters = 200;
  double lr = 0.01;
};

MlpParams train_mlp_classifier(const Tensor& x,
                               const std::vector<std::int64_t>& y,
                               std::int64_t classes,
                               const MlpClassifierConfig& cfg,
                               std::uint64_t seed);
std::vector<std::int64_t> mlp_predict(const MlpParams& mlp, const Tensor& x);

// Pair classification on frozen representations: pair_features -> MLP,
// 60/20/20 split, best-validation weights scored on test.
struct PairEvalConfig {
  std::vector<std::int64_t> hidden = {64, 64};
  std::int64_t epochs = 60;
  double lr = 0.005;
  std::uint64_t seed = 0;
};

double mlp_pair_eval(const RepresentationMatrix& u,
                     const RepresentationMatrix& v,
                     const std::vector<std::int64_t>& labels,
                     std::int64_t classes, const PairEvalConfig& cfg);

// ---------------------------------------------------------------------------
// probing
// ---------------------------------------------------------------------------

enum class ProbeKind { length, content, order, passive, tense, tss };

ProbeKind probe_kind_from_name(const std::string& name);
const char* probe_kind_name(ProbeKind k);

struct ProbeCorpus {
  std::vector<std::vector<std::string>> sentences;
  std::vector<ParseMeta> meta;         // required for passive/tense/tss
  std::vector<std::string> tss_names;  // labels the tss classes
};

struct ProbeDataset {
  Tensor features;
  std::vector<std::int64_t> labels;
  std::int64_t classes = 0;
  std::string kind;
  std::vector<std::int64_t> group;   // split-atomic groups (pair probes)
  std::vector<double> bin_edges;     // recorded for the length probe
};

// word_source supplies embeddings for content/order probes (the model's
// encoder table); may be null for other kinds.
ProbeDataset make_probe_dataset(ProbeKind kind, const ProbeCorpus& corpus,
                                const RepresentationMatrix& reps,
                                const MultiTaskModel* word_source,
                                std::int64_t length_bins, std::uint64_t seed);

enum class ProbeClassifier { logreg, mlp };

ProbeClassifier default_probe_classifier(ProbeKind kind);

struct ProbeResult {
  double accuracy = 0.0;   // fraction in [0,1]
  double baseline = 0.0;   // majority class on the same test split
  std::int64_t test_size = 0;
};

ProbeResult run_probe(const ProbeDataset& probe, ProbeClassifier classifier,
                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// similarity / retrieval
// ---------------------------------------------------------------------------

double cosine(const Tensor& a, std::int64_t row_a, const Tensor& b,
              std::int64_t row_b);  // zero vectors give 0

struct StsResult {
  double pearson = 0.0;
  std::int64_t zero_vector_pairs = 0;  // flagged, never fatal
};

StsResult cosine_sts(const Tensor& u, const Tensor& v,
                     const std::vector<double>& gold);

// Top-k row indices by cosine similarity to the query, ties broken toward
// the lower index; rows exactly equal to the query are excluded.
std::vector<std::int64_t> nearest_neighbors(const Tensor& matrix,
                                            const Tensor& query,
                                            std::int64_t k);

// ---------------------------------------------------------------------------
// vocabulary expansion
// ---------------------------------------------------------------------------

struct PretrainedTable {
  std::vector<std::string> tokens;
  Tensor vectors;  // n x d
};

PretrainedTable load_word_vectors(const std::string& path);
void save_word_vectors(const PretrainedTable& table, const std::string& path);

struct ExpandResult {
  PretrainedTable table;     // every pretrained token, in model space
  double residual = 0.0;     // squared fit error over shared tokens
  std::int64_t shared = 0;
};

// Ridge regression (bias included, unpenalized) from pretrained space into
// the model embedding space, fit on shared tokens via normal equations.
// Shared tokens keep their original model embedding in the output.
ExpandResult expand_vocab(const PretrainedTable& pretrained,
                          const std::vector<std::string>& model_tokens,
                          const Tensor& model_embedding,
                          double lambda = 1e-6);

// ---------------------------------------------------------------------------
// pooling selection (frozen evaluation, both strategies scored with the
// logistic-regression classifier on a seeded 50/50 split; ties -> last)
// ---------------------------------------------------------------------------

struct PoolingChoice {
  Pooling strategy = Pooling::last;
  double accuracy_last = 0.0;
  double accuracy_max = 0.0;
};

PoolingChoice select_pooling(const MultiTaskModel& model,
                             const std::vector<std::vector<std::string>>& sents,
                             const std::vector<std::int64_t>& labels,
                             std::int64_t classes, std::uint64_t seed,
                             double l2 = 0.01);

// Bounded by the MTSE_THREADS environment variable (default 1).
int eval_thread_budget();
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mtse
