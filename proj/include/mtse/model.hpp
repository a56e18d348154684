#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtse/decoder.hpp"
#include "mtse/encoder.hpp"
#include "mtse/nli.hpp"
#include "mtse/vocab.hpp"

namespace mtse {

struct ModelDims {
  std::int64_t emb_dim = 32;
  std::int64_t h_enc = 64;
  std::int64_t h_dec = 64;
  std::int64_t layers = 1;
};

struct DecoderSlot {
  std::string task_name;
  Vocabulary vocab;  // target vocabulary
  CondGruParams params;
};

struct NliHeadConfig {
  std::vector<std::int64_t> hidden = {64};
  double input_dropout = 0.3;
};

// Shared encoder + per-task decoders + optional NLI head. Parameters are
// enumerated in one fixed order; the trainer, optimizer state, checkpoints
// and gradient checks all rely on it.
struct MultiTaskModel {
  ModelDims dims;
  Vocabulary source_vocab;
  BiEncoderParams encoder;
  std::vector<DecoderSlot> decoders;
  std::optional<MlpParams> nli;

  std::int64_t rep_dim() const { return encoder.rep_dim(); }

  DecoderSlot& decoder(const std::string& task_name);
  const DecoderSlot& decoder(const std::string& task_name) const;

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;

  static MultiTaskModel init(
      const ModelDims& dims, Vocabulary source_vocab,
      const std::vector<std::pair<std::string, Vocabulary>>& decoder_specs,
      const std::optional<NliHeadConfig>& nli_cfg, Rng& rng);
};

struct ModelVars {
  BiEncoderVars encoder;
  std::vector<CondGruVars> decoders;  // aligned with model.decoders
  MlpVars nli;
  bool has_nli = false;
};

ModelVars bind_model(Graph& g, ParamBinding& pb, const MultiTaskModel& model);

}  // namespace mtse
