#include "mtse/model.hpp"

#include "mtse/errors.hpp"

namespace mtse {

DecoderSlot& MultiTaskModel::decoder(const std::string& task_name) {
  for (auto& d : decoders)
    if (d.task_name == task_name) return d;
  fail(errc::config, "model has no decoder for task '" + task_name + "'");
}

const DecoderSlot& MultiTaskModel::decoder(const std::string& task_name) const {
  for (const auto& d : decoders)
    if (d.task_name == task_name) return d;
  fail(errc::config, "model has no decoder for task '" + task_name + "'");
}

namespace {

template <typename Model, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> enumerate(Model& m) {
  std::vector<std::pair<std::string, TensorPtr>> out;
  auto push = [&out](const std::string& name, TensorPtr t) {
    out.emplace_back(name, t);
  };
  push("encoder.embedding", &m.encoder.embedding);
  for (std::size_t l = 0; l < m.encoder.layers.size(); ++l) {
    const std::string lp = "encoder.l" + std::to_string(l);
    auto cell = [&](auto& c, const std::string& dp) {
      push(dp + ".w_reset", &c.w_reset);
      push(dp + ".u_reset", &c.u_reset);
      push(dp + ".b_reset", &c.b_reset);
      push(dp + ".w_update", &c.w_update);
      push(dp + ".u_update", &c.u_update);
      push(dp + ".b_update", &c.b_update);
      push(dp + ".w_cand", &c.w_cand);
      push(dp + ".u_cand", &c.u_cand);
      push(dp + ".b_cand", &c.b_cand);
    };
    cell(m.encoder.layers[l].fwd, lp + ".fwd");
    cell(m.encoder.layers[l].bwd, lp + ".bwd");
  }
  for (auto& slot : m.decoders) {
    const std::string dp = "dec." + slot.task_name;
    auto& d = slot.params;
    push(dp + ".embedding", &d.embedding);
    push(dp + ".w_reset", &d.w_reset);
    push(dp + ".u_reset", &d.u_reset);
    push(dp + ".c_reset", &d.c_reset);
    push(dp + ".b_reset", &d.b_reset);
    push(dp + ".w_update", &d.w_update);
    push(dp + ".u_update", &d.u_update);
    push(dp + ".c_update", &d.c_update);
    push(dp + ".b_update", &d.b_update);
    push(dp + ".w_cand", &d.w_cand);
    push(dp + ".u_cand", &d.u_cand);
    push(dp + ".c_cand", &d.c_cand);
    push(dp + ".b_cand", &d.b_cand);
    push(dp + ".w_init", &d.w_init);
    push(dp + ".b_init", &d.b_init);
    push(dp + ".w_out", &d.w_out);
    push(dp + ".b_out", &d.b_out);
  }
  if (m.nli) {
    for (std::size_t l = 0; l < m.nli->layers.size(); ++l) {
      const std::string p = "nli.l" + std::to_string(l);
      push(p + ".weight", &m.nli->layers[l].weight);
      push(p + ".bias", &m.nli->layers[l].bias);
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> MultiTaskModel::named_params() {
  return enumerate<MultiTaskModel, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>>
MultiTaskModel::named_params() const {
  return enumerate<const MultiTaskModel, const Tensor*>(*this);
}

MultiTaskModel MultiTaskModel::init(
    const ModelDims& dims, Vocabulary source_vocab,
    const std::vector<std::pair<std::string, Vocabulary>>& decoder_specs,
    const std::optional<NliHeadConfig>& nli_cfg, Rng& rng) {
  MultiTaskModel m;
  m.dims = dims;
  m.source_vocab = std::move(source_vocab);
  m.encoder = BiEncoderParams::init(m.source_vocab.size(), dims.emb_dim,
                                    dims.h_enc, dims.layers, rng);
  const std::int64_t cond_dim = m.encoder.rep_dim();
  for (const auto& [name, vocab] : decoder_specs) {
    DecoderSlot slot;
    slot.task_name = name;
    slot.vocab = vocab;
    slot.params = CondGruParams::init(vocab.size(), dims.emb_dim, dims.h_dec,
                                      cond_dim, rng);
    m.decoders.push_back(std::move(slot));
  }
  if (nli_cfg) {
    std::vector<std::int64_t> mlp_dims{4 * cond_dim};
    for (auto h : nli_cfg->hidden) mlp_dims.push_back(h);
    mlp_dims.push_back(kNliClasses);
    std::vector<double> rates(mlp_dims.size() - 1, 0.0);
    rates[0] = nli_cfg->input_dropout;
    m.nli = MlpParams::init(mlp_dims, rates, rng);
  }
  return m;
}

ModelVars bind_model(Graph& g, ParamBinding& pb, const MultiTaskModel& model) {
  ModelVars v;
  v.encoder = bind_encoder(g, pb, model.encoder);
  for (const auto& slot : model.decoders)
    v.decoders.push_back(
        bind_decoder(g, pb, "dec." + slot.task_name, slot.params));
  if (model.nli) {
    v.nli = bind_mlp(g, pb, "nli", *model.nli);
    v.has_nli = true;
  }
  return v;
}

}  // namespace mtse
