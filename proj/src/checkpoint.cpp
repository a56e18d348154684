#include "mtse/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "mtse/errors.hpp"

namespace mtse {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    fail(errc::format, path + ": truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8)
    fail(errc::format, path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void write_record(std::ostream& out, const std::string& name,
                  const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  for (std::int64_t i = 0; i < t.size(); ++i) write_f64(out, t.at(i));
}

Tensor pack_u64s(const std::array<std::uint64_t, 4>& words) {
  Tensor t({4});
  for (int i = 0; i < 4; ++i)
    t.at(i) = std::bit_cast<double>(words[static_cast<std::size_t>(i)]);
  return t;
}

std::array<std::uint64_t, 4> unpack_u64s(const Tensor& t) {
  std::array<std::uint64_t, 4> words{};
  for (int i = 0; i < 4; ++i)
    words[static_cast<std::size_t>(i)] = std::bit_cast<std::uint64_t>(t.at(i));
  return words;
}

nlohmann::json vocab_json(const Vocabulary& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& tok : v.tokens()) arr.push_back(tok);
  return arr;
}

Vocabulary vocab_from_json(const nlohmann::json& arr) {
  std::vector<std::string> tokens;
  for (const auto& t : arr) tokens.push_back(t.get<std::string>());
  return Vocabulary(tokens);
}

}  // namespace

void checkpoint_save(const Trainer& trainer, const nlohmann::json& run_config,
                     const std::string& path) {
  const auto& model = trainer.model();
  nlohmann::json blob;
  blob["model"] = {{"emb_dim", model.dims.emb_dim},
                   {"h_enc", model.dims.h_enc},
                   {"h_dec", model.dims.h_dec},
                   {"layers", model.dims.layers}};
  blob["source_vocab"] = vocab_json(model.source_vocab);
  nlohmann::json decs = nlohmann::json::array();
  for (const auto& d : model.decoders)
    decs.push_back({{"name", d.task_name}, {"vocab", vocab_json(d.vocab)}});
  blob["decoders"] = decs;
  if (model.nli) {
    std::vector<std::int64_t> hidden;
    for (std::size_t l = 0; l + 1 < model.nli->layers.size(); ++l)
      hidden.push_back(model.nli->layers[l].weight.cols());
    blob["nli"] = {{"hidden", hidden},
                   {"dropout", model.nli->dropout}};
  } else {
    blob["nli"] = nullptr;
  }
  const auto& cfg = trainer.config();
  blob["train"] = {{"batch", cfg.batch_size},
                   {"lr", cfg.lr},
                   {"updates", cfg.total_updates},
                   {"nli_every", cfg.nli_every},
                   {"clip", cfg.grad_clip_norm},
                   {"seed", cfg.seed},
                   {"checkpoint_every", cfg.checkpoint_every}};
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : trainer.tasks())
    tasks.push_back({{"name", t.data.name},
                     {"kind", task_kind_name(t.data.kind)},
                     {"weight", t.weight}});
  blob["tasks"] = tasks;
  blob["run_config"] = run_config;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write checkpoint '" + path + "'");
  out.write("MTSE", 4);
  write_u32(out, kCheckpointVersion);
  const std::string blob_str = blob.dump();
  write_u32(out, static_cast<std::uint32_t>(blob_str.size()));
  out.write(blob_str.data(), static_cast<std::streamsize>(blob_str.size()));

  const auto params = trainer.model().named_params();
  for (const auto& [name, tensor] : params) write_record(out, name, *tensor);

  // trainer state under reserved prefixes
  const auto& adam = trainer.adam_states();
  write_record(out, "opt.t",
               Tensor::scalar(static_cast<double>(adam.empty() ? 0
                                                               : adam[0].t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_record(out, "opt.m." + params[i].first, adam[i].m);
    write_record(out, "opt.v." + params[i].first, adam[i].v);
  }
  write_record(out, "state.rng", pack_u64s(trainer.rng().state()));
  write_record(out, "state.update",
               Tensor::scalar(static_cast<double>(trainer.update_count())));
  write_record(out, "state.since_nli",
               Tensor::scalar(static_cast<double>(trainer.since_nli())));
  const auto& streams = trainer.streams();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    Tensor perm({std::max<std::int64_t>(
        1, static_cast<std::int64_t>(streams[i].perm.size()))});
    if (streams[i].perm.empty()) {
      perm.at(0) = -1.0;  // empty-stream sentinel
    } else {
      for (std::size_t k = 0; k < streams[i].perm.size(); ++k)
        perm.at(static_cast<std::int64_t>(k)) =
            static_cast<double>(streams[i].perm[k]);
    }
    write_record(out, "state.stream." + std::to_string(i) + ".perm", perm);
    write_record(out, "state.stream." + std::to_string(i) + ".pos",
                 Tensor::scalar(static_cast<double>(streams[i].pos)));
  }
  if (!out) fail(errc::io, "write failure on checkpoint '" + path + "'");
}

LoadedCheckpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "MTSE", 4) != 0)
    fail(errc::format, path + ": bad magic, expected \"MTSE\"");
  const std::uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion)
    fail(errc::format, path + ": format version " + std::to_string(version) +
                           ", expected " +
                           std::to_string(kCheckpointVersion));
  const std::uint32_t blob_len = read_u32(in, path);
  std::string blob_str(blob_len, '\0');
  in.read(blob_str.data(), blob_len);
  if (in.gcount() != static_cast<std::streamsize>(blob_len))
    fail(errc::format, path + ": truncated checkpoint");
  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(blob_str);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::format, path + ": bad JSON header: " + e.what());
  }

  // read every record
  std::vector<std::pair<std::string, Tensor>> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      fail(errc::format, path + ": truncated checkpoint");
    const std::uint32_t rank = read_u32(in, path);
    std::vector<std::int64_t> dims;
    std::int64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      dims.push_back(static_cast<std::int64_t>(read_u32(in, path)));
      count *= dims.back();
    }
    Tensor t(dims, 0.0);
    for (std::int64_t i = 0; i < count; ++i) t.at(i) = read_f64(in, path);
    records.emplace_back(std::move(name), std::move(t));
  }

  auto find = [&records](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : records)
      if (n == name) return &t;
    return nullptr;
  };

  // rebuild the model shell, then overwrite every parameter
  LoadedCheckpoint ck;
  ck.blob = blob;
  ck.run_config = blob.value("run_config", nlohmann::json::object());
  ModelDims dims;
  dims.emb_dim = blob.at("model").at("emb_dim").get<std::int64_t>();
  dims.h_enc = blob.at("model").at("h_enc").get<std::int64_t>();
  dims.h_dec = blob.at("model").at("h_dec").get<std::int64_t>();
  dims.layers = blob.at("model").at("layers").get<std::int64_t>();
  Vocabulary src = vocab_from_json(blob.at("source_vocab"));
  std::vector<std::pair<std::string, Vocabulary>> dec_specs;
  for (const auto& d : blob.at("decoders"))
    dec_specs.emplace_back(d.at("name").get<std::string>(),
                           vocab_from_json(d.at("vocab")));
  std::optional<NliHeadConfig> nli_cfg;
  std::vector<double> nli_rates;
  if (!blob.at("nli").is_null()) {
    NliHeadConfig c;
    c.hidden = blob.at("nli").at("hidden").get<std::vector<std::int64_t>>();
    nli_rates = blob.at("nli").at("dropout").get<std::vector<double>>();
    c.input_dropout = nli_rates.empty() ? 0.0 : nli_rates[0];
    nli_cfg = c;
  }
  Rng shell_rng(0);
  ck.model = MultiTaskModel::init(dims, std::move(src), dec_specs, nli_cfg,
                                  shell_rng);
  if (ck.model.nli && !nli_rates.empty()) ck.model.nli->dropout = nli_rates;

  for (auto& [name, tensor] : ck.model.named_params()) {
    const Tensor* rec = find(name);
    if (!rec)
      fail(errc::format, path + ": missing parameter record '" + name + "'");
    if (rec->shape() != tensor->shape())
      fail(errc::format, path + ": parameter '" + name + "' has shape " +
                             rec->shape_str() + ", expected " +
                             tensor->shape_str());
    *tensor = *rec;
  }

  if (const Tensor* upd = find("state.update")) {
    ck.has_trainer_state = true;
    ck.update = static_cast<std::int64_t>(upd->at(0));
    if (const Tensor* t = find("state.since_nli"))
      ck.since_nli = static_cast<std::int64_t>(t->at(0));
    if (const Tensor* t = find("opt.t"))
      ck.adam_t = static_cast<std::int64_t>(t->at(0));
    if (const Tensor* t = find("state.rng")) ck.rng_state = unpack_u64s(*t);
    for (const auto& [name, tensor] : records) {
      if (name.rfind("opt.m.", 0) == 0)
        ck.opt_m.emplace_back(name.substr(6), tensor);
      else if (name.rfind("opt.v.", 0) == 0)
        ck.opt_v.emplace_back(name.substr(6), tensor);
    }
    for (std::size_t i = 0;; ++i) {
      const Tensor* perm =
          find("state.stream." + std::to_string(i) + ".perm");
      const Tensor* pos = find("state.stream." + std::to_string(i) + ".pos");
      if (!perm || !pos) break;
      TaskStream s;
      if (!(perm->size() == 1 && perm->at(0) < 0)) {
        for (std::int64_t k = 0; k < perm->size(); ++k)
          s.perm.push_back(static_cast<std::int64_t>(perm->at(k)));
      }
      s.pos = static_cast<std::int64_t>(pos->at(0));
      ck.streams.push_back(std::move(s));
    }
  }
  return ck;
}

Trainer resume_trainer(const LoadedCheckpoint& ck, std::vector<TrainTask> tasks,
                       const TrainConfig& config) {
  if (!ck.has_trainer_state)
    fail(errc::format, "checkpoint carries no trainer state to resume from");
  Trainer trainer(ck.model, std::move(tasks), config);
  trainer.rng().set_state(ck.rng_state);
  trainer.update_counter() = ck.update;
  trainer.since_nli_counter() = ck.since_nli;
  auto params = trainer.model().named_params();
  auto& adam = trainer.adam_states();
  auto lookup = [](const std::vector<std::pair<std::string, Tensor>>& list,
                   const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : list)
      if (n == name) return &t;
    return nullptr;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = lookup(ck.opt_m, params[i].first);
    const Tensor* v = lookup(ck.opt_v, params[i].first);
    if (!m || !v)
      fail(errc::format, "checkpoint misses optimizer state for '" +
                             params[i].first + "'");
    adam[i].m = *m;
    adam[i].v = *v;
    adam[i].t = ck.adam_t;
  }
  if (ck.streams.size() != trainer.streams().size())
    fail(errc::format, "checkpoint stream count does not match task count");
  trainer.streams() = ck.streams;
  return trainer;
}

void write_loss_log(const std::vector<LossLogEntry>& log,
                    const std::string& path,
                    const std::vector<std::string>& comment_lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write loss log '" + path + "'");
  char buf[64];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g", e.loss);
    out << e.update << '\t' << e.task << '\t' << buf << '\n';
  }
  for (const auto& line : comment_lines) out << "# " << line << '\n';
}

}  // namespace mtse
