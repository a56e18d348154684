// Command-line front end; everything goes through the C API in mtse/mtse.h.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "mtse/mtse.h"

namespace {

int report_error(int status) {
  std::fprintf(stderr, "error: category=%s: %s\n", mtse_status_name(status),
               mtse_last_error());
  return status;
}

int finish(int status, char* report) {
  if (report) {
    std::printf("%s\n", report);
    mtse_string_free(report);
  }
  if (status != MTSE_OK) return report_error(status);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mtse — multi-task sentence representation learning and evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint_path, pooling = "last";
  std::string data_path, kind, query;
  long long seed = -1;
  long long k = 5;
  long long bins = 8;

  auto* gen = app.add_subcommand("gen-data",
                                 "Generate synthetic task corpora and a "
                                 "dataset manifest");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the configured seed");

  auto* train = app.add_subcommand("train",
                                   "Train the multi-task model; writes a "
                                   "checkpoint and a loss log (<out>.log)");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--out", out_path, "Checkpoint output path")->required();
  train->add_option("--seed", seed, "Override the configured seed");
  train->add_option("--checkpoint", checkpoint_path,
                    "Resume from this checkpoint");

  auto* encode = app.add_subcommand(
      "encode", "Encode a line corpus into a representation file");
  encode->add_option("input", data_path, "Input text file (one sentence "
                                         "per line)")
      ->required();
  encode->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  encode->add_option("--out", out_path, "Representation output file")
      ->required();
  encode->add_option("--pooling", pooling, "last|max (default last)");

  auto* eval = app.add_subcommand("eval",
                                  "Frozen-representation evaluation: "
                                  "transfer (text<TAB>label), sts "
                                  "(s1<TAB>s2<TAB>score), pair "
                                  "(s1<TAB>s2<TAB>label)");
  eval->add_option("benchmark", kind, "transfer|sts|pair")->required();
  eval->add_option("data", data_path, "Evaluation data TSV")->required();
  eval->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  eval->add_option("--pooling", pooling,
                   "last|max|auto (auto: transfer only)");
  eval->add_option("--seed", seed, "Override the evaluation seed");

  auto* probe = app.add_subcommand(
      "probe",
      "Representation probing; length/content/order take a line corpus, "
      "passive/tense/tss take text<TAB>voice<TAB>tense<TAB>tss");
  probe->add_option("kind", kind, "length|content|order|passive|tense|tss")
      ->required();
  probe->add_option("data", data_path, "Probe corpus")->required();
  probe->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  probe->add_option("--pooling", pooling, "last|max (default last)");
  probe->add_option("--seed", seed, "Override the probe seed");
  probe->add_option("--bins", bins, "Length probe bin count (default 8)");

  auto* nn = app.add_subcommand("nn",
                                "Nearest neighbors of a query sentence by "
                                "cosine similarity");
  nn->add_option("corpus", data_path, "Corpus file (one sentence per line)")
      ->required();
  nn->add_option("query", query, "Query sentence")->required();
  nn->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  nn->add_option("--k", k, "Neighbor count (default 5)");
  nn->add_option("--pooling", pooling, "last|max (default last)");

  auto* expand = app.add_subcommand(
      "expand-vocab",
      "Map a pretrained word-vector table into the model embedding space");
  expand->add_option("pretrained", data_path,
                     "Pretrained vectors (token v1..vd per line)")
      ->required();
  expand->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  expand->add_option("--out", out_path, "Expanded table output path")
      ->required();

  auto* gradcheck = app.add_subcommand(
      "grad-check",
      "Verify analytic gradients against central finite differences "
      "(eps 1e-5, tol 1e-4, batch 2); exits 1 when the check fails");
  gradcheck->add_option("--config", config_path, "Run config JSON")
      ->required();
  gradcheck->add_option("--seed", seed, "Override the configured seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fprintf(stderr, "error: category=usage: %s\n", e.what());
    return MTSE_ERR_USAGE;
  }

  char* report = nullptr;
  if (gen->parsed())
    return finish(mtse_gen_data(config_path.c_str(), seed, out_path.c_str(),
                                &report),
                  report);
  if (train->parsed())
    return finish(
        mtse_train(config_path.c_str(), seed,
                   checkpoint_path.empty() ? nullptr : checkpoint_path.c_str(),
                   out_path.c_str(), &report),
        report);
  if (encode->parsed())
    return finish(mtse_encode_file(checkpoint_path.c_str(), data_path.c_str(),
                                   pooling.c_str(), out_path.c_str(), &report),
                  report);
  if (eval->parsed())
    return finish(mtse_eval(checkpoint_path.c_str(), kind.c_str(),
                            data_path.c_str(), pooling.c_str(), seed, &report),
                  report);
  if (probe->parsed())
    return finish(mtse_probe(checkpoint_path.c_str(), kind.c_str(),
                             data_path.c_str(), pooling.c_str(), seed, bins,
                             &report),
                  report);
  if (nn->parsed())
    return finish(mtse_nn(checkpoint_path.c_str(), data_path.c_str(),
                          query.c_str(), k, pooling.c_str(), &report),
                  report);
  if (expand->parsed())
    return finish(mtse_expand_vocab(checkpoint_path.c_str(), data_path.c_str(),
                                    out_path.c_str(), &report),
                  report);
  if (gradcheck->parsed()) {
    int passed = 0;
    const int status =
        mtse_grad_check(config_path.c_str(), seed, &passed, &report);
    const int code = finish(status, report);
    if (code != 0) return code;
    if (!passed) {
      std::fprintf(stderr, "error: category=checkfail: gradient check "
                           "failed\n");
      return 1;
    }
    return 0;
  }
  std::fprintf(stderr, "error: category=usage: no subcommand\n");
  return MTSE_ERR_USAGE;
}
