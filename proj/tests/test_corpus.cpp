#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mtse/data.hpp"
#include "mtse/errors.hpp"
#include "mtse/parsetree.hpp"
#include "mtse/synthgen.hpp"
#include "mtse/vocab.hpp"

using namespace mtse;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("vocabulary reserves special ids and maps unknowns to unk") {
  Vocabulary v;
  CHECK(v.size() == 4);
  CHECK(v.id("<pad>") == 0);
  CHECK(v.id("<s>") == 1);
  CHECK(v.id("</s>") == 2);
  CHECK(v.id("<unk>") == 3);
  CHECK(v.id("never-seen") == Vocabulary::kUnk);
  const auto id = v.add("hello");
  CHECK(id == 4);
  CHECK(v.token(4) == "hello");
  CHECK(v.encode({"hello", "missing"}) ==
        std::vector<std::int64_t>{4, Vocabulary::kUnk});
}

TEST_CASE("build_vocab orders by frequency then token") {
  auto v = build_vocab({{"a", "a", "b"}}, 100, 1);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);

  auto v2 = build_vocab({{"a", "a", "b"}}, 100, 2);
  CHECK(v2.contains("a"));
  CHECK(!v2.contains("b"));

  // tie: counts equal -> lexicographic
  auto v3 = build_vocab({{"b", "a"}}, 100, 1);
  CHECK(v3.id("a") == 4);
  CHECK(v3.id("b") == 5);
}

TEST_CASE("build_vocab rejects empty corpora and honors max_size") {
  CHECK_THROWS_AS(build_vocab({}, 100, 1), Error);
  auto v = build_vocab({{"a", "b", "c", "d", "e"}}, 6, 1);
  CHECK(v.size() == 6);  // 4 specials + 2 tokens
}

TEST_CASE("build_vocab is idempotent on its own output") {
  auto v = build_vocab({{"x", "y", "x"}, {"z", "x", "y"}}, 100, 1);
  std::vector<std::vector<std::string>> again;
  for (std::int64_t i = Vocabulary::kReserved; i < v.size(); ++i)
    again.push_back({v.token(i)});
  auto v2 = build_vocab(again, 100, 1);
  CHECK(v2.size() == v.size());
}

TEST_CASE("batch_order chunks and keeps the short tail") {
  Rng rng(1);
  auto batches = batch_order(5, 2, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);
  std::set<std::size_t> seen;
  for (const auto& b : batches)
    for (auto i : b) seen.insert(i);
  CHECK(seen.size() == 5);
}

TEST_CASE("batch_order is deterministic under a fixed seed") {
  Rng a(77), b(77);
  CHECK(batch_order(100, 16, a) == batch_order(100, 16, b));
}

TEST_CASE("make_batch pads to the batch maximum") {
  auto batch = make_batch({{4, 5}, {6}, {7, 8, 9}});
  CHECK(batch.n == 3);
  CHECK(batch.max_len == 3);
  CHECK(batch.at(0, 2) == Vocabulary::kPad);
  CHECK(batch.at(1, 1) == Vocabulary::kPad);
  CHECK(batch.at(2, 2) == 9);
  CHECK(batch.lengths == std::vector<std::int64_t>{2, 1, 3});
  CHECK_THROWS_AS(make_batch({{}}), Error);
}

TEST_CASE("cipher task applies a fixed bijection") {
  const auto perm = cipher_permutation(8, false);
  std::set<std::int64_t> image(perm.begin(), perm.end());
  CHECK(image.size() == 8);  // bijective

  const auto target = cipher_apply({"s0", "s3"}, 8, false);
  CHECK(target[0] == cipher_target_token(perm[0]));
  CHECK(target[1] == cipher_target_token(perm[3]));

  const auto reversed = cipher_apply({"s0", "s3"}, 8, true);
  const auto perm_rev = cipher_permutation(8, true);
  CHECK(reversed[0] == cipher_target_token(perm_rev[3]));
  CHECK(reversed[1] == cipher_target_token(perm_rev[0]));
}

TEST_CASE("cipher datasets share the mapping across seeds") {
  CipherConfig cfg;
  cfg.vocab_size = 16;
  cfg.n = 20;
  auto a = gen_cipher_task(1, cfg);
  auto b = gen_cipher_task(2, cfg);
  for (const auto& ex : a.pairs)
    CHECK(ex.target == cipher_apply(ex.source, 16, false));
  for (const auto& ex : b.pairs)
    CHECK(ex.target == cipher_apply(ex.source, 16, false));
}

TEST_CASE("cipher token frequencies are uniform within 3 sigma") {
  CipherConfig cfg;
  cfg.vocab_size = 16;
  cfg.n = 20000;
  cfg.min_len = 5;
  cfg.max_len = 5;
  auto data = gen_cipher_task(9, cfg);
  std::map<std::string, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& ex : data.pairs)
    for (const auto& t : ex.source) {
      counts[t] += 1;
      total += 1;
    }
  const double p = 1.0 / 16;
  const double mean = static_cast<double>(total) * p;
  const double sigma = std::sqrt(static_cast<double>(total) * p * (1 - p));
  for (const auto& [tok, count] : counts)
    CHECK(std::fabs(static_cast<double>(count) - mean) < 3.0 * sigma);
}

TEST_CASE("gen_cipher_task is a pure function of seed and config") {
  CipherConfig cfg;
  cfg.vocab_size = 8;
  cfg.n = 50;
  auto a = gen_cipher_task(5, cfg);
  auto b = gen_cipher_task(5, cfg);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].source == b.pairs[i].source);
    CHECK(a.pairs[i].target == b.pairs[i].target);
  }
}

TEST_CASE("books: two-sentence book yields one STN and one STP pair") {
  BooksConfig cfg;
  cfg.n_books = 1;
  cfg.sentences_per_book = 2;
  auto out = gen_books(3, cfg);
  CHECK(out.stn.pairs.size() == 1);
  CHECK(out.stp.pairs.size() == 1);
  CHECK(out.stn.pairs[0].source == out.stp.pairs[0].target);
  CHECK(out.stn.pairs[0].target == out.stp.pairs[0].source);
}

TEST_CASE("books: STP pairs are the element-wise swap of STN pairs") {
  BooksConfig cfg;
  cfg.n_books = 4;
  cfg.sentences_per_book = 10;
  auto out = gen_books(17, cfg);
  REQUIRE(out.stn.pairs.size() == out.stp.pairs.size());
  for (std::size_t i = 0; i < out.stn.pairs.size(); ++i) {
    CHECK(out.stn.pairs[i].source == out.stp.pairs[i].target);
    CHECK(out.stn.pairs[i].target == out.stp.pairs[i].source);
  }
}

TEST_CASE("books: adjacent sentences overlap more than random pairs") {
  BooksConfig cfg;
  cfg.n_books = 10;
  cfg.sentences_per_book = 101;
  auto out = gen_books(23, cfg);

  auto overlap = [](const std::vector<std::string>& a,
                    const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::size_t hits = 0;
    for (const auto& t : b)
      if (sa.count(t)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(b.size());
  };

  Rng rng(99);
  double adjacent = 0.0, random_pairs = 0.0;
  const std::size_t trials = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& pair = out.stn.pairs[static_cast<std::size_t>(
        rng.next_below(out.stn.pairs.size()))];
    adjacent += overlap(pair.source, pair.target);
    const auto& x = out.stn.pairs[static_cast<std::size_t>(
        rng.next_below(out.stn.pairs.size()))];
    const auto& y = out.stn.pairs[static_cast<std::size_t>(
        rng.next_below(out.stn.pairs.size()))];
    random_pairs += overlap(x.source, y.target);
  }
  CHECK(adjacent / trials > random_pairs / trials);
}

TEST_CASE("books pairs never cross book boundaries") {
  BooksConfig cfg;
  cfg.n_books = 3;
  cfg.sentences_per_book = 4;
  auto out = gen_books(31, cfg);
  CHECK(out.stn.pairs.size() ==
        static_cast<std::size_t>(cfg.n_books * (cfg.sentences_per_book - 1)));
}

TEST_CASE("linearize/delinearize round trip") {
  TreeNode tree = TreeNode::inner(
      "S", {TreeNode::inner("NP", {TreeNode::terminal("the"),
                                   TreeNode::terminal("dog")}),
            TreeNode::inner("VP", {TreeNode::terminal("barked")})});
  const auto lin = linearize(tree);
  CHECK(join_tokens(lin) == "( S ( NP the dog ) ( VP barked ) )");
  auto back = delinearize(lin);
  REQUIRE(back.has_value());
  CHECK(tree_yield(*back) == std::vector<std::string>{"the", "dog", "barked"});
}

TEST_CASE("delinearize rejects malformed streams") {
  CHECK(!delinearize({}).has_value());
  CHECK(!delinearize({"hi"}).has_value());                      // no bracket
  CHECK(!delinearize({"(", "S", "hi"}).has_value());            // unclosed
  CHECK(!delinearize({"(", "S", "hi", ")", ")"}).has_value());  // extra
  CHECK(!delinearize({"(", "(", "S", "hi", ")", ")"}).has_value());
  CHECK(!delinearize({"(", "S", ")"}).has_value());             // no child
}

TEST_CASE("single-rule grammar produces ( S hi )") {
  Pcfg g;
  g.add_rule("S", {"hi"});
  auto data = gen_pcfg_parsing(1, g, 3);
  for (const auto& ex : data.data.pairs) {
    CHECK(join_tokens(ex.source) == "hi");
    CHECK(join_tokens(ex.target) == "( S hi )");
  }
}

TEST_CASE("pcfg targets always delinearize to the source yield") {
  const Pcfg g = Pcfg::default_grammar();
  auto data = gen_pcfg_parsing(7, g, 500);
  for (std::size_t i = 0; i < data.data.pairs.size(); ++i) {
    const auto& ex = data.data.pairs[i];
    auto tree = delinearize(ex.target);
    REQUIRE(tree.has_value());
    CHECK(tree_yield(*tree) == ex.source);
    CHECK(data.meta[i].length ==
          static_cast<std::int64_t>(ex.source.size()));
  }
}

TEST_CASE("pcfg voice metadata matches the passive marker in the target") {
  const Pcfg g = Pcfg::default_grammar();
  auto data = gen_pcfg_parsing(11, g, 300);
  std::size_t passives = 0;
  for (std::size_t i = 0; i < data.data.pairs.size(); ++i) {
    const auto& target = data.data.pairs[i].target;
    const bool has_pass_label =
        std::find_if(target.begin(), target.end(), [](const std::string& t) {
          return t.rfind("VP_PASS", 0) == 0;
        }) != target.end();
    CHECK(data.meta[i].passive == has_pass_label);
    if (data.meta[i].passive) ++passives;
  }
  CHECK(passives > 0);
  CHECK(passives < data.data.pairs.size());
}

TEST_CASE("pcfg tss classes index the start expansions") {
  const Pcfg g = Pcfg::default_grammar();
  CHECK(g.tss_class_names().size() == 6);
  auto data = gen_pcfg_parsing(13, g, 200);
  for (const auto& m : data.meta) {
    CHECK(m.tss >= 0);
    CHECK(m.tss < 6);
  }
}

TEST_CASE("nli: entailment hypotheses are contiguous subsequences") {
  auto data = gen_nli(3, 300);
  std::size_t checked = 0;
  for (const auto& ex : data.pair_items) {
    if (ex.label != 0) continue;
    ++checked;
    bool found = false;
    for (std::size_t start = 0;
         start + ex.hypothesis.size() <= ex.premise.size() && !found;
         ++start) {
      found = std::equal(ex.hypothesis.begin(), ex.hypothesis.end(),
                         ex.premise.begin() + static_cast<std::ptrdiff_t>(
                                                  start));
    }
    CHECK(found);
  }
  CHECK(checked == 100);
}

TEST_CASE("nli: contradictions swap exactly one antonym") {
  auto data = gen_nli(5, 300);
  const auto& antonyms = antonym_table();
  for (const auto& ex : data.pair_items) {
    if (ex.label != 1) continue;
    REQUIRE(ex.premise.size() == ex.hypothesis.size());
    std::size_t diffs = 0;
    std::size_t diff_at = 0;
    for (std::size_t i = 0; i < ex.premise.size(); ++i)
      if (ex.premise[i] != ex.hypothesis[i]) {
        ++diffs;
        diff_at = i;
      }
    CHECK(diffs == 1);
    CHECK(antonyms.at(ex.premise[diff_at]) == ex.hypothesis[diff_at]);
  }
}

TEST_CASE("nli: classes balanced with remainder to neutral") {
  auto data = gen_nli(7, 3001);
  std::array<std::int64_t, 3> counts{0, 0, 0};
  for (const auto& ex : data.pair_items)
    counts[static_cast<std::size_t>(ex.label)] += 1;
  CHECK(counts[0] == 1000);
  CHECK(counts[1] == 1000);
  CHECK(counts[2] == 1001);
}

TEST_CASE("load_lines skips blanks with a warning count") {
  const std::string path = temp_path("mtse_lines.txt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "a b c\n\nd e\n   \n";
  }
  LoadStats stats;
  auto lines = load_lines(path, &stats);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == std::vector<std::string>{"a", "b", "c"});
  CHECK(stats.blank_skipped == 2);
  std::remove(path.c_str());
}

TEST_CASE("load_parallel_tsv parses pairs and reports bad rows") {
  const std::string path = temp_path("mtse_pairs.tsv");
  {
    std::ofstream out(path, std::ios::binary);
    out << "a b\tc d\n";
  }
  auto data = load_parallel_tsv(path, "t");
  REQUIRE(data.pairs.size() == 1);
  CHECK(data.pairs[0].source == std::vector<std::string>{"a", "b"});
  CHECK(data.pairs[0].target == std::vector<std::string>{"c", "d"});

  {
    std::ofstream out(path, std::ios::binary);
    out << "a b\tc d\nonly-source\n";
  }
  try {
    load_parallel_tsv(path, "t");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::format);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("CRLF endings are normalized before splitting") {
  const std::string path = temp_path("mtse_crlf.tsv");
  {
    std::ofstream out(path, std::ios::binary);
    out << "a b\tc d\r\ne f\tg h\r\n";
  }
  auto data = load_parallel_tsv(path, "t");
  REQUIRE(data.pairs.size() == 2);
  CHECK(data.pairs[1].target == std::vector<std::string>{"g", "h"});
  std::remove(path.c_str());
}

TEST_CASE("load of a missing file is an io error naming the path") {
  try {
    load_lines("/nonexistent/mtse-no-such-file.txt");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::io);
    CHECK(std::string(e.what()).find("mtse-no-such-file") !=
          std::string::npos);
  }
}

TEST_CASE("nli tsv round trip with label names") {
  const std::string path = temp_path("mtse_nli.tsv");
  TaskDataset data;
  data.name = "nli";
  data.kind = TaskKind::pair_classification;
  data.pair_items.push_back(PairExample{{"a", "b"}, {"b"}, 0});
  data.pair_items.push_back(PairExample{{"hot", "x"}, {"cold", "x"}, 1});
  data.pair_items.push_back(PairExample{{"p"}, {"q"}, 2});
  save_nli_tsv(data, path);
  auto back = load_nli_tsv(path, "nli");
  REQUIRE(back.pair_items.size() == 3);
  CHECK(back.pair_items[0].label == 0);
  CHECK(back.pair_items[1].label == 1);
  CHECK(back.pair_items[2].label == 2);
  CHECK(back.pair_items[1].hypothesis ==
        std::vector<std::string>{"cold", "x"});
  std::remove(path.c_str());
}

TEST_CASE("synthetic data never contains unk after vocab construction") {
  CipherConfig cfg;
  cfg.vocab_size = 16;
  cfg.n = 100;
  auto data = gen_cipher_task(3, cfg);
  std::vector<std::vector<std::string>> lines;
  for (const auto& ex : data.pairs) lines.push_back(ex.source);
  auto vocab = build_vocab(lines, 1 << 20, 1);
  for (const auto& ex : data.pairs)
    for (auto id : vocab.encode(ex.source)) CHECK(id != Vocabulary::kUnk);
}
