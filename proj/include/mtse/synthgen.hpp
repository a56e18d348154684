#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mtse/data.hpp"
#include "mtse/parsetree.hpp"
#include "mtse/rng.hpp"

namespace mtse {

// ---------------------------------------------------------------------------
// Cipher translation tasks. Source tokens are drawn uniformly; the target is
// the image of the source under a fixed bijection into a disjoint target
// vocabulary, order-reversed when `reverse` is set. The bijection depends
// only on (vocab_size, reverse) so held-out sets sampled with another seed
// share the mapping.
// ---------------------------------------------------------------------------

struct CipherConfig {
  std::int64_t vocab_size = 64;  // content tokens, excluding specials
  std::int64_t n = 5000;
  std::int64_t min_len = 3;
  std::int64_t max_len = 10;
  bool reverse = false;
};

std::vector<std::int64_t> cipher_permutation(std::int64_t vocab_size,
                                             bool reverse);
std::string cipher_source_token(std::int64_t index);
std::string cipher_target_token(std::int64_t index);
std::vector<std::string> cipher_apply(const std::vector<std::string>& source,
                                      std::int64_t vocab_size, bool reverse);

TaskDataset gen_cipher_task(std::uint64_t seed, const CipherConfig& cfg,
                            const std::string& name = "cipher");

// ---------------------------------------------------------------------------
// Book corpus: sentences from a sticky Markov chain over topic states; each
// state owns a token subset and a canonical phrase, emitted with per-token
// replacement noise. Adjacent sentences share chain state, so skip-thought
// pairs carry signal. Pairs never cross book boundaries.
// ---------------------------------------------------------------------------

struct BooksConfig {
  std::int64_t vocab_size = 64;  // split evenly across states
  std::int64_t states = 8;
  std::int64_t n_books = 40;
  std::int64_t sentences_per_book = 25;
  std::int64_t min_len = 3;
  std::int64_t max_len = 10;
  double stay_prob = 0.8;
  double noise = 0.1;
};

struct BooksOut {
  TaskDataset stn;  // current -> next
  TaskDataset stp;  // current -> previous
  std::vector<std::vector<std::vector<std::string>>> books;
};

BooksOut gen_books(std::uint64_t seed, const BooksConfig& cfg);

// ---------------------------------------------------------------------------
// PCFG parsing task: source is the terminal yield, target the linearized
// tree. Nonterminal variants encode voice and tense; the start symbol's
// expansions define the TSS classes.
// ---------------------------------------------------------------------------

class Pcfg {
 public:
  struct Rule {
    std::vector<std::string> rhs;
    double weight = 1.0;
  };

  void add_rule(const std::string& lhs, std::vector<std::string> rhs,
                double weight = 1.0);
  void mark_passive(const std::string& nt) { passive_.push_back(nt); }
  void mark_past(const std::string& nt) { past_.push_back(nt); }

  bool is_nonterminal(const std::string& sym) const;
  const std::string& start() const { return start_; }
  void set_start(std::string s) { start_ = std::move(s); }

  const std::vector<Rule>& rules_for(const std::string& lhs) const;
  bool is_passive_marker(const std::string& nt) const;
  bool is_past_marker(const std::string& nt) const;

  // A nonterminal every expansion of which is a single terminal; rendered
  // without brackets (except the start symbol, which always brackets).
  bool is_preterminal(const std::string& nt) const;

  // Names of the start symbol's expansions, in rule order; these are the
  // TSS classes.
  std::vector<std::string> tss_class_names() const;

  static Pcfg default_grammar();

 private:
  std::string start_ = "S";
  std::map<std::string, std::vector<Rule>> rules_;
  std::vector<std::string> passive_;
  std::vector<std::string> past_;
};

struct ParseMeta {
  std::int64_t length = 0;
  bool passive = false;
  bool past = false;
  std::int64_t tss = 0;
};

struct ParsingData {
  TaskDataset data;
  std::vector<ParseMeta> meta;           // row-aligned with data.pairs
  std::vector<std::string> tss_names;
};

ParsingData gen_pcfg_parsing(std::uint64_t seed, const Pcfg& grammar,
                             std::int64_t n, const std::string& name = "par");

// ---------------------------------------------------------------------------
// Synthetic NLI. Entailment: hypothesis is a contiguous subsequence of the
// premise. Contradiction: one antonym-table token replaced by its antonym.
// Neutral: independent sentence. Classes balanced (floor(n/3) each,
// remainder neutral).
// ---------------------------------------------------------------------------

using SentenceGen = std::function<std::vector<std::string>(Rng&)>;

const std::map<std::string, std::string>& antonym_table();
SentenceGen default_nli_sentence_gen(std::int64_t min_len = 5,
                                     std::int64_t max_len = 9);

TaskDataset gen_nli(std::uint64_t seed, std::int64_t n,
                    const SentenceGen& base_gen = default_nli_sentence_gen(),
                    const std::string& name = "nli");

}  // namespace mtse
