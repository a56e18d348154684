#include "mtse/synthgen.hpp"

#include <algorithm>

#include "mtse/errors.hpp"

namespace mtse {

// --------------------------------------------------------------------------
// cipher
// --------------------------------------------------------------------------

std::string cipher_source_token(std::int64_t index) {
  return "s" + std::to_string(index);
}

std::string cipher_target_token(std::int64_t index) {
  return "t" + std::to_string(index);
}

std::vector<std::int64_t> cipher_permutation(std::int64_t vocab_size,
                                             bool reverse) {
  if (vocab_size < 5)
    fail(errc::config, "cipher vocab_size must be >= 5, got " +
                           std::to_string(vocab_size));
  // Mapping is a function of (vocab_size, reverse) only, never of the
  // sampling seed, so train and held-out splits agree on it.
  std::uint64_t sm = 0x4349504845524dULL ^
                     (static_cast<std::uint64_t>(vocab_size) << 1) ^
                     (reverse ? 0x5245564552534524ULL : 0);
  Rng rng(splitmix64(sm));
  std::vector<std::int64_t> perm(static_cast<std::size_t>(vocab_size));
  for (std::int64_t i = 0; i < vocab_size; ++i)
    perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  return perm;
}

std::vector<std::string> cipher_apply(const std::vector<std::string>& source,
                                      std::int64_t vocab_size, bool reverse) {
  const auto perm = cipher_permutation(vocab_size, reverse);
  std::vector<std::string> target;
  target.reserve(source.size());
  for (const auto& tok : source) {
    if (tok.empty() || tok[0] != 's')
      fail(errc::input, "cipher_apply: unexpected source token '" + tok + "'");
    const std::int64_t idx = std::stoll(tok.substr(1));
    if (idx < 0 || idx >= vocab_size)
      fail(errc::input, "cipher_apply: token index out of range");
    target.push_back(
        cipher_target_token(perm[static_cast<std::size_t>(idx)]));
  }
  if (reverse) std::reverse(target.begin(), target.end());
  return target;
}

TaskDataset gen_cipher_task(std::uint64_t seed, const CipherConfig& cfg,
                            const std::string& name) {
  if (cfg.vocab_size < 5) fail(errc::config, "cipher vocab_size must be >= 5");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    fail(errc::config, "cipher sentence length range invalid");
  Rng rng(seed);
  TaskDataset data;
  data.name = name;
  data.kind = TaskKind::seq2seq;
  for (std::int64_t i = 0; i < cfg.n; ++i) {
    const std::int64_t len = rng.uniform_int(cfg.min_len, cfg.max_len);
    Seq2SeqExample ex;
    for (std::int64_t t = 0; t < len; ++t)
      ex.source.push_back(cipher_source_token(
          static_cast<std::int64_t>(rng.next_below(
              static_cast<std::uint64_t>(cfg.vocab_size)))));
    ex.target = cipher_apply(ex.source, cfg.vocab_size, cfg.reverse);
    data.pairs.push_back(std::move(ex));
  }
  return data;
}

// --------------------------------------------------------------------------
// books
// --------------------------------------------------------------------------

namespace {

struct BookStructure {
  std::vector<std::vector<std::string>> state_tokens;
  std::vector<std::vector<std::string>> canonical;
};

// Structural choices (token subsets, canonical phrases) depend only on the
// config, never the sample seed.
BookStructure book_structure(const BooksConfig& cfg) {
  if (cfg.states < 2) fail(errc::config, "books: need at least 2 states");
  if (cfg.vocab_size < cfg.states)
    fail(errc::config, "books: vocab_size must be >= states");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    fail(errc::config, "books: sentence length range invalid");
  std::uint64_t sm = 0xb00c5ULL ^
                     (static_cast<std::uint64_t>(cfg.vocab_size) << 8) ^
                     static_cast<std::uint64_t>(cfg.states);
  Rng rng(splitmix64(sm));
  BookStructure st;
  const std::int64_t per_state = cfg.vocab_size / cfg.states;
  for (std::int64_t s = 0; s < cfg.states; ++s) {
    std::vector<std::string> toks;
    const std::int64_t lo = s * per_state;
    const std::int64_t hi =
        (s + 1 == cfg.states) ? cfg.vocab_size : (s + 1) * per_state;
    for (std::int64_t i = lo; i < hi; ++i)
      toks.push_back("w" + std::to_string(i));
    const std::int64_t len = rng.uniform_int(cfg.min_len, cfg.max_len);
    std::vector<std::string> phrase;
    for (std::int64_t t = 0; t < len; ++t)
      phrase.push_back(toks[static_cast<std::size_t>(
          rng.next_below(toks.size()))]);
    st.state_tokens.push_back(std::move(toks));
    st.canonical.push_back(std::move(phrase));
  }
  return st;
}

}  // namespace

BooksOut gen_books(std::uint64_t seed, const BooksConfig& cfg) {
  if (cfg.sentences_per_book < 2)
    fail(errc::config, "books: sentences_per_book must be >= 2");
  const BookStructure st = book_structure(cfg);
  Rng rng(seed);
  BooksOut out;
  out.stn.name = "stn";
  out.stn.kind = TaskKind::seq2seq;
  out.stp.name = "stp";
  out.stp.kind = TaskKind::seq2seq;
  for (std::int64_t b = 0; b < cfg.n_books; ++b) {
    std::vector<std::vector<std::string>> book;
    std::int64_t state =
        static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(cfg.states)));
    for (std::int64_t k = 0; k < cfg.sentences_per_book; ++k) {
      const auto& phrase = st.canonical[static_cast<std::size_t>(state)];
      const auto& toks = st.state_tokens[static_cast<std::size_t>(state)];
      std::vector<std::string> sent;
      for (const auto& tok : phrase) {
        if (rng.next_double() < cfg.noise)
          sent.push_back(toks[static_cast<std::size_t>(
              rng.next_below(toks.size()))]);
        else
          sent.push_back(tok);
      }
      book.push_back(std::move(sent));
      if (rng.next_double() >= cfg.stay_prob) {
        // jump to a different state
        std::int64_t next = static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(cfg.states - 1)));
        if (next >= state) ++next;
        state = next;
      }
    }
    for (std::size_t k = 0; k + 1 < book.size(); ++k) {
      out.stn.pairs.push_back(Seq2SeqExample{book[k], book[k + 1]});
      out.stp.pairs.push_back(Seq2SeqExample{book[k + 1], book[k]});
    }
    out.books.push_back(std::move(book));
  }
  return out;
}

// --------------------------------------------------------------------------
// pcfg
// --------------------------------------------------------------------------

void Pcfg::add_rule(const std::string& lhs, std::vector<std::string> rhs,
                    double weight) {
  if (rhs.empty()) fail(errc::config, "pcfg rule with empty right-hand side");
  if (weight <= 0) fail(errc::config, "pcfg rule weight must be positive");
  rules_[lhs].push_back(Rule{std::move(rhs), weight});
}

bool Pcfg::is_nonterminal(const std::string& sym) const {
  return rules_.count(sym) > 0;
}

const std::vector<Pcfg::Rule>& Pcfg::rules_for(const std::string& lhs) const {
  auto it = rules_.find(lhs);
  if (it == rules_.end())
    fail(errc::config, "pcfg has no rules for '" + lhs + "'");
  return it->second;
}

bool Pcfg::is_passive_marker(const std::string& nt) const {
  return std::find(passive_.begin(), passive_.end(), nt) != passive_.end();
}

bool Pcfg::is_past_marker(const std::string& nt) const {
  return std::find(past_.begin(), past_.end(), nt) != past_.end();
}

bool Pcfg::is_preterminal(const std::string& nt) const {
  if (nt == start_) return false;
  auto it = rules_.find(nt);
  if (it == rules_.end()) return false;
  for (const auto& r : it->second)
    if (r.rhs.size() != 1 || is_nonterminal(r.rhs[0])) return false;
  return true;
}

std::vector<std::string> Pcfg::tss_class_names() const {
  std::vector<std::string> names;
  auto it = rules_.find(start_);
  if (it == rules_.end()) return names;
  for (const auto& r : it->second) {
    std::string name;
    for (std::size_t i = 0; i < r.rhs.size(); ++i) {
      if (i) name += "+";
      name += r.rhs[i];
    }
    names.push_back(std::move(name));
  }
  return names;
}

Pcfg Pcfg::default_grammar() {
  Pcfg g;
  g.add_rule("S", {"NP", "VP_PRES"}, 2.0);
  g.add_rule("S", {"NP", "VP_PAST"}, 2.0);
  g.add_rule("S", {"NP", "VP_PASS_PRES"}, 1.5);
  g.add_rule("S", {"NP", "VP_PASS_PAST"}, 1.5);
  g.add_rule("S", {"NP", "VP_PAST", "PP"}, 1.0);
  g.add_rule("S", {"NP", "VP_PASS_PAST", "PP"}, 1.0);
  g.add_rule("NP", {"DT", "NN"}, 2.0);
  g.add_rule("NP", {"DT", "JJ", "NN"}, 1.0);
  g.add_rule("VP_PRES", {"VBZ", "NP"}, 1.0);
  g.add_rule("VP_PAST", {"VBD", "NP"}, 1.0);
  g.add_rule("VP_PASS_PRES", {"AUXZ", "VBN", "BYP"}, 1.0);
  g.add_rule("VP_PASS_PAST", {"AUXD", "VBN", "BYP"}, 1.0);
  g.add_rule("BYP", {"BY", "NP"}, 1.0);
  g.add_rule("PP", {"IN", "NP"}, 1.0);
  g.add_rule("DT", {"the"}, 2.0);
  g.add_rule("DT", {"a"}, 1.0);
  for (const char* n : {"dog", "cat", "bird", "fox", "horse", "farmer",
                        "child", "woman"})
    g.add_rule("NN", {n});
  for (const char* n : {"big", "small", "old", "young"}) g.add_rule("JJ", {n});
  for (const char* n : {"chases", "sees", "follows", "finds"})
    g.add_rule("VBZ", {n});
  for (const char* n : {"chased", "saw", "followed", "found"})
    g.add_rule("VBD", {n});
  for (const char* n : {"chased", "seen", "followed", "found"})
    g.add_rule("VBN", {n});
  g.add_rule("AUXZ", {"is"});
  g.add_rule("AUXD", {"was"});
  g.add_rule("BY", {"by"});
  for (const char* n : {"near", "behind", "beside"}) g.add_rule("IN", {n});
  g.mark_passive("VP_PASS_PRES");
  g.mark_passive("VP_PASS_PAST");
  g.mark_past("VP_PAST");
  g.mark_past("VP_PASS_PAST");
  return g;
}

namespace {

constexpr std::int64_t kMaxDepth = 32;

struct Expansion {
  TreeNode node;
  bool passive = false;
  bool past = false;
};

std::size_t pick_rule(const std::vector<Pcfg::Rule>& rules, Rng& rng) {
  double total = 0.0;
  for (const auto& r : rules) total += r.weight;
  double u = rng.next_double() * total;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    u -= rules[i].weight;
    if (u < 0) return i;
  }
  return rules.size() - 1;
}

// Returns false when the depth bound is exceeded (caller resamples).
bool expand(const Pcfg& g, const std::string& sym, Rng& rng,
            std::int64_t depth, Expansion& out, std::size_t* top_rule) {
  if (depth > kMaxDepth) return false;
  if (!g.is_nonterminal(sym)) {
    out.node = TreeNode::terminal(sym);
    return true;
  }
  const auto& rules = g.rules_for(sym);
  const std::size_t pick = pick_rule(rules, rng);
  if (top_rule) *top_rule = pick;
  if (g.is_passive_marker(sym)) out.passive = true;
  if (g.is_past_marker(sym)) out.past = true;
  if (g.is_preterminal(sym)) {
    // single terminal, no bracket of its own
    out.node = TreeNode::terminal(rules[pick].rhs[0]);
    return true;
  }
  TreeNode node;
  node.label = sym;
  for (const auto& child_sym : rules[pick].rhs) {
    Expansion child;
    child.passive = out.passive;
    child.past = out.past;
    if (!expand(g, child_sym, rng, depth + 1, child, nullptr)) return false;
    out.passive = child.passive;
    out.past = child.past;
    node.children.push_back(std::move(child.node));
  }
  out.node = std::move(node);
  return true;
}

}  // namespace

ParsingData gen_pcfg_parsing(std::uint64_t seed, const Pcfg& grammar,
                             std::int64_t n, const std::string& name) {
  if (!grammar.is_nonterminal(grammar.start()))
    fail(errc::config, "pcfg start symbol has no rules");
  Rng rng(seed);
  ParsingData out;
  out.data.name = name;
  out.data.kind = TaskKind::seq2seq;
  out.tss_names = grammar.tss_class_names();
  for (std::int64_t i = 0; i < n; ++i) {
    Expansion exp;
    std::size_t top_rule = 0;
    int attempts = 0;
    while (!expand(grammar, grammar.start(), rng, 0, exp, &top_rule)) {
      exp = Expansion{};
      if (++attempts > 100)
        fail(errc::config, "pcfg derivations keep exceeding the depth bound");
    }
    Seq2SeqExample ex;
    ex.source = tree_yield(exp.node);
    ex.target = linearize(exp.node);
    ParseMeta meta;
    meta.length = static_cast<std::int64_t>(ex.source.size());
    meta.passive = exp.passive;
    meta.past = exp.past;
    meta.tss = static_cast<std::int64_t>(top_rule);
    out.data.pairs.push_back(std::move(ex));
    out.meta.push_back(meta);
  }
  return out;
}

// --------------------------------------------------------------------------
// nli
// --------------------------------------------------------------------------

const std::map<std::string, std::string>& antonym_table() {
  static const std::map<std::string, std::string> table = [] {
    std::map<std::string, std::string> m;
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"hot", "cold"},   {"big", "small"}, {"fast", "slow"},
        {"new", "old"},    {"light", "dark"}, {"happy", "sad"},
        {"wet", "dry"},    {"loud", "quiet"},
    };
    for (const auto& [a, b] : pairs) {
      m[a] = b;
      m[b] = a;
    }
    return m;
  }();
  return table;
}

SentenceGen default_nli_sentence_gen(std::int64_t min_len,
                                     std::int64_t max_len) {
  if (min_len < 3 || max_len < min_len)
    fail(errc::config, "nli sentence length range invalid (min 3)");
  std::vector<std::string> content;
  for (const auto& [word, other] : antonym_table()) content.push_back(word);
  std::vector<std::string> filler;
  for (int i = 0; i < 24; ++i) filler.push_back("f" + std::to_string(i));
  return [min_len, max_len, content, filler](Rng& rng) {
    const std::int64_t len = rng.uniform_int(min_len, max_len);
    std::vector<std::string> sent;
    // force one antonym-table word so contradictions are always derivable
    const std::int64_t forced = rng.uniform_int(0, len - 1);
    for (std::int64_t i = 0; i < len; ++i) {
      if (i == forced || rng.next_double() < 0.4)
        sent.push_back(content[static_cast<std::size_t>(
            rng.next_below(content.size()))]);
      else
        sent.push_back(filler[static_cast<std::size_t>(
            rng.next_below(filler.size()))]);
    }
    return sent;
  };
}

TaskDataset gen_nli(std::uint64_t seed, std::int64_t n,
                    const SentenceGen& base_gen, const std::string& name) {
  Rng rng(seed);
  TaskDataset data;
  data.name = name;
  data.kind = TaskKind::pair_classification;
  const auto& antonyms = antonym_table();
  const std::int64_t per_class = n / 3;
  auto gen_sentence = [&]() {
    auto s = base_gen(rng);
    if (s.empty()) fail(errc::input, "base sentence generator produced an "
                                     "empty sentence");
    return s;
  };
  for (std::int64_t i = 0; i < n; ++i) {
    PairExample ex;
    if (i < per_class) {
      // entailment: contiguous subsequence
      ex.label = 0;
      ex.premise = gen_sentence();
      const auto len = static_cast<std::int64_t>(ex.premise.size());
      const std::int64_t sub_len =
          len <= 2 ? 1 : rng.uniform_int(2, len - 1);
      const std::int64_t start = rng.uniform_int(0, len - sub_len);
      ex.hypothesis.assign(
          ex.premise.begin() + static_cast<std::ptrdiff_t>(start),
          ex.premise.begin() + static_cast<std::ptrdiff_t>(start + sub_len));
    } else if (i < 2 * per_class) {
      // contradiction: one antonym swap
      ex.label = 1;
      int attempts = 0;
      for (;;) {
        ex.premise = gen_sentence();
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < ex.premise.size(); ++j)
          if (antonyms.count(ex.premise[j])) candidates.push_back(j);
        if (!candidates.empty()) {
          ex.hypothesis = ex.premise;
          const std::size_t j = candidates[static_cast<std::size_t>(
              rng.next_below(candidates.size()))];
          ex.hypothesis[j] = antonyms.at(ex.premise[j]);
          break;
        }
        if (++attempts > 100)
          fail(errc::config, "base sentence generator never emits "
                             "antonym-table tokens");
      }
    } else {
      // neutral: independent pair
      ex.label = 2;
      ex.premise = gen_sentence();
      ex.hypothesis = gen_sentence();
    }
    data.pair_items.push_back(std::move(ex));
  }
  return data;
}

}  // namespace mtse
