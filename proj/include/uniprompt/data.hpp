#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniprompt/encoder.hpp"
#include "uniprompt/strings.hpp"

namespace uniprompt {

struct SpecialTokens {
  int pad = kPadTokenId;
  int unk = kUnkTokenId;
  int mask = kMaskTokenId;
  static constexpr int count = 3;
};

struct VocabInfo {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  SpecialTokens specials;

  int size() const { return static_cast<int>(tokens.size()); }

  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? specials.unk : it->second;
  }

  static VocabInfo from_tokens(std::vector<std::string> toks) {
    VocabInfo v;
    v.tokens = std::move(toks);
    for (int i = 0; i < v.size(); ++i) v.index[v.tokens[i]] = i;
    return v;
  }
};

// One synthetic language: a bijection from the shared semantic vocabulary to
// a surface id range that is disjoint from every other language except for
// the anchor tokens, which render to the same surface ids everywhere.
struct SyntheticLangSpec {
  std::string language;
  int surface_lo = 0;    // start of the language-exclusive surface block
  int surface_size = 0;  // number of language-exclusive surface ids
  double anchor_fraction = 0.0;
  std::uint64_t mapping_seed = 0;
  std::vector<int> to_surface;  // semantic id -> surface id
  std::unordered_map<int, int> from_surface;
};

struct LabeledExample {
  TokenSequence tokens;
  int label = 0;  // star - 1, in [0, 4]
  std::string language;
};

struct Dataset {
  std::vector<LabeledExample> items;
};

struct GenParams {
  std::vector<std::string> languages = {"en", "de", "es", "fr", "ja", "zh"};
  int semantic_vocab_size = 120;
  double anchor_fraction = 0.10;
  int valence_per_score = 3;  // tokens per score level in {-2..2}
  int template_word_count = 8;
  int labeled_examples_total = 3000;  // split evenly across languages, 5 classes each
  int pretrain_sentences = 8000;
  std::uint64_t seed = 7;
  // sentence shape
  int valence_per_sentence = 6;
  int extra_content_max = 2;
  // Expressive anchors are shared punctuation-like marks that follow a
  // valence token: insertion probability per token, and the probability that
  // an inserted mark is random rather than score-matched.
  double expressive_anchor_prob = 0.5;
  double expressive_anchor_noise = 0.2;

  std::uint64_t checksum() const {
    std::uint64_t h = hash_string(join(languages, ","));
    const double ds[] = {anchor_fraction, expressive_anchor_prob, expressive_anchor_noise};
    h = fnv1a64(ds, sizeof(ds), h);
    const int is[] = {semantic_vocab_size, valence_per_score,    template_word_count,
                      labeled_examples_total, pretrain_sentences, valence_per_sentence,
                      extra_content_max};
    h = fnv1a64(is, sizeof(is), h);
    h = fnv1a64(&seed, sizeof(seed), h);
    return h;
  }
};

// Partition of the semantic id space.
struct SemanticLayout {
  int n_semantic = 0;
  std::vector<int> anchor_ids;             // shared across languages
  std::vector<int> expressive_anchor_ids;  // class-correlated subset, one per class
  std::vector<int> neutral_anchor_ids;
  std::vector<int> valence_ids;
  std::vector<int> valence_score;  // aligned with valence_ids, in [-2, 2]
  std::vector<int> template_word_ids;
  std::vector<int> content_ids;
  std::unordered_map<int, int> score_of;  // semantic id -> valence score
};

// Sum-of-valence ranges per class. Classes are exactly balanced because the
// generator draws the class first and then a target sum inside its range.
inline constexpr std::array<int, 5> kBinLo = {-10, -6, -2, 3, 7};
inline constexpr std::array<int, 5> kBinHi = {-7, -3, 2, 6, 10};

inline int label_of_valence_sum(int sum) {
  for (int c = 0; c < 5; ++c) {
    if (sum >= kBinLo[c] && sum <= kBinHi[c]) return c;
  }
  return sum < kBinLo[0] ? 0 : 4;
}

struct SyntheticCorpus {
  GenParams params;
  SemanticLayout layout;
  VocabInfo vocab;
  std::vector<SyntheticLangSpec> langs;
  std::vector<TokenSequence> pretrain;
  std::vector<std::string> pretrain_language;  // aligned with `pretrain`
  std::map<std::string, Dataset> labeled;

  const SyntheticLangSpec& lang(const std::string& name) const {
    for (const auto& l : langs) {
      if (l.language == name) return l;
    }
    throw DataError("unknown language: " + name);
  }

  int to_surface(const std::string& language, int semantic) const {
    const auto& l = lang(language);
    if (semantic < 0 || semantic >= static_cast<int>(l.to_surface.size())) {
      throw DataError("semantic id " + std::to_string(semantic) + " unmapped in " + language);
    }
    return l.to_surface[semantic];
  }

  int to_semantic(const std::string& language, int surface) const {
    const auto& l = lang(language);
    auto it = l.from_surface.find(surface);
    if (it == l.from_surface.end()) {
      throw DataError("surface id " + std::to_string(surface) + " unmapped in " + language);
    }
    return it->second;
  }

  // Discrete prompt rendered in the source language. The mask occupies
  // position 3, the slot that always holds a valence token in generated
  // sentences, so the masked-LM prior at the mask is a sentiment-word
  // distribution rather than a content-word one.
  Template default_template(const std::string& language) const {
    Template t;
    t.origin = TemplateOrigin::discrete_source_language;
    t.ids = {to_surface(language, layout.template_word_ids[0]),
             to_surface(language, layout.template_word_ids[1]),
             to_surface(language, layout.template_word_ids[2]), vocab.specials.mask,
             to_surface(language, layout.anchor_ids[0])};
    t.mask_index = 3;
    return t;
  }

  // Five discrete label words: the canonical valence token of each score
  // level, rendered in the given language (the toy counterparts of
  // terrible / bad / okay / good / great).
  std::vector<int> default_label_tokens(const std::string& language) const {
    std::vector<int> out;
    for (int score = -2; score <= 2; ++score) {
      for (std::size_t i = 0; i < layout.valence_ids.size(); ++i) {
        if (layout.valence_score[i] == score) {
          out.push_back(to_surface(language, layout.valence_ids[i]));
          break;
        }
      }
    }
    return out;
  }
};

namespace detail {

// Sampled integer scores in [-2, 2] whose total equals `target`.
inline std::vector<int> valence_scores_for_sum(int count, int target, Rng& rng) {
  std::vector<int> s(count, 0);
  int sum = 0;
  while (sum != target) {
    const int i = rng.uniform_int(0, count - 1);
    if (sum < target && s[i] < 2) {
      ++s[i];
      ++sum;
    } else if (sum > target && s[i] > -2) {
      --s[i];
      --sum;
    }
  }
  // mix without changing the sum
  for (int swap = 0; swap < 2 * count; ++swap) {
    const int i = rng.uniform_int(0, count - 1);
    const int j = rng.uniform_int(0, count - 1);
    if (i != j && s[i] < 2 && s[j] > -2) {
      ++s[i];
      --s[j];
    }
  }
  return s;
}

}  // namespace detail

// Semantic token stream for one sentence of the given class. The caller
// renders it through a language's bijection.
inline std::vector<int> gen_semantic_sentence(const SemanticLayout& L, const GenParams& P, int cls,
                                              Rng& rng) {
  const int target = rng.uniform_int(kBinLo[cls], kBinHi[cls]);
  std::vector<int> scores = detail::valence_scores_for_sum(P.valence_per_sentence, target, rng);

  std::vector<int> sem;
  // opening phrase drawn from the template-word pool so prompts look like
  // pretraining sentence openers; variable length keeps the corpus from
  // becoming absolutely position-coded
  const int prefix_len = rng.uniform_int(1, 3);
  for (int i = 0; i < prefix_len; ++i) {
    sem.push_back(
        L.template_word_ids[rng.uniform_int(0, static_cast<int>(L.template_word_ids.size()) - 1)]);
  }

  for (int i = 0; i < P.valence_per_sentence; ++i) {
    sem.push_back(L.content_ids[rng.uniform_int(0, static_cast<int>(L.content_ids.size()) - 1)]);
    // pick a valence token with the required score
    std::vector<int> candidates;
    for (std::size_t v = 0; v < L.valence_ids.size(); ++v) {
      if (L.valence_score[v] == scores[i]) candidates.push_back(L.valence_ids[v]);
    }
    sem.push_back(candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)]);
    // shared emphasis mark next to the valence token; this adjacency is what
    // lets pretraining align valence tokens across languages
    if (rng.uniform() < P.expressive_anchor_prob) {
      const int mark = rng.uniform() < P.expressive_anchor_noise ? rng.uniform_int(0, 4)
                                                                 : scores[i] + 2;
      sem.push_back(L.expressive_anchor_ids[mark]);
    }
    if (i % 2 == 1) {
      sem.push_back(
          L.neutral_anchor_ids[rng.uniform_int(0, static_cast<int>(L.neutral_anchor_ids.size()) - 1)]);
    }
  }
  const int extra = rng.uniform_int(0, P.extra_content_max);
  for (int i = 0; i < extra; ++i) {
    sem.push_back(L.content_ids[rng.uniform_int(0, static_cast<int>(L.content_ids.size()) - 1)]);
  }
  sem.push_back(L.anchor_ids[0]);  // sentence-final anchor
  return sem;
}

inline SyntheticCorpus gen_corpus(const GenParams& P) {
  const int n_langs = static_cast<int>(P.languages.size());
  if (n_langs < 2) throw DataError("need at least 2 languages");
  if (P.labeled_examples_total % (5 * n_langs) != 0) {
    throw DataError("labeled size " + std::to_string(P.labeled_examples_total) +
                    " is not divisible by 5 x " + std::to_string(n_langs) +
                    " languages; class balance impossible");
  }

  SyntheticCorpus c;
  c.params = P;

  // --- semantic layout
  SemanticLayout& L = c.layout;
  L.n_semantic = P.semantic_vocab_size;
  const int n_anchor = std::max(7, static_cast<int>(P.anchor_fraction * P.semantic_vocab_size + 0.5));
  const int n_valence = 5 * P.valence_per_score;
  const int n_content = P.semantic_vocab_size - n_anchor - n_valence - P.template_word_count;
  if (n_content < 8) throw DataError("semantic vocabulary too small for the configured layout");
  int next = 0;
  for (int i = 0; i < n_anchor; ++i) L.anchor_ids.push_back(next++);
  // anchor 0 is the sentence-final one; 1..5 are the expressive anchors
  for (int i = 1; i <= 5; ++i) L.expressive_anchor_ids.push_back(L.anchor_ids[i]);
  L.neutral_anchor_ids.push_back(L.anchor_ids[0]);
  for (int i = 6; i < n_anchor; ++i) L.neutral_anchor_ids.push_back(L.anchor_ids[i]);
  for (int s = -2; s <= 2; ++s) {
    for (int r = 0; r < P.valence_per_score; ++r) {
      L.valence_ids.push_back(next);
      L.valence_score.push_back(s);
      L.score_of[next] = s;
      ++next;
    }
  }
  for (int i = 0; i < P.template_word_count; ++i) L.template_word_ids.push_back(next++);
  for (int i = 0; i < n_content; ++i) L.content_ids.push_back(next++);

  // --- surface vocabulary and per-language bijections
  const int per_lang = P.semantic_vocab_size - n_anchor;
  std::vector<std::string> vocab_tokens = {"[pad]", "[unk]", "[mask]"};
  for (int i = 0; i < n_anchor; ++i) vocab_tokens.push_back("p" + std::to_string(i));
  for (int l = 0; l < n_langs; ++l) {
    for (int i = 0; i < per_lang; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%s%03d", P.languages[l].c_str(), i);
      vocab_tokens.push_back(buf);
    }
  }
  c.vocab = VocabInfo::from_tokens(std::move(vocab_tokens));

  for (int l = 0; l < n_langs; ++l) {
    SyntheticLangSpec spec;
    spec.language = P.languages[l];
    spec.anchor_fraction = static_cast<double>(n_anchor) / P.semantic_vocab_size;
    spec.surface_lo = SpecialTokens::count + n_anchor + l * per_lang;
    spec.surface_size = per_lang;
    spec.mapping_seed = mix_seed(P.seed ^ (0x1a6ull + l));
    Rng map_rng(spec.mapping_seed);
    std::vector<int> perm(per_lang);
    for (int i = 0; i < per_lang; ++i) perm[i] = i;
    map_rng.shuffle(perm);
    spec.to_surface.assign(P.semantic_vocab_size, -1);
    int slot = 0;
    for (int s = 0; s < P.semantic_vocab_size; ++s) {
      if (s < n_anchor) {
        spec.to_surface[s] = SpecialTokens::count + s;  // anchors are shared
      } else {
        spec.to_surface[s] = spec.surface_lo + perm[slot++];
      }
      spec.from_surface[spec.to_surface[s]] = s;
    }
    c.langs.push_back(std::move(spec));
  }

  // --- labeled datasets, exactly balanced per language
  const int per_lang_examples = P.labeled_examples_total / n_langs;
  const int per_class = per_lang_examples / 5;
  for (int l = 0; l < n_langs; ++l) {
    Rng rng(mix_seed(P.seed ^ (0xda7a11ull + 31 * l)));
    Dataset ds;
    for (int cls = 0; cls < 5; ++cls) {
      for (int i = 0; i < per_class; ++i) {
        std::vector<int> sem = gen_semantic_sentence(L, P, cls, rng);
        std::vector<int> surface;
        surface.reserve(sem.size());
        for (int s : sem) surface.push_back(c.langs[l].to_surface[s]);
        LabeledExample ex;
        ex.tokens = TokenSequence::from(std::move(surface));
        ex.label = cls;
        ex.language = P.languages[l];
        ds.items.push_back(std::move(ex));
      }
    }
    Rng order_rng(mix_seed(P.seed ^ (0x0bde6ull + 17 * l)));
    order_rng.shuffle(ds.items);
    c.labeled[P.languages[l]] = std::move(ds);
  }

  // --- pretraining corpus, languages mixed uniformly
  Rng pre_rng(mix_seed(P.seed ^ 0x96e7ea13ull));
  for (int i = 0; i < P.pretrain_sentences; ++i) {
    const int l = i % n_langs;
    const int cls = pre_rng.uniform_int(0, 4);
    std::vector<int> sem = gen_semantic_sentence(L, P, cls, pre_rng);
    std::vector<int> surface;
    surface.reserve(sem.size());
    for (int s : sem) surface.push_back(c.langs[l].to_surface[s]);
    c.pretrain.push_back(TokenSequence::from(std::move(surface)));
    c.pretrain_language.push_back(P.languages[l]);
  }
  std::vector<int> order(c.pretrain.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  pre_rng.shuffle(order);
  std::vector<TokenSequence> shuffled;
  std::vector<std::string> shuffled_lang;
  for (int idx : order) {
    shuffled.push_back(std::move(c.pretrain[idx]));
    shuffled_lang.push_back(std::move(c.pretrain_language[idx]));
  }
  c.pretrain = std::move(shuffled);
  c.pretrain_language = std::move(shuffled_lang);

  return c;
}

// ---- tokenizer and JSONL ingestion -------------------------------------------

// Whitespace split, lowercase, OOV -> [unk], truncated to max_tokens.
inline TokenSequence tokenize(const std::string& text, const VocabInfo& vocab, int max_tokens) {
  std::vector<int> ids;
  for (const std::string& tok : split_ws(to_lower(text))) {
    if (static_cast<int>(ids.size()) >= max_tokens) break;
    ids.push_back(vocab.lookup(tok));
  }
  return TokenSequence::from(std::move(ids));
}

// Lines of {"review_body": str, "stars": 1..5, "language": str}.
inline Dataset ingest_jsonl(const std::string& path, const VocabInfo& vocab, int max_tokens,
                            std::string* warning = nullptr) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  Dataset ds;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + " line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    for (const char* field : {"review_body", "stars", "language"}) {
      if (!j.contains(field)) {
        throw DataError(path + " line " + std::to_string(line_no) + ": missing field '" + field + "'");
      }
    }
    if (!j["stars"].is_number_integer()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": stars must be an integer");
    }
    const int stars = j["stars"].get<int>();
    if (stars < 1 || stars > 5) {
      throw DataError(path + " line " + std::to_string(line_no) + ": stars " + std::to_string(stars) +
                      " outside 1..5");
    }
    LabeledExample ex;
    ex.tokens = tokenize(j["review_body"].get<std::string>(), vocab, max_tokens);
    if (ex.tokens.ids.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": empty review body");
    }
    ex.label = stars - 1;
    ex.language = j["language"].get<std::string>();
    ds.items.push_back(std::move(ex));
  }
  if (ds.items.empty() && warning) *warning = path + " contained no examples";
  return ds;
}

inline void write_jsonl(const std::string& path, const Dataset& ds, const VocabInfo& vocab) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  for (const LabeledExample& ex : ds.items) {
    std::vector<std::string> words;
    for (int id : ex.tokens.ids) words.push_back(vocab.tokens[id]);
    nlohmann::json j;
    j["review_body"] = join(words, " ");
    j["stars"] = ex.label + 1;
    j["language"] = ex.language;
    os << j.dump() << "\n";
  }
}

inline void write_vocab(const std::string& path, const VocabInfo& vocab) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  for (const std::string& tok : vocab.tokens) os << tok << "\n";
}

inline VocabInfo read_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open vocab file " + path);
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) toks.push_back(line);
  }
  return VocabInfo::from_tokens(std::move(toks));
}

// ---- k-shot sampling ----------------------------------------------------------

struct FewShotSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> dev;
  int k = 0;
  std::uint64_t seed = 0;
};

// k examples per class for train and a disjoint k per class for dev,
// sampled without replacement.
inline FewShotSplit few_shot_sample(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("k must be >= 1");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    by_class[dataset.items[i].label].push_back(static_cast<int>(i));
  }
  for (auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < 2 * k) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                      " examples, fewer than the 2k=" + std::to_string(2 * k) + " required");
    }
  }
  Rng rng(mix_seed(seed ^ 0x5a3c1eull));
  FewShotSplit split;
  split.k = k;
  split.seed = seed;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    for (int i = 0; i < k; ++i) split.train.push_back(dataset.items[idx[i]]);
    for (int i = k; i < 2 * k; ++i) split.dev.push_back(dataset.items[idx[i]]);
  }
  rng.shuffle(split.train);
  rng.shuffle(split.dev);
  return split;
}

inline std::uint64_t split_checksum(const FewShotSplit& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64(&s.k, sizeof(s.k), h);
  auto mix_examples = [&](const std::vector<LabeledExample>& v) {
    for (const LabeledExample& ex : v) {
      h = fnv1a64(ex.tokens.ids.data(), ex.tokens.ids.size() * sizeof(int), h);
      h = fnv1a64(&ex.label, sizeof(ex.label), h);
      h = hash_string(ex.language, h);
    }
  };
  mix_examples(s.train);
  mix_examples(s.dev);
  return h;
}

}  // namespace uniprompt
