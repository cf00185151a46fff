#pragma once

#include <map>
#include <string>
#include <vector>

#include "uniprompt/data.hpp"
#include "uniprompt/encoder.hpp"

namespace uniprompt {

// Which ablation row a label-word matrix realizes.
enum class LabelWordKind { discrete, soft_random, soft_plm_init, soft_mean_init };

inline const char* to_string(LabelWordKind k) {
  switch (k) {
    case LabelWordKind::discrete: return "discrete";
    case LabelWordKind::soft_random: return "soft-random";
    case LabelWordKind::soft_plm_init: return "soft-plm-init";
    case LabelWordKind::soft_mean_init: return "soft-mean-init";
  }
  return "?";
}

inline LabelWordKind label_word_kind_from_string(const std::string& s) {
  if (s == "discrete") return LabelWordKind::discrete;
  if (s == "soft-random") return LabelWordKind::soft_random;
  if (s == "soft-plm-init") return LabelWordKind::soft_plm_init;
  if (s == "soft-mean-init") return LabelWordKind::soft_mean_init;
  throw ConfigError("unknown label word kind: " + s);
}

// |Y| x d matrix of soft label words; row i is the embedding of label i.
struct LabelWordMatrix {
  Tensor rows;
  LabelWordKind kind = LabelWordKind::soft_random;

  int n_classes() const { return rows.empty() ? 0 : rows.rows(); }

  void validate(int d_model) const {
    if (rows.rows() < 2) throw ConfigError("label word matrix needs at least 2 classes");
    if (rows.cols() != d_model) {
      throw ShapeError("label word width " + std::to_string(rows.cols()) + " vs d_model " +
                       std::to_string(d_model));
    }
    check_finite(rows, "label words");
  }
};

// Map from label to the training-example indices carrying it.
struct ClassGrouping {
  std::map<int, std::vector<int>> groups;

  static ClassGrouping from(const std::vector<LabeledExample>& examples) {
    ClassGrouping g;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      g.groups[examples[i].label].push_back(static_cast<int>(i));
    }
    return g;
  }
};

// Prompt input for one training case: template then context, a single
// full-attention sequence with positions 0..t+s-1.
inline TokenSequence concat_prompt_input(const Template& tpl, const TokenSequence& ctx) {
  TokenSequence seq;
  seq.ids = tpl.ids;
  seq.ids.insert(seq.ids.end(), ctx.ids.begin(), ctx.ids.end());
  seq.positions.resize(seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) seq.positions[i] = static_cast<int>(i);
  return seq;
}

// Mean of the mask representations per class, computed with the original
// pretrained stack as a plain encoder and gradients disabled. Row i is the
// average of h^m over the training cases labeled i.
inline LabelWordMatrix init_soft_label_words(const PLMWeights& theta0, const Template& tpl,
                                             const FewShotSplit& split, int n_classes = 5) {
  tpl.validate(kMaskTokenId, theta0.cfg.vocab_size);
  ClassGrouping grouping = ClassGrouping::from(split.train);
  for (const auto& [cls, idx] : grouping.groups) {
    if (cls < 0 || cls >= n_classes) {
      throw DataError("label " + std::to_string(cls) + " outside [0," + std::to_string(n_classes) + ")");
    }
  }
  for (int cls = 0; cls < n_classes; ++cls) {
    if (grouping.groups[cls].empty()) {
      throw DataError("no training example with label " + std::to_string(cls) +
                      "; cannot initialize its soft label word");
    }
  }
  LabelWordMatrix W;
  W.kind = LabelWordKind::soft_mean_init;
  W.rows = Tensor::zeros({n_classes, theta0.cfg.d_model});
  for (const auto& [cls, idx] : grouping.groups) {
    for (int i : idx) {
      TokenSequence seq = concat_prompt_input(tpl, split.train[i].tokens);
      seq.validate(theta0.cfg);
      Tensor h = encode_full_stack(theta0, seq);
      for (int j = 0; j < theta0.cfg.d_model; ++j) {
        W.rows.at(cls, j) += h.at(tpl.mask_index, j) / static_cast<double>(idx.size());
      }
    }
  }
  check_finite(W.rows, "soft label word init");
  return W;
}

inline LabelWordMatrix init_random(int n_classes, int d, std::uint64_t seed) {
  Rng rng(mix_seed(seed ^ 0x1abe1ull));
  LabelWordMatrix W;
  W.kind = LabelWordKind::soft_random;
  W.rows = Tensor::randn({n_classes, d}, 0.02, rng);
  return W;
}

// Decoupled copy of the MLM output-embedding rows of the given discrete label
// tokens; training the rows leaves the head untouched.
inline LabelWordMatrix init_from_plm_head(const PLMWeights& theta0,
                                          const std::vector<int>& label_tokens) {
  LabelWordMatrix W;
  W.kind = LabelWordKind::soft_plm_init;
  const int d = theta0.cfg.d_model;
  W.rows = Tensor::zeros({static_cast<int>(label_tokens.size()), d});
  for (std::size_t i = 0; i < label_tokens.size(); ++i) {
    const int tok = label_tokens[i];
    if (tok < 0 || tok >= theta0.cfg.vocab_size) {
      throw ShapeError("label token id " + std::to_string(tok) + " outside vocab");
    }
    for (int j = 0; j < d; ++j) W.rows.at(static_cast<int>(i), j) = theta0.mlm_w.at(j, tok);
  }
  return W;
}

// MLM-head scores restricted to the label tokens. No copy is made: in the
// tape version gradients flow into the live head rows.
inline Tensor discrete_label_logits(const Tensor& h_mask, const Tensor& mlm_w, const Tensor& mlm_b,
                                    const std::vector<int>& label_tokens) {
  if (h_mask.cols() != mlm_w.rows()) {
    throw ShapeError("h_mask width " + std::to_string(h_mask.cols()) + " vs head " +
                     shape_str(mlm_w.shape));
  }
  Tape tp(false);
  Binder bind(tp);
  Var full = add_row(tp, matmul(tp, tp.put(h_mask), bind(mlm_w)), bind(mlm_b));
  return tp.val(gather_entries(tp, full, label_tokens));
}

inline Tensor discrete_label_logits(const Tensor& h_mask, const PLMWeights& theta0,
                                    const std::vector<int>& label_tokens) {
  for (int tok : label_tokens) {
    if (tok < 0 || tok >= theta0.cfg.vocab_size) {
      throw ShapeError("label token id " + std::to_string(tok) + " outside vocab");
    }
  }
  return discrete_label_logits(h_mask, theta0.mlm_w, theta0.mlm_b, label_tokens);
}

// Classification distribution over label words: softmax of W . h_mask (no
// bias term).
inline Tensor label_logits(const Tensor& h_mask, const LabelWordMatrix& W) {
  if (h_mask.rows() != 1 || h_mask.cols() != W.rows.cols()) {
    throw ShapeError("h_mask " + shape_str(h_mask.shape) + " does not match label words " +
                     shape_str(W.rows.shape));
  }
  Tape tp(false);
  Var scores = matmul_nt(tp, tp.put(h_mask), tp.put(W.rows));
  return tp.val(softmax_rows(tp, scores));
}

inline Var label_scores_t(Tape& tp, Binder& bind, Var h_mask, const LabelWordMatrix& W) {
  return matmul_nt(tp, h_mask, bind(W.rows));
}

// Argmax with ties broken toward the lowest class index.
inline int predict(const Tensor& probs) {
  if (probs.rows() != 1 || probs.cols() < 1) {
    throw ShapeError("predict expects a probability row, got " + shape_str(probs.shape));
  }
  int best = 0;
  for (int j = 1; j < probs.cols(); ++j) {
    if (probs.data[j] > probs.data[best]) best = j;
  }
  return best;
}

}  // namespace uniprompt
