#pragma once

#include <string>
#include <vector>

#include "uniprompt/trainer.hpp"

namespace uniprompt {

enum class BaselineKind { vanilla_finetune, english_prompt, soft_prompt, translation_prompt };

inline const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::vanilla_finetune: return "vanilla_finetune";
    case BaselineKind::english_prompt: return "english_prompt";
    case BaselineKind::soft_prompt: return "soft_prompt";
    case BaselineKind::translation_prompt: return "translation_prompt";
  }
  return "?";
}

inline BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "vanilla_finetune") return BaselineKind::vanilla_finetune;
  if (s == "english_prompt") return BaselineKind::english_prompt;
  if (s == "soft_prompt") return BaselineKind::soft_prompt;
  if (s == "translation_prompt") return BaselineKind::translation_prompt;
  throw ConfigError("unknown baseline kind: " + s);
}

struct BaselineTemplateConfig {
  Template source_template;          // discrete source-language prompt
  std::vector<int> label_tokens;     // discrete source-language label words
  int soft_template_tokens = 4;      // artificial tokens for the soft prompt
  int n_classes = 5;
};

struct BuiltModel {
  TwoTowerModel model;
  Template tpl;  // the template the model trains and predicts with
};

// The four comparison systems. All share the plain pretrained stack (no tower
// split), start from the same theta0, and leave every parameter trainable.
inline BuiltModel build_baseline(BaselineKind kind, const PLMWeights& theta0,
                                 const BaselineTemplateConfig& tc, std::uint64_t init_seed) {
  BuiltModel built;
  built.model = split_model(theta0, 0);
  TwoTowerModel& m = built.model;
  switch (kind) {
    case BaselineKind::vanilla_finetune: {
      // mean-pooled final representation into a fresh |Y|-way linear head
      m.head = HeadKind::linear_classifier;
      Rng rng(mix_seed(init_seed ^ 0xc1a551f1e4ull));
      m.cls_w = Tensor::randn({tc.n_classes, theta0.cfg.d_model}, 0.02, rng);
      m.cls_b = Tensor::zeros({1, tc.n_classes});
      built.tpl = Template{};  // no template
      return built;
    }
    case BaselineKind::english_prompt:
    case BaselineKind::translation_prompt: {
      // identical construction; the translated prompt only appears at test time
      m.head = HeadKind::discrete_label_words;
      m.label_tokens = tc.label_tokens;
      m.label_words.kind = LabelWordKind::discrete;
      built.tpl = tc.source_template;
      built.tpl.validate(kMaskTokenId, theta0.cfg.vocab_size);
      return built;
    }
    case BaselineKind::soft_prompt: {
      if (tc.soft_template_tokens < 1) {
        throw ConfigError("soft prompt needs at least one artificial template token");
      }
      m.head = HeadKind::discrete_label_words;
      m.label_tokens = tc.label_tokens;
      m.label_words.kind = LabelWordKind::discrete;
      Rng rng(mix_seed(init_seed ^ 0x50f77e41ull));
      m.soft_template_emb = Tensor::randn({tc.soft_template_tokens, theta0.cfg.d_model}, 0.02, rng);
      Template tpl;
      tpl.origin = TemplateOrigin::artificial_soft_tokens;
      for (int i = 0; i < tc.soft_template_tokens; ++i) tpl.ids.push_back(i);
      tpl.ids.push_back(kMaskTokenId);
      tpl.mask_index = tc.soft_template_tokens;
      built.tpl = tpl;
      return built;
    }
  }
  throw ConfigError("unknown baseline kind");
}

// Renders a discrete source-language template in the target language through
// the synthetic bijections: inverse(src) then forward(tgt). With probability
// `corruption` a non-mask token is replaced by a random target-language token,
// imitating machine-translation error. The mask slot is preserved.
inline Template translate_template(const Template& tpl, const SyntheticCorpus& corpus,
                                   const std::string& src_lang, const std::string& tgt_lang,
                                   double corruption, std::uint64_t seed) {
  if (tpl.origin != TemplateOrigin::discrete_source_language) {
    throw ConfigError("only discrete templates can be translated");
  }
  if (corruption < 0.0 || corruption > 1.0) throw ConfigError("corruption must be in [0,1]");
  const SyntheticLangSpec& tgt = corpus.lang(tgt_lang);
  Rng rng(mix_seed(seed ^ hash_string(tgt_lang)));
  Template out = tpl;
  for (int i = 0; i < tpl.length(); ++i) {
    if (i == tpl.mask_index) continue;
    const int sem = corpus.to_semantic(src_lang, tpl.ids[i]);  // errors on unmapped tokens
    out.ids[i] = corpus.to_surface(tgt_lang, sem);
    if (rng.uniform() < corruption) {
      out.ids[i] = tgt.surface_lo + rng.uniform_int(0, tgt.surface_size - 1);
    }
  }
  return out;
}

// UniPrompt proper: tower split at p plus the configured label-word
// treatment over the discrete source-language template.
inline BuiltModel build_uniprompt(const PLMWeights& theta0, int split_p,
                                  const BaselineTemplateConfig& tc, const FewShotSplit& split,
                                  LabelWordKind verbalizer, std::uint64_t init_seed,
                                  const PLMWeights* template_tower_source = nullptr) {
  BuiltModel built;
  built.model = split_model(theta0, split_p);
  built.tpl = tc.source_template;
  built.tpl.validate(kMaskTokenId, theta0.cfg.vocab_size);
  TwoTowerModel& m = built.model;
  if (template_tower_source) {
    if (static_cast<int>(template_tower_source->layers.size()) < split_p) {
      throw ConfigError("template tower source has fewer than p layers");
    }
    for (int i = 0; i < split_p; ++i) m.template_tower[i] = template_tower_source->layers[i];
  }
  switch (verbalizer) {
    case LabelWordKind::discrete:
      m.head = HeadKind::discrete_label_words;
      m.label_tokens = tc.label_tokens;
      m.label_words.kind = LabelWordKind::discrete;
      break;
    case LabelWordKind::soft_random:
      m.head = HeadKind::soft_label_words;
      m.label_words = init_random(tc.n_classes, theta0.cfg.d_model, init_seed);
      break;
    case LabelWordKind::soft_plm_init:
      m.head = HeadKind::soft_label_words;
      m.label_words = init_from_plm_head(theta0, tc.label_tokens);
      break;
    case LabelWordKind::soft_mean_init:
      m.head = HeadKind::soft_label_words;
      m.label_words = init_soft_label_words(theta0, built.tpl, split, tc.n_classes);
      break;
  }
  return built;
}

}  // namespace uniprompt
