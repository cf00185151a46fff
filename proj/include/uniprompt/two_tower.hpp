#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniprompt/checkpoint.hpp"
#include "uniprompt/verbalizer.hpp"

namespace uniprompt {

// Instrumentation: encoder-layer applications per tower. Cached inference
// must leave the template counter untouched.
struct TowerOpCounts {
  std::size_t template_tower_layers = 0;
  std::size_t context_tower_layers = 0;
  std::size_t fusion_layers = 0;
  void reset() { template_tower_layers = context_tower_layers = fusion_layers = 0; }
};

enum class HeadKind { soft_label_words, discrete_label_words, linear_classifier };

inline const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::soft_label_words: return "soft_label_words";
    case HeadKind::discrete_label_words: return "discrete_label_words";
    case HeadKind::linear_classifier: return "linear_classifier";
  }
  return "?";
}

inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "soft_label_words") return HeadKind::soft_label_words;
  if (s == "discrete_label_words") return HeadKind::discrete_label_words;
  if (s == "linear_classifier") return HeadKind::linear_classifier;
  throw ConfigError("unknown head kind: " + s);
}

// Template and context towers are independent copies of the bottom p encoder
// layers; the fusion tower holds the top n-p layers. Embeddings and the MLM
// head are shared. Bottom-p attention is segment-local by construction; only
// the fusion tower attends across template and context.
struct TwoTowerModel {
  ModelConfig cfg;
  int split_p = 0;
  Tensor tok_emb, pos_emb;
  std::vector<LayerParams> template_tower, context_tower, fusion_tower;
  Tensor mlm_w, mlm_b;

  HeadKind head = HeadKind::discrete_label_words;
  LabelWordMatrix label_words;      // soft_label_words head
  std::vector<int> label_tokens;    // discrete_label_words head
  Tensor soft_template_emb;         // rows > 0 when the template is artificial
  Tensor cls_w, cls_b;              // linear_classifier head

  mutable TowerOpCounts op_counts;

  template <typename F>
  void visit_params(F&& f) {
    f(std::string("emb.token"), tok_emb);
    f(std::string("emb.position"), pos_emb);
    for (std::size_t i = 0; i < template_tower.size(); ++i) {
      template_tower[i].visit("template_tower." + std::to_string(i), f);
    }
    for (std::size_t i = 0; i < context_tower.size(); ++i) {
      context_tower[i].visit("context_tower." + std::to_string(i), f);
    }
    for (std::size_t i = 0; i < fusion_tower.size(); ++i) {
      fusion_tower[i].visit("fusion_tower." + std::to_string(i), f);
    }
    f(std::string("mlm.w"), mlm_w);
    f(std::string("mlm.b"), mlm_b);
    if (head == HeadKind::soft_label_words) f(std::string("label_words"), label_words.rows);
    if (!soft_template_emb.empty()) f(std::string("soft_template"), soft_template_emb);
    if (head == HeadKind::linear_classifier) {
      f(std::string("cls.w"), cls_w);
      f(std::string("cls.b"), cls_b);
    }
  }

  template <typename F>
  void visit_params(F&& f) const {
    const_cast<TwoTowerModel*>(this)->visit_params(
        [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    visit_params([&](const std::string& name, const Tensor& t) {
      h = hash_string(name, h);
      h = hash_tensor(t, h);
    });
    return h;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    visit_params([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  static std::size_t per_layer_param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model, ff = cfg.d_ff;
    return 4 * (d * d + d)  // qkv and output projections with biases
           + 4 * d          // two layer norms
           + (d * ff + ff) + (ff * d + d);
  }
};

// Duplicates the bottom p layers of the pretrained stack as two independent
// towers and moves the top n-p layers into the fusion tower. All slices are
// bitwise copies of theta0 at construction.
inline TwoTowerModel split_model(const PLMWeights& theta0, int p) {
  const int n = theta0.cfg.n_layers;
  if (p < 0 || p > n - 1) {
    throw ConfigError("split point p=" + std::to_string(p) + " invalid for n=" + std::to_string(n) +
                      "; the fusion tower needs at least one layer");
  }
  TwoTowerModel m;
  m.cfg = theta0.cfg;
  m.cfg.split_p = p;
  m.split_p = p;
  m.tok_emb = theta0.tok_emb;
  m.pos_emb = theta0.pos_emb;
  for (int i = 0; i < p; ++i) {
    m.template_tower.push_back(theta0.layers[i]);
    m.context_tower.push_back(theta0.layers[i]);
  }
  for (int i = p; i < n; ++i) m.fusion_tower.push_back(theta0.layers[i]);
  m.mlm_w = theta0.mlm_w;
  m.mlm_b = theta0.mlm_b;
  return m;
}

struct ForwardOptions {
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
};

// Template embedding: discrete templates read the shared token table, the
// artificial origin reads trainable soft-token rows except at the mask slot.
// Template positions are 0..t-1.
inline Var embed_template_t(Tape& tp, Binder& bind, const TwoTowerModel& m, const Template& tpl) {
  tpl.validate(kMaskTokenId, m.cfg.vocab_size,
               m.soft_template_emb.empty() ? 0 : m.soft_template_emb.rows());
  const int t = tpl.length();
  std::vector<int> pos(t);
  for (int i = 0; i < t; ++i) pos[i] = i;
  if (t > m.cfg.max_seq_len) {
    throw ShapeError("template length " + std::to_string(t) + " exceeds max_seq_len");
  }
  Var pos_rows = gather_rows(tp, bind(m.pos_emb), pos);
  if (tpl.origin == TemplateOrigin::discrete_source_language) {
    return add(tp, gather_rows(tp, bind(m.tok_emb), tpl.ids), pos_rows);
  }
  // stitch soft rows around the mask token's real embedding
  Var soft = bind(m.soft_template_emb);
  Var tok = bind(m.tok_emb);
  std::optional<Var> acc;
  auto append = [&](Var rows) { acc = acc ? concat_rows(tp, *acc, rows) : rows; };
  int i = 0;
  while (i < t) {
    if (i == tpl.mask_index) {
      append(gather_rows(tp, tok, {kMaskTokenId}));
      ++i;
      continue;
    }
    std::vector<int> slots;
    while (i < t && i != tpl.mask_index) slots.push_back(tpl.ids[i++]);
    append(gather_rows(tp, soft, slots));
  }
  return add(tp, *acc, pos_rows);
}

inline Var encode_template_t(Tape& tp, Binder& bind, const TwoTowerModel& m, const Template& tpl,
                             const ForwardOptions& opt = {}) {
  Var h = embed_template_t(tp, bind, m, tpl);
  LayerRunOptions lro;
  lro.dropout = opt.dropout;
  lro.dropout_rng = opt.dropout_rng;
  h = run_layers_t(tp, bind, m.template_tower, h, {}, m.cfg, lro);
  m.op_counts.template_tower_layers += m.template_tower.size();
  return h;
}

// Context tower over a context whose positions must already be offset to
// t..t+s-1. pad_mask, when given, marks padding appended to the context.
inline Var encode_context_t(Tape& tp, Binder& bind, const TwoTowerModel& m,
                            const TokenSequence& ctx, const std::vector<char>& pad_mask,
                            const ForwardOptions& opt = {}) {
  ctx.validate(m.cfg);
  Var h = embed_t(tp, bind, m.tok_emb, m.pos_emb, ctx);
  LayerRunOptions lro;
  lro.dropout = opt.dropout;
  lro.dropout_rng = opt.dropout_rng;
  h = run_layers_t(tp, bind, m.context_tower, h, pad_mask, m.cfg, lro);
  m.op_counts.context_tower_layers += m.context_tower.size();
  return h;
}

// Splices template representations before context representations and runs
// the fusion tower with full attention over both segments.
inline Var fuse_t(Tape& tp, Binder& bind, const TwoTowerModel& m, Var h_t, Var h_s,
                  const std::vector<char>& ctx_pad_mask, const ForwardOptions& opt = {}) {
  const int t_rows = tp.val(h_t).rows();
  const int t_cols = tp.val(h_t).cols();
  const int s_rows = tp.val(h_s).rows();
  Var h = h_t;
  std::vector<char> full_mask;
  if (s_rows > 0) {
    if (tp.val(h_s).cols() != t_cols) {
      throw ShapeError("fuse width mismatch: template " + shape_str(tp.val(h_t).shape) +
                       " vs context " + shape_str(tp.val(h_s).shape));
    }
    h = concat_rows(tp, h_t, h_s);
    if (!ctx_pad_mask.empty()) {
      full_mask.assign(t_rows, 0);
      full_mask.insert(full_mask.end(), ctx_pad_mask.begin(), ctx_pad_mask.end());
    }
  }
  LayerRunOptions lro;
  lro.dropout = opt.dropout;
  lro.dropout_rng = opt.dropout_rng;
  h = run_layers_t(tp, bind, m.fusion_tower, h, full_mask, m.cfg, lro);
  m.op_counts.fusion_layers += m.fusion_tower.size();
  return h;
}

// ---- plain (non-training) surface ---------------------------------------------

inline Tensor encode_template(const TwoTowerModel& m, const Template& tpl) {
  Tape tp(false);
  Binder bind(tp);
  return tp.val(encode_template_t(tp, bind, m, tpl));
}

inline Tensor encode_context(const TwoTowerModel& m, const TokenSequence& ctx,
                             const std::vector<char>& pad_mask = {}) {
  Tape tp(false);
  Binder bind(tp);
  return tp.val(encode_context_t(tp, bind, m, ctx, pad_mask));
}

inline Tensor fuse(const TwoTowerModel& m, const Tensor& h_t, const Tensor& h_s,
                   const std::vector<char>& ctx_pad_mask = {}) {
  Tape tp(false);
  Binder bind(tp);
  Var hs = h_s.rank() == 2 && h_s.rows() == 0 ? tp.put(Tensor::zeros({0, h_t.cols()})) : tp.put(h_s);
  return tp.val(fuse_t(tp, bind, m, tp.put(h_t), hs, ctx_pad_mask));
}

// Context positions follow the template: t..t+s-1.
inline TokenSequence offset_context(const TokenSequence& raw, int template_len) {
  TokenSequence out;
  out.ids = raw.ids;
  out.positions.resize(raw.ids.size());
  for (std::size_t i = 0; i < raw.ids.size(); ++i) {
    out.positions[i] = template_len + static_cast<int>(i);
  }
  return out;
}

struct ForwardResult {
  Tensor h;       // (t+s) x d
  Tensor h_mask;  // 1 x d, the mask-token row
};

inline Var pick_mask_row(Tape& tp, Var h, int mask_index) {
  return slice_rows(tp, h, mask_index, mask_index + 1);
}

inline Var forward_t(Tape& tp, Binder& bind, const TwoTowerModel& m, const Template& tpl,
                     const TokenSequence& raw_ctx, const ForwardOptions& opt = {}) {
  Var h_t = encode_template_t(tp, bind, m, tpl, opt);
  if (raw_ctx.ids.empty()) return fuse_t(tp, bind, m, h_t, tp.put(Tensor::zeros({0, m.cfg.d_model})), {}, opt);
  Var h_s = encode_context_t(tp, bind, m, offset_context(raw_ctx, tpl.length()), {}, opt);
  return fuse_t(tp, bind, m, h_t, h_s, {}, opt);
}

// Full two-tower forward; the context is given with local positions and is
// shifted behind the template here.
inline ForwardResult forward(const TwoTowerModel& m, const Template& tpl,
                             const TokenSequence& raw_ctx) {
  Tape tp(false);
  Binder bind(tp);
  Var h = forward_t(tp, bind, m, tpl, raw_ctx);
  ForwardResult r;
  r.h = tp.val(h);
  r.h_mask = tp.val(pick_mask_row(tp, h, tpl.mask_index));
  return r;
}

// ---- template output cache ------------------------------------------------------

struct TemplateCache {
  Tensor h_template;
  std::uint64_t template_hash = 0;
  std::uint64_t weights_version = 0;
  int mask_index = -1;
};

inline std::uint64_t template_token_hash(const Template& tpl) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64(tpl.ids.data(), tpl.ids.size() * sizeof(int), h);
  h = fnv1a64(&tpl.mask_index, sizeof(tpl.mask_index), h);
  const int origin = static_cast<int>(tpl.origin);
  h = fnv1a64(&origin, sizeof(origin), h);
  return h;
}

// Hash of exactly the weights the template representation depends on: the
// token-embedding rows it reads (or the soft-token matrix), the position rows
// 0..t-1, and every template-tower layer parameter.
inline std::uint64_t template_weights_version(const TwoTowerModel& m, const Template& tpl) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64(&m.split_p, sizeof(m.split_p), h);
  if (tpl.origin == TemplateOrigin::discrete_source_language) {
    for (int id : tpl.ids) {
      const double* row = &m.tok_emb.data[static_cast<std::size_t>(id) * m.cfg.d_model];
      h = fnv1a64(row, sizeof(double) * m.cfg.d_model, h);
    }
  } else {
    h = hash_tensor(m.soft_template_emb, h);
    const double* row = &m.tok_emb.data[static_cast<std::size_t>(kMaskTokenId) * m.cfg.d_model];
    h = fnv1a64(row, sizeof(double) * m.cfg.d_model, h);
  }
  for (int i = 0; i < tpl.length(); ++i) {
    const double* row = &m.pos_emb.data[static_cast<std::size_t>(i) * m.cfg.d_model];
    h = fnv1a64(row, sizeof(double) * m.cfg.d_model, h);
  }
  TwoTowerModel& mm = const_cast<TwoTowerModel&>(m);
  for (std::size_t i = 0; i < mm.template_tower.size(); ++i) {
    mm.template_tower[i].visit("t" + std::to_string(i), [&](const std::string& name, Tensor& t) {
      h = hash_string(name, h);
      h = hash_tensor(t, h);
    });
  }
  return h;
}

inline TemplateCache build_cache(const TwoTowerModel& m, const Template& tpl) {
  TemplateCache cache;
  cache.h_template = encode_template(m, tpl);
  cache.template_hash = template_token_hash(tpl);
  cache.weights_version = template_weights_version(m, tpl);
  cache.mask_index = tpl.mask_index;
  return cache;
}

// Inference with the precomputed template representation. A stale cache is an
// explicit error, never a silent recompute.
inline ForwardResult forward_with_cache(const TwoTowerModel& m, const TemplateCache& cache,
                                        const Template& tpl, const TokenSequence& raw_ctx) {
  if (cache.template_hash != template_token_hash(tpl) ||
      cache.weights_version != template_weights_version(m, tpl)) {
    throw CacheError("template cache is stale for the current template/weights");
  }
  Tape tp(false);
  Binder bind(tp);
  Var h_t = tp.put(cache.h_template);
  Var h;
  if (raw_ctx.ids.empty()) {
    h = fuse_t(tp, bind, m, h_t, tp.put(Tensor::zeros({0, m.cfg.d_model})), {});
  } else {
    Var h_s = encode_context_t(tp, bind, m, offset_context(raw_ctx, cache.h_template.rows()), {});
    h = fuse_t(tp, bind, m, h_t, h_s, {});
  }
  ForwardResult r;
  r.h = tp.val(h);
  r.h_mask = tp.val(pick_mask_row(tp, h, cache.mask_index));
  return r;
}

// ---- classification scores -------------------------------------------------------

// Raw class scores (pre-softmax) for one example under the model's head.
inline Var example_scores_t(Tape& tp, Binder& bind, const TwoTowerModel& m, const Template& tpl,
                            const TokenSequence& raw_ctx, const ForwardOptions& opt = {}) {
  if (m.head == HeadKind::linear_classifier) {
    // no template: plain stack over the context, mean-pooled, linear head
    TokenSequence ctx = raw_ctx;
    ctx.positions.resize(ctx.ids.size());
    for (std::size_t i = 0; i < ctx.ids.size(); ++i) ctx.positions[i] = static_cast<int>(i);
    Var h = embed_t(tp, bind, m.tok_emb, m.pos_emb, ctx);
    LayerRunOptions lro;
    lro.dropout = opt.dropout;
    lro.dropout_rng = opt.dropout_rng;
    h = run_layers_t(tp, bind, m.context_tower, h, {}, m.cfg, lro);
    m.op_counts.context_tower_layers += m.context_tower.size();
    h = run_layers_t(tp, bind, m.fusion_tower, h, {}, m.cfg, lro);
    m.op_counts.fusion_layers += m.fusion_tower.size();
    Var pooled = mean_rows(tp, h);
    return add_row(tp, matmul_nt(tp, pooled, bind(m.cls_w)), bind(m.cls_b));
  }
  Var h = forward_t(tp, bind, m, tpl, raw_ctx, opt);
  Var h_mask = pick_mask_row(tp, h, tpl.mask_index);
  if (m.head == HeadKind::soft_label_words) {
    m.label_words.validate(m.cfg.d_model);
    return label_scores_t(tp, bind, h_mask, m.label_words);
  }
  Var full = add_row(tp, matmul(tp, h_mask, bind(m.mlm_w)), bind(m.mlm_b));
  return gather_entries(tp, full, m.label_tokens);
}

// Eq-style class probabilities for one example, optionally through the cache.
inline Tensor class_probabilities(const TwoTowerModel& m, const Template& tpl,
                                  const TokenSequence& raw_ctx,
                                  const TemplateCache* cache = nullptr) {
  if (m.head == HeadKind::linear_classifier || cache == nullptr) {
    Tape tp(false);
    Binder bind(tp);
    Var scores = example_scores_t(tp, bind, m, tpl, raw_ctx);
    return tp.val(softmax_rows(tp, scores));
  }
  ForwardResult r = forward_with_cache(m, *cache, tpl, raw_ctx);
  Tensor scores;
  if (m.head == HeadKind::soft_label_words) {
    m.label_words.validate(m.cfg.d_model);
    return label_logits(r.h_mask, m.label_words);
  }
  scores = discrete_label_logits(r.h_mask, m.mlm_w, m.mlm_b, m.label_tokens);
  Tape tp(false);
  return tp.val(softmax_rows(tp, tp.put(scores)));
}

// ---- checkpoint adapters ----------------------------------------------------------

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"n_layers", cfg.n_layers},   {"split_p", cfg.split_p},
                        {"d_model", cfg.d_model},     {"n_heads", cfg.n_heads},
                        {"d_ff", cfg.d_ff},           {"vocab_size", cfg.vocab_size},
                        {"max_seq_len", cfg.max_seq_len}, {"ln_eps", cfg.ln_eps}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.split_p = j.at("split_p").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.ln_eps = j.at("ln_eps").get<double>();
  return cfg;
}

inline Checkpoint to_checkpoint(const PLMWeights& w, nlohmann::json extra_meta = {}) {
  Checkpoint ck;
  nlohmann::json meta = std::move(extra_meta);
  meta["format"] = "plm";
  meta["config"] = config_to_json(w.cfg);
  ck.meta_json = meta.dump();
  w.visit_params([&](const std::string& name, const Tensor& t) { ck.params.emplace_back(name, t); });
  return ck;
}

inline PLMWeights plm_from_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
  if (meta.at("format") != "plm") throw DataError("checkpoint is not a plain encoder checkpoint");
  PLMWeights w;
  w.cfg = config_from_json(meta.at("config"));
  w.cfg.validate();
  w.layers.resize(w.cfg.n_layers);
  for (auto& lp : w.layers) lp = LayerParams{};
  std::size_t cursor = 0;
  w.visit_params([&](const std::string& name, Tensor& t) {
    if (cursor >= ck.params.size() || ck.params[cursor].first != name) {
      throw DataError("checkpoint parameter order mismatch at '" + name + "'");
    }
    t = ck.params[cursor].second;
    ++cursor;
  });
  if (cursor != ck.params.size()) throw DataError("checkpoint holds unexpected extra parameters");
  return w;
}

inline Checkpoint to_checkpoint(const TwoTowerModel& m, nlohmann::json extra_meta = {}) {
  Checkpoint ck;
  nlohmann::json meta = std::move(extra_meta);
  meta["format"] = "two_tower";
  meta["config"] = config_to_json(m.cfg);
  meta["split_p"] = m.split_p;
  meta["head"] = to_string(m.head);
  meta["label_kind"] = to_string(m.label_words.kind);
  meta["label_tokens"] = m.label_tokens;
  ck.meta_json = meta.dump();
  m.visit_params([&](const std::string& name, const Tensor& t) { ck.params.emplace_back(name, t); });
  return ck;
}

inline TwoTowerModel model_from_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
  if (meta.at("format") != "two_tower") throw DataError("checkpoint is not a two-tower checkpoint");
  TwoTowerModel m;
  m.cfg = config_from_json(meta.at("config"));
  m.cfg.validate();
  m.split_p = meta.at("split_p").get<int>();
  m.head = head_kind_from_string(meta.at("head").get<std::string>());
  m.label_words.kind = label_word_kind_from_string(meta.at("label_kind").get<std::string>());
  m.label_tokens = meta.at("label_tokens").get<std::vector<int>>();
  m.template_tower.resize(m.split_p);
  m.context_tower.resize(m.split_p);
  m.fusion_tower.resize(m.cfg.n_layers - m.split_p);

  // optional tensors are present in the blob list iff they were visited
  std::size_t cursor = 0;
  auto peek_is = [&](const std::string& name) {
    return cursor < ck.params.size() && ck.params[cursor].first == name;
  };
  m.visit_params([&](const std::string& name, Tensor& t) {
    if (!peek_is(name)) throw DataError("checkpoint parameter order mismatch at '" + name + "'");
    t = ck.params[cursor].second;
    ++cursor;
  });
  // soft_template / cls heads appear after the fixed prefix when present
  while (cursor < ck.params.size()) {
    const auto& [name, t] = ck.params[cursor];
    if (name == "soft_template") {
      m.soft_template_emb = t;
    } else if (name == "cls.w") {
      m.cls_w = t;
    } else if (name == "cls.b") {
      m.cls_b = t;
    } else {
      throw DataError("unexpected checkpoint parameter '" + name + "'");
    }
    ++cursor;
  }
  return m;
}

}  // namespace uniprompt
