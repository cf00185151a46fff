#pragma once

#include <string>
#include <vector>

#include "uniprompt/optimizer.hpp"
#include "uniprompt/tape.hpp"

namespace uniprompt {

// Fixed vocabulary prelude shared by every dataset and checkpoint.
inline constexpr int kPadTokenId = 0;
inline constexpr int kUnkTokenId = 1;
inline constexpr int kMaskTokenId = 2;

struct ModelConfig {
  int n_layers = 4;
  int split_p = 3;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  int vocab_size = 2048;
  int max_seq_len = 64;
  double ln_eps = 1e-5;

  // The full-scale reference this miniature stands in for uses n_layers=12,
  // split_p=9, max_seq_len=512 on a 270M-parameter multilingual encoder.
  static ModelConfig desk_default() { return ModelConfig{}; }

  void validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (split_p < 0 || split_p > n_layers - 1) {
      throw ConfigError("split_p must satisfy 0 <= p <= n-1 (the fusion tower needs at least one "
                        "layer); got p=" + std::to_string(split_p) + ", n=" + std::to_string(n_layers));
    }
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("d_model must be a positive multiple of n_heads");
    }
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
    if (vocab_size < 4) throw ConfigError("vocab_size too small");
    if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
    if (ln_eps <= 0) throw ConfigError("ln_eps must be positive");
  }
};

// Pre-norm self-attention + feed-forward block parameters.
struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;

  static LayerParams init(int d, int ff, Rng& rng) {
    LayerParams p;
    p.wq = Tensor::randn({d, d}, 0.02, rng);
    p.bq = Tensor::zeros({1, d});
    p.wk = Tensor::randn({d, d}, 0.02, rng);
    p.bk = Tensor::zeros({1, d});
    p.wv = Tensor::randn({d, d}, 0.02, rng);
    p.bv = Tensor::zeros({1, d});
    p.wo = Tensor::randn({d, d}, 0.02, rng);
    p.bo = Tensor::zeros({1, d});
    p.ln1_g = Tensor::full({1, d}, 1.0);
    p.ln1_b = Tensor::zeros({1, d});
    p.ln2_g = Tensor::full({1, d}, 1.0);
    p.ln2_b = Tensor::zeros({1, d});
    p.w1 = Tensor::randn({d, ff}, 0.02, rng);
    p.b1 = Tensor::zeros({1, ff});
    p.w2 = Tensor::randn({ff, d}, 0.02, rng);
    p.b2 = Tensor::zeros({1, d});
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wq", wq);
    f(prefix + ".bq", bq);
    f(prefix + ".wk", wk);
    f(prefix + ".bk", bk);
    f(prefix + ".wv", wv);
    f(prefix + ".bv", bv);
    f(prefix + ".wo", wo);
    f(prefix + ".bo", bo);
    f(prefix + ".ln1_g", ln1_g);
    f(prefix + ".ln1_b", ln1_b);
    f(prefix + ".ln2_g", ln2_g);
    f(prefix + ".ln2_b", ln2_b);
    f(prefix + ".w1", w1);
    f(prefix + ".b1", b1);
    f(prefix + ".w2", w2);
    f(prefix + ".b2", b2);
  }
};

// All parameters of the pretrained encoder: embeddings, n layers, MLM head.
struct PLMWeights {
  ModelConfig cfg;
  Tensor tok_emb;  // vocab x d
  Tensor pos_emb;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Tensor mlm_w;  // d x vocab
  Tensor mlm_b;  // 1 x vocab

  template <typename F>
  void visit_params(F&& f) {
    f(std::string("emb.token"), tok_emb);
    f(std::string("emb.position"), pos_emb);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].visit("layer." + std::to_string(i), f);
    }
    f(std::string("mlm.w"), mlm_w);
    f(std::string("mlm.b"), mlm_b);
  }

  template <typename F>
  void visit_params(F&& f) const {
    const_cast<PLMWeights*>(this)->visit_params(
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
};

inline PLMWeights init_plm(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed));
  PLMWeights w;
  w.cfg = cfg;
  w.tok_emb = Tensor::randn({cfg.vocab_size, cfg.d_model}, 0.02, rng);
  w.pos_emb = Tensor::randn({cfg.max_seq_len, cfg.d_model}, 0.02, rng);
  for (int i = 0; i < cfg.n_layers; ++i) w.layers.push_back(LayerParams::init(cfg.d_model, cfg.d_ff, rng));
  w.mlm_w = Tensor::randn({cfg.d_model, cfg.vocab_size}, 0.02, rng);
  w.mlm_b = Tensor::zeros({1, cfg.vocab_size});
  return w;
}

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> positions;

  static TokenSequence from(std::vector<int> ids, int start_pos = 0) {
    TokenSequence s;
    s.positions.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) s.positions[i] = start_pos + static_cast<int>(i);
    s.ids = std::move(ids);
    return s;
  }

  int length() const { return static_cast<int>(ids.size()); }

  void validate(const ModelConfig& cfg) const {
    if (ids.size() != positions.size()) {
      throw ShapeError("token/position id lists differ in length");
    }
    if (static_cast<int>(ids.size()) > cfg.max_seq_len) {
      throw ShapeError("sequence length " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                       std::to_string(cfg.max_seq_len));
    }
    for (int id : ids) {
      if (id < 0 || id >= cfg.vocab_size) {
        throw ShapeError("token id " + std::to_string(id) + " outside vocab [0," +
                         std::to_string(cfg.vocab_size) + ")");
      }
    }
    for (int p : positions) {
      if (p < 0 || p >= cfg.max_seq_len) {
        throw ShapeError("position id " + std::to_string(p) + " outside [0," +
                         std::to_string(cfg.max_seq_len) + ")");
      }
    }
  }
};

enum class TemplateOrigin { discrete_source_language, artificial_soft_tokens };

// Prompt template: a token sequence with exactly one mask position. For the
// artificial origin, non-mask entries index rows of a trainable soft-token
// matrix instead of the vocabulary.
struct Template {
  std::vector<int> ids;
  int mask_index = -1;
  TemplateOrigin origin = TemplateOrigin::discrete_source_language;

  int length() const { return static_cast<int>(ids.size()); }

  void validate(int mask_token_id, int vocab_size, int n_soft_slots = 0) const {
    if (ids.empty()) throw ConfigError("template must be nonempty");
    if (mask_index < 0 || mask_index >= length()) {
      throw ConfigError("template mask_index " + std::to_string(mask_index) + " out of range");
    }
    if (ids[mask_index] != mask_token_id) {
      throw ConfigError("template mask position does not hold the mask token");
    }
    for (int i = 0; i < length(); ++i) {
      if (i == mask_index) continue;
      if (origin == TemplateOrigin::discrete_source_language) {
        if (ids[i] == mask_token_id) throw ConfigError("template holds more than one mask token");
        if (ids[i] < 0 || ids[i] >= vocab_size) {
          throw ConfigError("template token id " + std::to_string(ids[i]) + " outside vocab");
        }
      } else {
        if (ids[i] < 0 || ids[i] >= n_soft_slots) {
          throw ConfigError("soft template slot " + std::to_string(ids[i]) + " outside [0," +
                            std::to_string(n_soft_slots) + ")");
        }
      }
    }
  }
};

// ---- forward building blocks -------------------------------------------------

inline Var embed_t(Tape& tp, Binder& bind, const Tensor& tok_emb, const Tensor& pos_emb,
                   const TokenSequence& seq) {
  Var tok = gather_rows(tp, bind(tok_emb), seq.ids);
  Var pos = gather_rows(tp, bind(pos_emb), seq.positions);
  return add(tp, tok, pos);
}

// Token embedding + position embedding per position.
inline Tensor embed(const TokenSequence& seq, const PLMWeights& w) {
  seq.validate(w.cfg);
  Tape tp(false);
  Binder bind(tp);
  return tp.val(embed_t(tp, bind, w.tok_emb, w.pos_emb, seq));
}

struct LayerRunOptions {
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  // When set, the per-head attention probability matrices are copied here.
  std::vector<Tensor>* attn_probs = nullptr;
};

// One pre-norm encoder block. pad_mask marks padding positions (true = pad);
// padded keys receive no attention weight from any query.
inline Var encoder_layer_t(Tape& tp, Binder& bind, const LayerParams& lp, Var h,
                           const std::vector<char>& pad_mask, const ModelConfig& cfg,
                           const LayerRunOptions& opt = {}) {
  const Tensor& hv = tp.val(h);
  const int len = hv.rows();
  const int d = hv.cols();
  if (len < 1) throw ShapeError("encoder layer on empty sequence");
  if (d != cfg.d_model) {
    throw ShapeError("encoder layer width " + std::to_string(d) + " vs d_model " +
                     std::to_string(cfg.d_model));
  }
  if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != len) {
    throw ShapeError("pad mask length " + std::to_string(pad_mask.size()) + " vs sequence " +
                     std::to_string(len));
  }
  bool any_real = pad_mask.empty();
  for (char m : pad_mask)
    if (!m) any_real = true;
  if (!any_real) throw ShapeError("encoder layer input is entirely padding");

  const int nh = cfg.n_heads;
  const int dh = d / nh;
  const std::vector<char>* key_mask = pad_mask.empty() ? nullptr : &pad_mask;

  Var xn = layer_norm(tp, h, bind(lp.ln1_g), bind(lp.ln1_b), cfg.ln_eps);
  Var q = add_row(tp, matmul(tp, xn, bind(lp.wq)), bind(lp.bq));
  Var k = add_row(tp, matmul(tp, xn, bind(lp.wk)), bind(lp.bk));
  Var v = add_row(tp, matmul(tp, xn, bind(lp.wv)), bind(lp.bv));

  std::vector<Var> mixed;
  mixed.reserve(nh);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int hd = 0; hd < nh; ++hd) {
    Var qh = slice_cols(tp, q, hd * dh, (hd + 1) * dh);
    Var kh = slice_cols(tp, k, hd * dh, (hd + 1) * dh);
    Var vh = slice_cols(tp, v, hd * dh, (hd + 1) * dh);
    Var scores = scale(tp, matmul_nt(tp, qh, kh), inv_sqrt_dh);
    Var probs = softmax_rows(tp, scores, key_mask);
    if (opt.attn_probs) opt.attn_probs->push_back(tp.val(probs));
    mixed.push_back(matmul(tp, probs, vh));
  }
  Var mix = nh == 1 ? mixed[0] : concat_cols(tp, mixed);
  Var attn = add_row(tp, matmul(tp, mix, bind(lp.wo)), bind(lp.bo));
  if (opt.dropout > 0.0 && opt.dropout_rng) attn = dropout(tp, attn, opt.dropout, *opt.dropout_rng);
  Var h1 = add(tp, h, attn);

  Var x2 = layer_norm(tp, h1, bind(lp.ln2_g), bind(lp.ln2_b), cfg.ln_eps);
  Var ff = add_row(tp, matmul(tp, gelu(tp, add_row(tp, matmul(tp, x2, bind(lp.w1)), bind(lp.b1))),
                              bind(lp.w2)),
                   bind(lp.b2));
  if (opt.dropout > 0.0 && opt.dropout_rng) ff = dropout(tp, ff, opt.dropout, *opt.dropout_rng);
  return add(tp, h1, ff);
}

inline Tensor encoder_layer(const Tensor& h, const LayerParams& lp, const ModelConfig& cfg,
                            const std::vector<char>& pad_mask = {},
                            std::vector<Tensor>* attn_probs = nullptr) {
  Tape tp(false);
  Binder bind(tp);
  LayerRunOptions opt;
  opt.attn_probs = attn_probs;
  return tp.val(encoder_layer_t(tp, bind, lp, tp.put(h), pad_mask, cfg, opt));
}

inline Var run_layers_t(Tape& tp, Binder& bind, const std::vector<LayerParams>& layers, Var h,
                        const std::vector<char>& pad_mask, const ModelConfig& cfg,
                        const LayerRunOptions& opt = {}) {
  for (const LayerParams& lp : layers) h = encoder_layer_t(tp, bind, lp, h, pad_mask, cfg, opt);
  return h;
}

// Layers lo..hi of the stack, 1-based inclusive.
inline Tensor run_layers(const Tensor& h, const PLMWeights& w, int lo, int hi,
                         const std::vector<char>& pad_mask = {}) {
  const int n = static_cast<int>(w.layers.size());
  if (lo < 1 || hi > n || lo > hi) {
    throw ShapeError("layer range [" + std::to_string(lo) + ".." + std::to_string(hi) +
                     "] invalid for a " + std::to_string(n) + "-layer stack");
  }
  Tape tp(false);
  Binder bind(tp);
  Var v = tp.put(h);
  for (int i = lo; i <= hi; ++i) v = encoder_layer_t(tp, bind, w.layers[i - 1], v, pad_mask, w.cfg);
  return tp.val(v);
}

// Full plain-stack forward; returns final hidden states.
inline Tensor encode_full_stack(const PLMWeights& w, const TokenSequence& seq,
                                const std::vector<char>& pad_mask = {}) {
  Tensor h = embed(seq, w);
  return run_layers(h, w, 1, static_cast<int>(w.layers.size()), pad_mask);
}

// ---- masked language model pretraining ---------------------------------------

struct PretrainParams {
  int steps = 8000;
  int batch_size = 16;
  double learning_rate = 2e-3;
  double mlm_prob = 0.15;
  double dropout = 0.0;
  AdamParams adam{};
  int mask_token_id = 2;
  int random_token_lo = 3;  // random replacements are drawn from [lo, vocab)

  void validate() const {
    if (steps < 0 || batch_size < 1) throw ConfigError("pretraining steps/batch invalid");
    if (mlm_prob <= 0.0 || mlm_prob >= 1.0) throw ConfigError("mlm_prob must be in (0,1)");
  }
};

struct PretrainLog {
  double initial_loss = 0.0;  // first-step batch loss, before any update
  double final_loss = 0.0;    // mean over the last tenth of steps
  std::vector<double> losses;
};

namespace detail {

struct MaskedSeq {
  std::vector<int> input_ids;
  std::vector<int> masked_positions;
  std::vector<int> targets;
};

// 15% masking; of the chosen positions 80% become the mask token, 10% a
// random token, 10% stay unchanged. At least one position is always chosen.
inline MaskedSeq apply_mlm_masking(const TokenSequence& seq, const PretrainParams& pp,
                                   int vocab_size, Rng& rng) {
  MaskedSeq m;
  m.input_ids = seq.ids;
  for (int i = 0; i < seq.length(); ++i) {
    if (rng.uniform() < pp.mlm_prob) m.masked_positions.push_back(i);
  }
  if (m.masked_positions.empty()) m.masked_positions.push_back(rng.uniform_int(0, seq.length() - 1));
  for (int pos : m.masked_positions) {
    m.targets.push_back(seq.ids[pos]);
    const double r = rng.uniform();
    if (r < 0.8) {
      m.input_ids[pos] = pp.mask_token_id;
    } else if (r < 0.9) {
      m.input_ids[pos] = rng.uniform_int(pp.random_token_lo, vocab_size - 1);
    }
  }
  return m;
}

}  // namespace detail

// Mean cross-entropy over the masked positions of a batch.
inline Var mlm_batch_loss_t(Tape& tp, Binder& bind, PLMWeights& w,
                            const std::vector<const TokenSequence*>& batch,
                            const PretrainParams& pp, Rng& mask_rng, Rng* drop_rng) {
  Var total{};
  int n_masked = 0;
  for (const TokenSequence* seq : batch) {
    detail::MaskedSeq m = detail::apply_mlm_masking(*seq, pp, w.cfg.vocab_size, mask_rng);
    TokenSequence corrupted;
    corrupted.ids = m.input_ids;
    corrupted.positions = seq->positions;
    Var h = embed_t(tp, bind, w.tok_emb, w.pos_emb, corrupted);
    LayerRunOptions opt;
    opt.dropout = pp.dropout;
    opt.dropout_rng = drop_rng;
    h = run_layers_t(tp, bind, w.layers, h, {}, w.cfg, opt);
    Var rows = gather_rows(tp, h, m.masked_positions);
    Var logits = add_row(tp, matmul(tp, rows, bind(w.mlm_w)), bind(w.mlm_b));
    for (std::size_t i = 0; i < m.masked_positions.size(); ++i) {
      Var row = slice_rows(tp, logits, static_cast<int>(i), static_cast<int>(i) + 1);
      Var ce = cross_entropy(tp, row, m.targets[i]);
      total = total.valid() ? add(tp, total, ce) : ce;
      ++n_masked;
    }
  }
  return scale(tp, total, 1.0 / n_masked);
}

// Trains the miniature PLM with the masked-token objective. Deterministic per
// seed; steps == 0 returns the seeded random initialization unchanged.
inline PLMWeights pretrain_mlm(const std::vector<TokenSequence>& corpus, const ModelConfig& cfg,
                               const PretrainParams& pp, std::uint64_t seed,
                               PretrainLog* log = nullptr) {
  cfg.validate();
  pp.validate();
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  for (const TokenSequence& s : corpus) s.validate(cfg);

  PLMWeights w = init_plm(cfg, seed);
  if (pp.steps == 0) return w;

  Rng batch_rng(mix_seed(seed ^ 0x5eedb47cull));
  Rng mask_rng(mix_seed(seed ^ 0xa11a5ecull));
  Rng drop_rng(mix_seed(seed ^ 0xd407ull));
  Adam opt(pp.learning_rate, pp.adam);

  std::vector<double> losses;
  losses.reserve(pp.steps);
  for (int step = 1; step <= pp.steps; ++step) {
    std::vector<const TokenSequence*> batch;
    batch.reserve(pp.batch_size);
    for (int b = 0; b < pp.batch_size; ++b) {
      batch.push_back(&corpus[batch_rng.uniform_int(0, static_cast<int>(corpus.size()) - 1)]);
    }
    Tape tp(true);
    Binder bind(tp);
    Var loss = mlm_batch_loss_t(tp, bind, w, batch, pp, mask_rng,
                                pp.dropout > 0.0 ? &drop_rng : nullptr);
    losses.push_back(tp.scalar(loss));
    tp.backward(loss);

    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    w.visit_params([&](const std::string&, Tensor& t) {
      params.push_back(&t);
      grads.push_back(bind.grad_of(t));
    });
    opt.step(params, grads);
  }

  if (log) {
    log->losses = losses;
    log->initial_loss = losses.front();
    const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
    double sum = 0.0;
    for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) sum += losses[i];
    log->final_loss = sum / tail;
  }
  return w;
}

}  // namespace uniprompt
