#include <gtest/gtest.h>

#include "uniprompt/grad_check.hpp"
#include "uniprompt/two_tower.hpp"

using namespace uniprompt;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.split_p = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = 32;
  cfg.max_seq_len = 16;
  return cfg;
}

Template tiny_template() {
  Template t;
  t.ids = {5, 6, kMaskTokenId, 7};
  t.mask_index = 2;
  return t;
}

LabeledExample make_example(std::vector<int> ids, int label) {
  LabeledExample ex;
  ex.tokens = TokenSequence::from(std::move(ids));
  ex.label = label;
  ex.language = "en";
  return ex;
}

FewShotSplit split_with_k(int k, std::uint64_t seed) {
  Rng rng(seed);
  FewShotSplit s;
  s.k = k;
  s.seed = seed;
  for (int cls = 0; cls < 5; ++cls) {
    for (int i = 0; i < k; ++i) {
      std::vector<int> ids;
      for (int j = 0; j < 5; ++j) ids.push_back(rng.uniform_int(3, 31));
      s.train.push_back(make_example(std::move(ids), cls));
    }
  }
  rng.shuffle(s.train);
  return s;
}

// Independent two-pass oracle: encode each case separately through the plain
// stack and average outside the module under test.
Tensor mean_init_oracle(const PLMWeights& theta0, const Template& tpl, const FewShotSplit& split) {
  Tensor rows = Tensor::zeros({5, theta0.cfg.d_model});
  std::array<int, 5> counts{};
  for (const LabeledExample& ex : split.train) counts[ex.label]++;
  for (const LabeledExample& ex : split.train) {
    TokenSequence seq = concat_prompt_input(tpl, ex.tokens);
    Tensor h = encode_full_stack(theta0, seq);
    for (int j = 0; j < theta0.cfg.d_model; ++j) {
      rows.at(ex.label, j) += h.at(tpl.mask_index, j) / counts[ex.label];
    }
  }
  return rows;
}

}  // namespace

TEST(MeanInit, SingleShotRowsEqualTheExampleRepresentation) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 1);
  Template tpl = tiny_template();
  FewShotSplit split = split_with_k(1, 1);
  LabelWordMatrix W = init_soft_label_words(theta0, tpl, split);
  EXPECT_EQ(W.kind, LabelWordKind::soft_mean_init);
  for (const LabeledExample& ex : split.train) {
    Tensor h = encode_full_stack(theta0, concat_prompt_input(tpl, ex.tokens));
    for (int j = 0; j < theta0.cfg.d_model; ++j) {
      EXPECT_DOUBLE_EQ(W.rows.at(ex.label, j), h.at(tpl.mask_index, j));
    }
  }
}

TEST(MeanInit, TwoShotMatchesTwoPassOracle) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 2);
  Template tpl = tiny_template();
  FewShotSplit split = split_with_k(2, 2);
  LabelWordMatrix W = init_soft_label_words(theta0, tpl, split);
  EXPECT_LT(max_abs_diff(W.rows, mean_init_oracle(theta0, tpl, split)), 1e-12);
}

TEST(MeanInit, OrderInvariant) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 3);
  Template tpl = tiny_template();
  FewShotSplit split = split_with_k(3, 3);
  LabelWordMatrix a = init_soft_label_words(theta0, tpl, split);
  FewShotSplit reversed = split;
  std::reverse(reversed.train.begin(), reversed.train.end());
  LabelWordMatrix b = init_soft_label_words(theta0, tpl, reversed);
  EXPECT_LT(max_abs_diff(a.rows, b.rows), 1e-12);
}

TEST(MeanInit, EmptyClassNamesTheClass) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 4);
  Template tpl = tiny_template();
  FewShotSplit split = split_with_k(1, 4);
  split.train.erase(std::remove_if(split.train.begin(), split.train.end(),
                                   [](const LabeledExample& e) { return e.label == 3; }),
                    split.train.end());
  try {
    init_soft_label_words(theta0, tpl, split);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

// Immediately after init, Eq-style class probabilities computed through the
// module equal the ones recomputed from the oracle means.
TEST(MeanInit, InitIsExactlyTheStatedStatistic) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 5);
  Template tpl = tiny_template();
  FewShotSplit split = split_with_k(2, 5);
  LabelWordMatrix W = init_soft_label_words(theta0, tpl, split);
  Tensor oracle_rows = mean_init_oracle(theta0, tpl, split);
  for (const LabeledExample& ex : split.train) {
    Tensor h = encode_full_stack(theta0, concat_prompt_input(tpl, ex.tokens));
    Tensor h_mask = Tensor::zeros({1, theta0.cfg.d_model});
    for (int j = 0; j < theta0.cfg.d_model; ++j) h_mask.data[j] = h.at(tpl.mask_index, j);
    Tensor p_module = label_logits(h_mask, W);
    LabelWordMatrix W_oracle;
    W_oracle.rows = oracle_rows;
    Tensor p_oracle = label_logits(h_mask, W_oracle);
    EXPECT_LT(std::abs(p_module.data[ex.label] - p_oracle.data[ex.label]), 1e-9);
  }
}

TEST(InitRandom, DeterministicPerSeedAndSeedSensitive) {
  LabelWordMatrix a = init_random(5, 8, 7);
  LabelWordMatrix b = init_random(5, 8, 7);
  LabelWordMatrix c = init_random(5, 8, 8);
  EXPECT_TRUE(bitwise_equal(a.rows, b.rows));
  EXPECT_FALSE(bitwise_equal(a.rows, c.rows));
  EXPECT_EQ(a.kind, LabelWordKind::soft_random);
}

TEST(InitRandom, MeanNearZero) {
  // d * |Y| = 1000 samples, std 0.02: mean within 5 standard errors
  LabelWordMatrix W = init_random(5, 200, 11);
  double mean = 0.0;
  for (double x : W.rows.data) mean += x;
  mean /= W.rows.size();
  const double se = 0.02 / std::sqrt(static_cast<double>(W.rows.size()));
  EXPECT_LT(std::abs(mean), 5 * se);
}

TEST(PlmHeadInit, RowsEqualHeadColumns) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 6);
  std::vector<int> tokens = {4, 9, 9, 14, 20};
  LabelWordMatrix W = init_from_plm_head(theta0, tokens);
  EXPECT_EQ(W.kind, LabelWordKind::soft_plm_init);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(W.rows.at(i, j), theta0.mlm_w.at(j, tokens[i]));
  // duplicate tokens give duplicate rows
  for (int j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(W.rows.at(1, j), W.rows.at(2, j));
}

TEST(PlmHeadInit, DecoupledFromTheLiveHead) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 7);
  LabelWordMatrix W = init_from_plm_head(theta0, {4, 5, 6, 7, 8});
  const std::uint64_t head_before = hash_tensor(theta0.mlm_w);
  W.rows.data[0] += 1.0;
  EXPECT_EQ(hash_tensor(theta0.mlm_w), head_before);
}

TEST(PlmHeadInit, RejectsBadTokenIds) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 8);
  EXPECT_THROW(init_from_plm_head(theta0, {4, 5, 99, 7, 8}), ShapeError);
}

TEST(DiscreteLogits, EqualsGatherFromFullVocabScores) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 9);
  Rng rng(9);
  Tensor h_mask = Tensor::randn({1, 8}, 1.0, rng);
  std::vector<int> tokens = {4, 9, 14, 20, 25};
  Tensor restricted = discrete_label_logits(h_mask, theta0, tokens);
  Tensor full = Tensor::zeros({1, theta0.cfg.vocab_size});
  for (int v = 0; v < theta0.cfg.vocab_size; ++v) {
    double s = theta0.mlm_b.data[v];
    for (int j = 0; j < 8; ++j) s += h_mask.data[j] * theta0.mlm_w.at(j, v);
    full.data[v] = s;
  }
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(restricted.data[i], full.data[tokens[i]], 1e-12);
}

TEST(DiscreteLogits, InvariantUnderNonSelectedVocab) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 10);
  Rng rng(10);
  Tensor h_mask = Tensor::randn({1, 8}, 1.0, rng);
  std::vector<int> tokens = {4, 9, 14, 20, 25};
  Tensor before = discrete_label_logits(h_mask, theta0, tokens);
  for (int j = 0; j < 8; ++j) theta0.mlm_w.at(j, 30) += 3.0;  // untouched column
  theta0.mlm_b.data[31] -= 2.0;
  EXPECT_TRUE(bitwise_equal(discrete_label_logits(h_mask, theta0, tokens), before));
}

TEST(DiscreteLogits, SoftmaxMatchesRenormalizedFullSoftmax) {
  PLMWeights theta0 = init_plm(tiny_cfg(), 11);
  Rng rng(11);
  Tensor h_mask = Tensor::randn({1, 8}, 1.0, rng);
  std::vector<int> tokens = {4, 9, 14, 20, 25};
  Tensor restricted = softmax(discrete_label_logits(h_mask, theta0, tokens));
  // full softmax over the vocabulary, renormalized over the restricted set
  Tensor full = Tensor::zeros({1, theta0.cfg.vocab_size});
  for (int v = 0; v < theta0.cfg.vocab_size; ++v) {
    double s = theta0.mlm_b.data[v];
    for (int j = 0; j < 8; ++j) s += h_mask.data[j] * theta0.mlm_w.at(j, v);
    full.data[v] = s;
  }
  Tensor p_full = softmax(full);
  double z = 0.0;
  for (int tok : tokens) z += p_full.data[tok];
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(restricted.data[i], p_full.data[tokens[i]] / z, 1e-12);
}

TEST(LabelLogits, ZeroMatrixGivesUniform) {
  LabelWordMatrix W;
  W.rows = Tensor::zeros({5, 8});
  Rng rng(12);
  Tensor h = Tensor::randn({1, 8}, 1.0, rng);
  Tensor p = label_logits(h, W);
  for (double x : p.data) EXPECT_NEAR(x, 0.2, 1e-12);
}

TEST(LabelLogits, ClosedFormTwoClassCase) {
  // rows {+u, -u} with |u|^2 = 1 and h = u: sigmoid of 2 -> [0.8808, 0.1192]
  const int d = 4;
  Tensor u = Tensor::row({0.5, 0.5, 0.5, 0.5});
  LabelWordMatrix W;
  W.rows = Tensor::zeros({2, d});
  for (int j = 0; j < d; ++j) {
    W.rows.at(0, j) = u.data[j];
    W.rows.at(1, j) = -u.data[j];
  }
  Tensor p = label_logits(u, W);
  const double e = std::exp(1.0), einv = std::exp(-1.0);
  EXPECT_NEAR(p.data[0], e / (e + einv), 1e-12);
  EXPECT_NEAR(p.data[1], einv / (e + einv), 1e-12);
  EXPECT_NEAR(p.data[0], 0.8808, 5e-5);
  EXPECT_NEAR(p.data[1], 0.1192, 5e-5);
}

TEST(LabelLogits, PositiveScalingPreservesArgmax) {
  Rng rng(13);
  LabelWordMatrix W;
  W.rows = Tensor::randn({5, 8}, 1.0, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor h = Tensor::randn({1, 8}, 1.0, rng);
    Tensor scaled = h;
    const double c = 0.1 + 5.0 * rng.uniform();
    for (double& x : scaled.data) x *= c;
    EXPECT_EQ(predict(label_logits(h, W)), predict(label_logits(scaled, W)));
  }
}

TEST(LabelLogits, ProbabilitiesSumToOne) {
  Rng rng(14);
  LabelWordMatrix W;
  W.rows = Tensor::randn({5, 8}, 2.0, rng);
  Tensor p = label_logits(Tensor::randn({1, 8}, 2.0, rng), W);
  double sum = 0.0;
  for (double x : p.data) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(LabelLogits, WidthMismatchIsError) {
  LabelWordMatrix W;
  W.rows = Tensor::zeros({5, 8});
  EXPECT_THROW(label_logits(Tensor::zeros({1, 7}), W), ShapeError);
}

TEST(LabelLogits, GradientThroughScoresTight) {
  Rng rng(15);
  Tensor rows = Tensor::randn({5, 8}, 0.5, rng);
  auto f_h = [&](Tape& tp, Var h) {
    LabelWordMatrix W;
    W.rows = rows;
    Tape dummy(false);
    Var scores = matmul_nt(tp, h, tp.put(rows));
    return cross_entropy(tp, scores, 2);
  };
  Tensor h = Tensor::randn({1, 8}, 1.0, rng);
  EXPECT_LT(grad_check(f_h, h, 1e-6), 1e-6);

  Tensor h_fixed = Tensor::randn({1, 8}, 1.0, rng);
  auto f_w = [&](Tape& tp, Var w) {
    Var scores = matmul_nt(tp, tp.put(h_fixed), w);
    return cross_entropy(tp, scores, 1);
  };
  EXPECT_LT(grad_check(f_w, rows, 1e-6), 1e-6);
}

TEST(Predict, ArgmaxAndTieRule) {
  EXPECT_EQ(predict(Tensor::row({0.1, 0.7, 0.2})), 1);
  EXPECT_EQ(predict(Tensor::row({0.5, 0.5})), 0);  // ties go to the lowest index
}

TEST(Predict, MatchesArgmaxOfLogits) {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = Tensor::randn({1, 5}, 3.0, rng);
    Tensor probs = softmax(logits);
    int best = 0;
    for (int j = 1; j < 5; ++j)
      if (logits.data[j] > logits.data[best]) best = j;
    EXPECT_EQ(predict(probs), best);
  }
}
