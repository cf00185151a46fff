#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "uniprompt/two_tower.hpp"

namespace uniprompt {

struct Hyperparams {
  double learning_rate = 1e-3;  // paper-scale reference value is 1e-5
  int batch_size = 8;
  int max_steps = 1000;
  int eval_every = 100;
  AdamParams adam{};
  double dropout = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1 || max_steps < 1 || eval_every < 1) {
      throw ConfigError("batch_size, max_steps and eval_every must be positive");
    }
    if (max_steps % eval_every != 0) {
      throw ConfigError("eval_every=" + std::to_string(eval_every) + " must divide max_steps=" +
                        std::to_string(max_steps));
    }
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0,1)");
  }

  // Seed excluded: parity cares about the training recipe, not the run seed.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const double ds[] = {learning_rate, adam.beta1, adam.beta2, adam.eps, dropout};
    h = fnv1a64(ds, sizeof(ds), h);
    const int is[] = {batch_size, max_steps, eval_every};
    h = fnv1a64(is, sizeof(is), h);
    return h;
  }
};

struct TrainReport {
  std::vector<std::pair<int, double>> dev_curve;  // (step, dev accuracy %)
  int best_step = 0;
  double best_dev_accuracy = 0.0;
  std::string checkpoint_path;
  std::vector<double> loss_curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Shuffle-per-epoch batch stream over a tiny training set.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::uint64_t seed) : n_(n), rng_(mix_seed(seed ^ 0xba7c4e5ull)) {
    reshuffle();
  }

  std::vector<int> next(int batch_size) {
    std::vector<int> batch;
    batch.reserve(batch_size);
    while (static_cast<int>(batch.size()) < batch_size) {
      if (cursor_ == order_.size()) reshuffle();
      batch.push_back(order_[cursor_++]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = static_cast<int>(i);
    rng_.shuffle(order_);
    cursor_ = 0;
  }

  std::size_t n_;
  Rng rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

// Evaluation runs at checkpoint precision: parameter values are rounded
// through binary32 first, so a reloaded checkpoint reproduces every reported
// accuracy bitwise.
inline TwoTowerModel quantized_copy(const TwoTowerModel& m) {
  TwoTowerModel snap = m;
  snap.visit_params([](const std::string&, Tensor& t) { quantize_f32(t); });
  return snap;
}

inline std::vector<int> predictions(const TwoTowerModel& m, const Template& tpl,
                                    const std::vector<LabeledExample>& testset,
                                    bool use_cache = true) {
  if (testset.empty()) throw DataError("evaluation on an empty test set");
  std::vector<int> preds;
  preds.reserve(testset.size());
  if (m.head != HeadKind::linear_classifier && use_cache) {
    TemplateCache cache = build_cache(m, tpl);
    for (const LabeledExample& ex : testset) {
      preds.push_back(predict(class_probabilities(m, tpl, ex.tokens, &cache)));
    }
  } else {
    for (const LabeledExample& ex : testset) {
      preds.push_back(predict(class_probabilities(m, tpl, ex.tokens)));
    }
  }
  return preds;
}

// Accuracy percent; the cached and uncached paths agree exactly.
inline double evaluate(const TwoTowerModel& m, const Template& tpl,
                       const std::vector<LabeledExample>& testset, bool use_cache = true) {
  const std::vector<int> preds = predictions(m, tpl, testset, use_cache);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == testset[i].label;
  return 100.0 * correct / testset.size();
}

// Minibatch prompt tuning with periodic dev evaluation. Every parameter the
// model exposes is trainable; the best dev checkpoint is persisted to
// `checkpoint_path` and the live model keeps its end-of-training state.
inline TrainReport train(TwoTowerModel& model, const Template& tpl, const FewShotSplit& split,
                         const Hyperparams& hp, const std::string& checkpoint_path,
                         const nlohmann::json& checkpoint_meta = {}) {
  hp.validate();
  if (split.train.empty()) throw DataError("empty training split");
  if (split.dev.empty()) throw DataError("empty dev split");

  TrainReport report;
  report.checkpoint_path = checkpoint_path;
  BatchStream stream(split.train.size(), hp.seed);
  Rng drop_rng(mix_seed(hp.seed ^ 0xd409041ull));
  Adam opt(hp.learning_rate, hp.adam);

  bool have_best = false;
  for (int step = 1; step <= hp.max_steps; ++step) {
    const std::vector<int> batch = stream.next(hp.batch_size);
    Tape tp(true);
    Binder bind(tp);
    Var total{};
    for (int idx : batch) {
      const LabeledExample& ex = split.train[idx];
      ForwardOptions opt_fwd;
      opt_fwd.dropout = hp.dropout;
      opt_fwd.dropout_rng = &drop_rng;
      Var scores = example_scores_t(tp, bind, model, tpl, ex.tokens, opt_fwd);
      Var ce = cross_entropy(tp, scores, ex.label);
      total = total.valid() ? add(tp, total, ce) : ce;
    }
    Var loss = scale(tp, total, 1.0 / batch.size());
    double loss_value;
    try {
      loss_value = tp.scalar(loss);
      if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    report.loss_curve.push_back(loss_value);
    tp.backward(loss);

    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    model.visit_params([&](const std::string&, Tensor& t) {
      params.push_back(&t);
      grads.push_back(bind.grad_of(t));
    });
    opt.step(params, grads);

    if (step % hp.eval_every == 0) {
      TwoTowerModel snapshot = quantized_copy(model);
      const double dev_acc = evaluate(snapshot, tpl, split.dev, true);
      report.dev_curve.emplace_back(step, dev_acc);
      if (!have_best || dev_acc > report.best_dev_accuracy) {  // ties keep the earliest step
        have_best = true;
        report.best_dev_accuracy = dev_acc;
        report.best_step = step;
        if (!checkpoint_path.empty()) {
          nlohmann::json meta = checkpoint_meta;
          meta["best_step"] = step;
          meta["best_dev_accuracy"] = dev_acc;
          save_checkpoint(checkpoint_path, to_checkpoint(snapshot, std::move(meta)));
        }
      }
    }
  }

  report.initial_loss = report.loss_curve.front();
  const std::size_t tail = std::max<std::size_t>(1, report.loss_curve.size() / 10);
  double sum = 0.0;
  for (std::size_t i = report.loss_curve.size() - tail; i < report.loss_curve.size(); ++i) {
    sum += report.loss_curve[i];
  }
  report.final_loss = sum / tail;
  return report;
}

// ---- multi-seed aggregation ----------------------------------------------------

struct LangStats {
  double mean = 0.0;
  double stddev = 0.0;  // population, over seeds
  std::vector<double> per_seed;
};

struct ResultRecord {
  std::string method;
  int k = 0;
  std::map<std::string, LangStats> per_language;
};

inline LangStats stats_of(const std::vector<double>& values) {
  LangStats s;
  s.per_seed = values;
  for (double v : values) s.mean += v;
  s.mean /= values.size();
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / values.size());
  return s;
}

// Runs `run_one(seed)` for every seed (optionally on a small thread pool) and
// aggregates per-language mean/std. Results merge in seed order regardless of
// completion order, so the record is deterministic.
inline ResultRecord run_seeds(const std::string& method, int k,
                              const std::vector<std::uint64_t>& seeds,
                              const std::function<std::map<std::string, double>(std::uint64_t)>& run_one,
                              int jobs = 1) {
  if (seeds.empty()) throw ConfigError("run_seeds needs at least one seed");
  std::vector<std::map<std::string, double>> per_seed(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());

  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      try {
        per_seed[i] = run_one(seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mu;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next == seeds.size()) return;
            i = next++;
          }
          try {
            per_seed[i] = run_one(seeds[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error("seed " + std::to_string(seeds[i]) + " failed: " + e.what());
      }
    }
  }

  ResultRecord record;
  record.method = method;
  record.k = k;
  for (const auto& [lang, acc] : per_seed[0]) {
    std::vector<double> values;
    for (const auto& m : per_seed) values.push_back(m.at(lang));
    record.per_language[lang] = stats_of(values);
  }
  return record;
}

// Paired two-sided sign-flip test on the mean difference. Exhaustive when all
// 2^n flips fit in the resample budget, Monte Carlo otherwise.
inline double significance_test(const std::vector<double>& a, const std::vector<double>& b,
                                std::uint64_t seed = 0, int resamples = 10000) {
  if (a.size() != b.size() || a.empty()) {
    throw DataError("significance test needs paired samples of equal nonzero length");
  }
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double obs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    obs += d[i];
  }
  obs = std::abs(obs / n);
  constexpr double kTieTol = 1e-12;

  if (n < 63 && (1ull << n) <= static_cast<std::uint64_t>(resamples)) {
    const std::uint64_t total = 1ull << n;
    std::uint64_t hits = 0;
    for (std::uint64_t pattern = 0; pattern < total; ++pattern) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += (pattern >> i) & 1 ? -d[i] : d[i];
      if (std::abs(sum / n) >= obs - kTieTol) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  Rng rng(mix_seed(seed ^ 0x51931f1ca7ull));
  int hits = 0;
  for (int r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += rng.bernoulli(0.5) ? -d[i] : d[i];
    if (std::abs(sum / n) >= obs - kTieTol) ++hits;
  }
  return (1.0 + hits) / (1.0 + resamples);
}

}  // namespace uniprompt
