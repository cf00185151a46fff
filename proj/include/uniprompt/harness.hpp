#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uniprompt/baselines.hpp"
#include "uniprompt/config.hpp"
#include "uniprompt/report.hpp"

namespace uniprompt {

inline const std::vector<std::string> kKnownMethods = {
    "uniprompt", "vanilla_finetune", "english_prompt", "soft_prompt", "translation_prompt"};

struct ExperimentConfig {
  ModelConfig model;
  GenParams gen;
  Hyperparams hp;
  PretrainParams pretrain;
  std::uint64_t pretrain_seed = 11;

  std::vector<std::string> methods = {"uniprompt"};
  std::vector<int> k_values = {4, 8, 16, 32};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string source_language = "en";

  std::string verbalizer = "soft-mean-init";
  std::string tower_init = "multilingual";  // random | monolingual | multilingual
  int soft_template_tokens = 4;
  double corruption = 0.1;
  int jobs = 1;

  std::string out_dir = "out";
  std::string data_dir;    // default: <out_dir>/data
  std::string theta_path;  // default: <out_dir>/theta0.ckpt

  std::vector<std::string> target_languages() const {
    std::vector<std::string> out;
    for (const std::string& l : gen.languages) {
      if (l != source_language) out.push_back(l);
    }
    return out;
  }

  void validate() const {
    model.validate();
    hp.validate();
    pretrain.validate();
    if (gen.languages.size() < 2) throw ConfigError("need at least two languages");
    bool has_source = false;
    for (const std::string& l : gen.languages) has_source |= l == source_language;
    if (!has_source) {
      throw ConfigError("source language '" + source_language + "' is not in the language list");
    }
    for (const std::string& m : methods) {
      bool known = false;
      for (const std::string& known_m : kKnownMethods) known |= m == known_m;
      if (!known) throw ConfigError("unknown method '" + m + "'");
    }
    if (methods.empty() || k_values.empty() || seeds.empty()) {
      throw ConfigError("methods, k and seeds must be nonempty");
    }
    for (int k : k_values) {
      if (k < 1) throw ConfigError("k values must be positive");
    }
    label_word_kind_from_string(verbalizer);  // validates the name
    if (tower_init != "random" && tower_init != "monolingual" && tower_init != "multilingual") {
      throw ConfigError("tower_init must be random, monolingual or multilingual");
    }
    if (soft_template_tokens < 1) throw ConfigError("soft_template_tokens must be >= 1");
    if (corruption < 0 || corruption > 1) throw ConfigError("corruption must be in [0,1]");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }

  static ExperimentConfig from_kv(std::map<std::string, std::string> kv) {
    KvReader r(std::move(kv));
    ExperimentConfig c;
    c.model.n_layers = r.get_int("n_layers", c.model.n_layers);
    c.model.split_p = r.get_int("split_p", c.model.split_p);
    c.model.d_model = r.get_int("d_model", c.model.d_model);
    c.model.n_heads = r.get_int("n_heads", c.model.n_heads);
    c.model.d_ff = r.get_int("d_ff", c.model.d_ff);
    c.model.max_seq_len = r.get_int("max_seq_len", c.model.max_seq_len);

    c.gen.languages = r.get_string_list("languages", c.gen.languages);
    c.gen.semantic_vocab_size = r.get_int("semantic_vocab", c.gen.semantic_vocab_size);
    c.gen.anchor_fraction = r.get_double("anchor_fraction", c.gen.anchor_fraction);
    c.gen.labeled_examples_total = r.get_int("labeled_total", c.gen.labeled_examples_total);
    c.gen.pretrain_sentences = r.get_int("pretrain_sentences", c.gen.pretrain_sentences);
    c.gen.seed = r.get_u64("data_seed", c.gen.seed);
    c.gen.valence_per_sentence = r.get_int("valence_per_sentence", c.gen.valence_per_sentence);
    c.gen.expressive_anchor_prob =
        r.get_double("expressive_anchor_prob", c.gen.expressive_anchor_prob);
    c.gen.expressive_anchor_noise =
        r.get_double("expressive_anchor_noise", c.gen.expressive_anchor_noise);
    c.source_language = r.get_string("source_language", c.source_language);

    c.methods = r.get_string_list("methods", c.methods);
    c.k_values = r.get_int_list("k", c.k_values);
    c.seeds = r.get_u64_list("seeds", c.seeds);
    c.verbalizer = r.get_string("verbalizer", c.verbalizer);
    c.tower_init = r.get_string("tower_init", c.tower_init);
    c.soft_template_tokens = r.get_int("soft_template_tokens", c.soft_template_tokens);
    c.corruption = r.get_double("corruption", c.corruption);
    c.jobs = r.get_int("jobs", c.jobs);

    c.hp.learning_rate = r.get_double("learning_rate", c.hp.learning_rate);
    c.hp.batch_size = r.get_int("batch_size", c.hp.batch_size);
    c.hp.max_steps = r.get_int("max_steps", c.hp.max_steps);
    c.hp.eval_every = r.get_int("eval_every", c.hp.eval_every);
    c.hp.dropout = r.get_double("dropout", c.hp.dropout);
    c.hp.adam.beta1 = r.get_double("adam_beta1", c.hp.adam.beta1);
    c.hp.adam.beta2 = r.get_double("adam_beta2", c.hp.adam.beta2);
    c.hp.adam.eps = r.get_double("adam_eps", c.hp.adam.eps);

    c.pretrain.steps = r.get_int("pretrain_steps", c.pretrain.steps);
    c.pretrain.batch_size = r.get_int("pretrain_batch", c.pretrain.batch_size);
    c.pretrain.learning_rate = r.get_double("pretrain_lr", c.pretrain.learning_rate);
    c.pretrain.dropout = r.get_double("pretrain_dropout", c.pretrain.dropout);
    c.pretrain.mlm_prob = r.get_double("mlm_prob", c.pretrain.mlm_prob);
    c.pretrain_seed = r.get_u64("pretrain_seed", c.pretrain_seed);

    c.out_dir = r.get_string("out_dir", c.out_dir);
    c.data_dir = r.get_string("data_dir", "");
    c.theta_path = r.get_string("theta_path", "");
    r.finish();
    c.validate();
    return c;
  }

  static ExperimentConfig from_file(const std::string& path,
                                    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    std::map<std::string, std::string> kv = parse_kv_file(path);
    for (const auto& [key, value] : overrides) kv[key] = value;
    return from_kv(std::move(kv));
  }

  std::string resolved_data_dir() const { return data_dir.empty() ? out_dir + "/data" : data_dir; }
  std::string resolved_theta_path() const {
    return theta_path.empty() ? out_dir + "/theta0.ckpt" : theta_path;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["model"] = config_to_json(model);
    j["languages"] = gen.languages;
    j["source_language"] = source_language;
    j["methods"] = methods;
    j["k"] = k_values;
    j["seeds"] = seeds;
    j["verbalizer"] = verbalizer;
    j["tower_init"] = tower_init;
    j["soft_template_tokens"] = soft_template_tokens;
    j["corruption"] = corruption;
    j["learning_rate"] = hp.learning_rate;
    j["batch_size"] = hp.batch_size;
    j["max_steps"] = hp.max_steps;
    j["eval_every"] = hp.eval_every;
    j["dropout"] = hp.dropout;
    j["pretrain_steps"] = pretrain.steps;
    j["pretrain_seed"] = pretrain_seed;
    j["data_seed"] = gen.seed;
    return j;
  }
};

// ---- data and checkpoint persistence -------------------------------------------

inline void write_corpus_dir(const std::string& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir);
  write_vocab(dir + "/vocab.txt", corpus.vocab);
  for (const auto& [lang, ds] : corpus.labeled) write_jsonl(dir + "/labeled_" + lang + ".jsonl", ds, corpus.vocab);
  Dataset pre;
  for (std::size_t i = 0; i < corpus.pretrain.size(); ++i) {
    LabeledExample ex;
    ex.tokens = corpus.pretrain[i];
    ex.label = 0;
    ex.language = corpus.pretrain_language[i];
    pre.items.push_back(std::move(ex));
  }
  // pretraining sentences are unlabeled; stars is written as 1 by convention
  write_jsonl(dir + "/pretrain.jsonl", pre, corpus.vocab);
  nlohmann::json manifest;
  manifest["languages"] = corpus.params.languages;
  manifest["gen_checksum"] = corpus.params.checksum();
  manifest["vocab_size"] = corpus.vocab.size();
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << "\n";
}

// The in-memory generator is the source of truth for bijections and layout,
// so loading a data directory regenerates from the recorded seed and verifies
// the manifest matches.
inline SyntheticCorpus load_or_generate_corpus(const GenParams& params, const std::string& dir) {
  SyntheticCorpus corpus = gen_corpus(params);
  const std::string manifest_path = dir + "/manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    nlohmann::json manifest;
    std::ifstream(manifest_path) >> manifest;
    if (manifest.at("gen_checksum").get<std::uint64_t>() != params.checksum()) {
      throw ConfigError("data directory " + dir + " was generated with different parameters; "
                        "remove it or change data_dir");
    }
  } else {
    write_corpus_dir(dir, corpus);
  }
  return corpus;
}

// ---- the experiment driver ------------------------------------------------------

struct RunArtifacts {
  TrainReport report;
  std::string checkpoint_path;
};

struct ExperimentOutcome {
  std::vector<RawRow> rows;
  ReportTable table;
  std::vector<nlohmann::json> errors;  // one entry per failed run
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::filesystem::create_directories(cfg_.out_dir);
    corpus_ = load_or_generate_corpus(cfg_.gen, cfg_.resolved_data_dir());
    model_cfg_ = cfg_.model;
    model_cfg_.vocab_size = corpus_.vocab.size();
    model_cfg_.validate();
  }

  const SyntheticCorpus& corpus() const { return corpus_; }
  const ModelConfig& model_config() const { return model_cfg_; }
  const ExperimentConfig& config() const { return cfg_; }

  // Multilingual theta0: loaded if the checkpoint exists, pretrained and
  // saved otherwise. Weights always pass through the checkpoint so every
  // invocation pattern sees identical binary32 values.
  const PLMWeights& theta0() {
    if (!theta0_) {
      const std::string path = cfg_.resolved_theta_path();
      if (!std::filesystem::exists(path)) {
        PretrainLog log;
        PLMWeights fresh = pretrain_mlm(corpus_.pretrain, model_cfg_, cfg_.pretrain, cfg_.pretrain_seed, &log);
        nlohmann::json meta;
        meta["initial_loss"] = log.initial_loss;
        meta["final_loss"] = log.final_loss;
        meta["pretrain_seed"] = cfg_.pretrain_seed;
        meta["corpus"] = "multilingual";
        save_checkpoint(path, to_checkpoint(fresh, meta));
      }
      theta0_ = plm_from_checkpoint(load_checkpoint(path));
      if (theta0_->cfg.vocab_size != model_cfg_.vocab_size) {
        throw ConfigError("checkpoint " + path + " does not match the current vocabulary");
      }
    }
    return *theta0_;
  }

  // Source-language-only pretrained variant for the tower-init ablation.
  const PLMWeights& theta0_monolingual() {
    if (!theta0_mono_) {
      const std::string path = cfg_.out_dir + "/theta0_mono.ckpt";
      if (!std::filesystem::exists(path)) {
        std::vector<TokenSequence> slice;
        for (std::size_t i = 0; i < corpus_.pretrain.size(); ++i) {
          if (corpus_.pretrain_language[i] == cfg_.source_language) slice.push_back(corpus_.pretrain[i]);
        }
        PLMWeights fresh = pretrain_mlm(slice, model_cfg_, cfg_.pretrain, cfg_.pretrain_seed);
        nlohmann::json meta;
        meta["corpus"] = "monolingual:" + cfg_.source_language;
        save_checkpoint(path, to_checkpoint(fresh, meta));
      }
      theta0_mono_ = plm_from_checkpoint(load_checkpoint(path));
    }
    return *theta0_mono_;
  }

  const PLMWeights& theta0_random() {
    if (!theta0_random_) {
      PLMWeights fresh = init_plm(model_cfg_, cfg_.pretrain_seed);
      Checkpoint ck = to_checkpoint(fresh);
      for (auto& [name, t] : ck.params) quantize_f32(t);
      theta0_random_ = plm_from_checkpoint(ck);
    }
    return *theta0_random_;
  }

  BaselineTemplateConfig template_config() const {
    BaselineTemplateConfig tc;
    tc.source_template = corpus_.default_template(cfg_.source_language);
    tc.label_tokens = corpus_.default_label_tokens(cfg_.source_language);
    tc.soft_template_tokens = cfg_.soft_template_tokens;
    return tc;
  }

  // One (method, k, seed) run: sample the split, build, train, evaluate every
  // target language on the best checkpoint.
  std::map<std::string, double> run_single(const std::string& method, int k, std::uint64_t seed,
                                           RunArtifacts* artifacts = nullptr,
                                           const std::string& verbalizer_override = "",
                                           const std::string& tower_init_override = "") {
    const PLMWeights& theta = theta0();
    const FewShotSplit split = few_shot_sample(corpus_.labeled.at(cfg_.source_language), k, seed);
    const BaselineTemplateConfig tc = template_config();
    const std::string verbalizer = verbalizer_override.empty() ? cfg_.verbalizer : verbalizer_override;
    const std::string tower_init = tower_init_override.empty() ? cfg_.tower_init : tower_init_override;

    BuiltModel built;
    if (method == "uniprompt") {
      const PLMWeights* tower_src = nullptr;
      if (tower_init == "monolingual") tower_src = &theta0_monolingual();
      if (tower_init == "random") tower_src = &theta0_random();
      built = build_uniprompt(theta, model_cfg_.split_p, tc, split,
                              label_word_kind_from_string(verbalizer), seed, tower_src);
    } else {
      built = build_baseline(baseline_kind_from_string(method), theta, tc, seed);
    }

    Hyperparams hp = cfg_.hp;
    hp.seed = seed;
    std::filesystem::create_directories(cfg_.out_dir + "/checkpoints");
    std::string tag = method;
    if (method == "uniprompt") {
      tag += "_p" + std::to_string(model_cfg_.split_p) + "_" + verbalizer + "_" + tower_init;
    }
    const std::string ckpt = cfg_.out_dir + "/checkpoints/" + tag + "_k" + std::to_string(k) +
                             "_seed" + std::to_string(seed) + ".ckpt";
    nlohmann::json meta;
    meta["method"] = method;
    meta["k"] = k;
    meta["seed"] = seed;
    meta["verbalizer"] = verbalizer;
    meta["template_ids"] = built.tpl.ids;
    meta["template_mask_index"] = built.tpl.mask_index;
    meta["template_origin"] = built.tpl.origin == TemplateOrigin::discrete_source_language
                                  ? "discrete" : "artificial";
    TrainReport report = train(built.model, built.tpl, split, hp, ckpt, meta);

    TwoTowerModel best = model_from_checkpoint(load_checkpoint(ckpt));
    std::map<std::string, double> acc;
    for (const std::string& lang : cfg_.target_languages()) {
      Template eval_tpl = built.tpl;
      if (method == "translation_prompt") {
        eval_tpl = translate_template(built.tpl, corpus_, cfg_.source_language, lang,
                                      cfg_.corruption, mix_seed(seed ^ hash_string(lang)));
      }
      acc[lang] = evaluate(best, eval_tpl, corpus_.labeled.at(lang).items, true);
    }
    if (artifacts) {
      artifacts->report = report;
      artifacts->checkpoint_path = ckpt;
    }
    return acc;
  }

  // The full methods x k x seeds grid. Failed runs are recorded in the error
  // manifest; completed rows are kept.
  ExperimentOutcome run_grid() {
    ExperimentOutcome outcome;
    const std::uint64_t theta_ck = theta0().checksum();
    const std::uint64_t hp_ck = cfg_.hp.checksum();
    // materialize tower-init variants before any worker threads start
    if (cfg_.tower_init == "monolingual") theta0_monolingual();
    if (cfg_.tower_init == "random") theta0_random();
    for (int k : cfg_.k_values) {
      for (const std::string& method : cfg_.methods) {
        try {
          std::map<std::uint64_t, std::uint64_t> split_cks;
          for (std::uint64_t seed : cfg_.seeds) {
            split_cks[seed] =
                split_checksum(few_shot_sample(corpus_.labeled.at(cfg_.source_language), k, seed));
          }
          ResultRecord record = run_seeds(
              method, k, cfg_.seeds,
              [&](std::uint64_t seed) { return run_single(method, k, seed); }, cfg_.jobs);
          for (const std::string& lang : cfg_.target_languages()) {
            const LangStats& stats = record.per_language.at(lang);
            for (std::size_t i = 0; i < cfg_.seeds.size(); ++i) {
              RawRow row;
              row.method = method;
              row.k = k;
              row.language = lang;
              row.seed = cfg_.seeds[i];
              row.accuracy = stats.per_seed[i];
              row.theta_checksum = theta_ck;
              row.split_checksum = split_cks[cfg_.seeds[i]];
              row.hp_checksum = hp_ck;
              outcome.rows.push_back(row);
            }
          }
        } catch (const std::exception& e) {
          nlohmann::json err;
          err["method"] = method;
          err["k"] = k;
          err["error"] = e.what();
          outcome.errors.push_back(std::move(err));
        }
      }
    }
    if (!outcome.rows.empty()) {
      outcome.table = build_report_table(outcome.rows, cfg_.target_languages());
    }
    write_outputs(outcome, cfg_.out_dir);
    return outcome;
  }

  // Layer-count sweep on the first target language, one full train/eval per
  // (p, seed). p = n is rejected because the fusion tower would be empty.
  struct SweepPoint {
    int p = 0;
    std::map<std::uint64_t, double> per_seed;
    double mean = 0.0;
  };

  std::vector<SweepPoint> sweep_layers(std::vector<int> p_values, int k,
                                       std::vector<std::string>* warnings = nullptr) {
    std::vector<int> unique;
    for (int p : p_values) {
      if (p == model_cfg_.n_layers) {
        throw ConfigError("p=" + std::to_string(p) + " is rejected: the fusion tower needs at "
                          "least one layer, so p must stay below n");
      }
      if (p < 0 || p > model_cfg_.n_layers - 1) {
        throw ConfigError("sweep p=" + std::to_string(p) + " outside [0, n-1]");
      }
      if (std::find(unique.begin(), unique.end(), p) != unique.end()) {
        if (warnings) warnings->push_back("duplicate p=" + std::to_string(p) + " skipped");
        continue;
      }
      unique.push_back(p);
    }
    const std::string lang = cfg_.target_languages().front();
    std::vector<SweepPoint> curve;
    for (int p : unique) {
      ExperimentConfig sub = cfg_;
      sub.model.split_p = p;
      Experiment runner(sub);
      runner.theta0();  // materialize before worker threads
      SweepPoint point;
      point.p = p;
      ResultRecord record = run_seeds(
          "uniprompt", k, cfg_.seeds,
          [&](std::uint64_t seed) { return runner.run_single("uniprompt", k, seed); }, cfg_.jobs);
      const LangStats& stats = record.per_language.at(lang);
      for (std::size_t i = 0; i < cfg_.seeds.size(); ++i) point.per_seed[cfg_.seeds[i]] = stats.per_seed[i];
      point.mean = stats.mean;
      curve.push_back(std::move(point));
    }
    // persist the curve
    std::ofstream os(cfg_.out_dir + "/sweep_layers.csv", std::ios::trunc);
    os << "p,seed,accuracy\n";
    for (const SweepPoint& pt : curve) {
      for (const auto& [seed, acc] : pt.per_seed) {
        os << pt.p << "," << seed << "," << format_number(acc) << "\n";
      }
    }
    return curve;
  }

  // Label-word ablation: four rows over the identical architecture, template
  // and splits; only the verbalizer changes.
  struct AblationRow {
    std::string label;
    std::vector<RawRow> rows;
    std::map<std::uint64_t, std::uint64_t> template_init_checksum;  // per seed
  };

  std::vector<AblationRow> ablation_label_words(int k) {
    const std::vector<std::pair<std::string, std::string>> grid = {
        {"(1) Discrete Labels", "discrete"},
        {"(2) Soft Labels", "soft-random"},
        {"(3) (2) + PLM Init.", "soft-plm-init"},
        {"(4) (2) + our Init.", "soft-mean-init"},
    };
    return run_ablation(grid, k, /*vary_verbalizer=*/true);
  }

  // Tower-init ablation: the template tower starts from random weights, a
  // source-only pretrained stack, or the multilingual stack; context and
  // fusion towers always come from the multilingual theta0.
  std::vector<AblationRow> ablation_tower_init(int k) {
    const std::vector<std::pair<std::string, std::string>> grid = {
        {"Random Initialization", "random"},
        {"Monolingual PLM", "monolingual"},
        {"Multilingual PLM", "multilingual"},
    };
    return run_ablation(grid, k, /*vary_verbalizer=*/false);
  }

  void write_outputs(const ExperimentOutcome& outcome, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_results_csv(dir + "/results.csv", outcome.rows);
    if (!outcome.rows.empty()) {
      std::ofstream(dir + "/report.md") << outcome.table.to_markdown();
    }
    nlohmann::json summary;
    summary["config"] = cfg_.to_json();
    summary["theta_checksum"] = outcome.rows.empty() ? 0 : outcome.rows.front().theta_checksum;
    summary["hp_checksum"] = cfg_.hp.checksum();
    nlohmann::json records = nlohmann::json::array();
    if (!outcome.rows.empty()) {
      for (const ReportRow& row : outcome.table.rows) {
        nlohmann::json rec;
        rec["k"] = row.k;
        rec["method"] = row.method;
        for (std::size_t i = 0; i < outcome.table.languages.size(); ++i) {
          rec["languages"][outcome.table.languages[i]] = {{"mean", row.cells[i].mean},
                                                          {"std", row.cells[i].stddev},
                                                          {"per_seed", row.cells[i].per_seed}};
        }
        rec["average"] = row.average;
        records.push_back(std::move(rec));
      }
    }
    summary["records"] = records;
    std::ofstream(dir + "/summary.json") << summary.dump(2) << "\n";
    if (!outcome.errors.empty()) {
      nlohmann::json manifest;
      manifest["errors"] = outcome.errors;
      std::ofstream(dir + "/errors.json") << manifest.dump(2) << "\n";
    }
  }

 private:
  std::vector<AblationRow> run_ablation(const std::vector<std::pair<std::string, std::string>>& grid,
                                        int k, bool vary_verbalizer) {
    const std::uint64_t theta_ck = theta0().checksum();
    const std::uint64_t hp_ck = cfg_.hp.checksum();
    std::map<std::uint64_t, std::uint64_t> split_cks;
    for (std::uint64_t seed : cfg_.seeds) {
      split_cks[seed] = split_checksum(few_shot_sample(corpus_.labeled.at(cfg_.source_language), k, seed));
    }
    std::vector<AblationRow> out;
    for (const auto& [label, setting] : grid) {
      AblationRow row;
      row.label = label;
      for (std::uint64_t seed : cfg_.seeds) {
        // record the template tower checksum at construction
        const FewShotSplit split = few_shot_sample(corpus_.labeled.at(cfg_.source_language), k, seed);
        BuiltModel built = build_uniprompt(
            theta0(), model_cfg_.split_p, template_config(), split,
            label_word_kind_from_string(vary_verbalizer ? setting : cfg_.verbalizer), seed,
            !vary_verbalizer && setting == "monolingual" ? &theta0_monolingual()
            : !vary_verbalizer && setting == "random"    ? &theta0_random()
                                                         : nullptr);
        std::uint64_t tpl_ck = 0xcbf29ce484222325ull;
        for (LayerParams& lp : built.model.template_tower) {
          lp.visit("t", [&](const std::string&, Tensor& t) { tpl_ck = hash_tensor(t, tpl_ck); });
        }
        row.template_init_checksum[seed] = tpl_ck;
      }
      ResultRecord record = run_seeds(
          label, k, cfg_.seeds,
          [&](std::uint64_t seed) {
            return run_single("uniprompt", k, seed, nullptr,
                              vary_verbalizer ? setting : "",
                              vary_verbalizer ? "" : setting);
          },
          cfg_.jobs);
      for (const std::string& lang : cfg_.target_languages()) {
        const LangStats& stats = record.per_language.at(lang);
        for (std::size_t i = 0; i < cfg_.seeds.size(); ++i) {
          RawRow raw;
          raw.method = label;
          raw.k = k;
          raw.language = lang;
          raw.seed = cfg_.seeds[i];
          raw.accuracy = stats.per_seed[i];
          raw.theta_checksum = theta_ck;
          raw.split_checksum = split_cks[cfg_.seeds[i]];
          raw.hp_checksum = hp_ck;
          row.rows.push_back(raw);
        }
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  ExperimentConfig cfg_;
  ModelConfig model_cfg_;
  SyntheticCorpus corpus_;
  std::optional<PLMWeights> theta0_;
  std::optional<PLMWeights> theta0_mono_;
  std::optional<PLMWeights> theta0_random_;
};

}  // namespace uniprompt
