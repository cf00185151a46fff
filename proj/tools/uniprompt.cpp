// Command-line front end: data generation, pretraining, the experiment grid,
// evaluation, sweeps, ablations, report rendering and the significance test.
// Exit codes: 0 success, 1 runtime failure (machine-readable JSON on stderr),
// 2 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "uniprompt/harness.hpp"

using namespace uniprompt;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "flat key=value config file");
  cmd->add_option("--set", args.overrides, "override a config key, key=value")->take_all();
  cmd->add_option("--out", args.out_dir, "output directory (overrides out_dir)");
  cmd->add_option("--seed", args.seed, "override the run seed list / data seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

ExperimentConfig load_config(const CommonArgs& args,
                             const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& e : extra) overrides.push_back(e);
  if (!args.out_dir.empty()) overrides.emplace_back("out_dir", args.out_dir);
  if (args.config_path.empty()) {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : overrides) kv[k] = v;
    return ExperimentConfig::from_kv(std::move(kv));
  }
  return ExperimentConfig::from_file(args.config_path, overrides);
}

int fail(const std::string& kind, const std::string& message) {
  nlohmann::json err;
  err["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> out;
  for (const std::string& part : split(csv, ',')) {
    if (!trim(part).empty()) out.push_back(std::stod(trim(part)));
  }
  return out;
}

// Paired per-(seed, language) accuracies of one method from a results CSV.
std::vector<double> paired_values(const std::string& csv_path, const std::string& method, int k) {
  std::vector<RawRow> rows = read_results_csv(csv_path);
  std::map<std::pair<std::uint64_t, std::string>, double> by_cell;
  for (const RawRow& r : rows) {
    if (r.method == method && r.k == k) by_cell[{r.seed, r.language}] = r.accuracy;
  }
  if (by_cell.empty()) {
    throw DataError("no rows for method '" + method + "' at k=" + std::to_string(k) + " in " + csv_path);
  }
  std::vector<double> out;
  for (const auto& [cell, acc] : by_cell) out.push_back(acc);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale unified-prompt cross-lingual classification harness"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonArgs gen_args, pretrain_args, train_args, eval_args, sweep_args, ablate_labels_args,
      ablate_init_args, report_args, sig_args;

  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate the synthetic multilingual corpus");
  add_common(cmd_gen, gen_args);

  CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "pretrain the miniature masked LM");
  add_common(cmd_pretrain, pretrain_args);
  bool pretrain_mono = false;
  cmd_pretrain->add_flag("--monolingual", pretrain_mono,
                         "pretrain on the source-language slice only");

  CLI::App* cmd_train = app.add_subcommand("train", "run the configured method/k/seed grid");
  add_common(cmd_train, train_args);

  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
  add_common(cmd_eval, eval_args);
  std::string eval_model, eval_language;
  bool eval_dev = false, eval_no_cache = false;
  cmd_eval->add_option("--model", eval_model, "model checkpoint path")->required();
  cmd_eval->add_option("--language", eval_language, "target language to evaluate");
  cmd_eval->add_flag("--dev", eval_dev, "evaluate the run's dev split instead of a test set");
  cmd_eval->add_flag("--no-cache", eval_no_cache, "disable the template output cache");

  CLI::App* cmd_sweep = app.add_subcommand("sweep-layers", "accuracy across tower split points");
  add_common(cmd_sweep, sweep_args);
  std::string sweep_p_list;
  int sweep_k = 16;
  cmd_sweep->add_option("--p-values", sweep_p_list, "comma list of split points (default 0..n-1)");
  cmd_sweep->add_option("--k", sweep_k, "shots per class (default 16)");

  CLI::App* cmd_ablate_labels = app.add_subcommand("ablate-labels", "label-word ablation table");
  add_common(cmd_ablate_labels, ablate_labels_args);
  int ablate_labels_k = 16;
  cmd_ablate_labels->add_option("--k", ablate_labels_k, "shots per class (default 16)");

  CLI::App* cmd_ablate_init = app.add_subcommand("ablate-init", "template tower initialization table");
  add_common(cmd_ablate_init, ablate_init_args);
  int ablate_init_k = 16;
  cmd_ablate_init->add_option("--k", ablate_init_k, "shots per class (default 16)");

  CLI::App* cmd_report = app.add_subcommand("report", "re-render a markdown table from results.csv");
  add_common(cmd_report, report_args);
  std::string report_csv, report_out_md;
  cmd_report->add_option("--results", report_csv, "results.csv path")->required();
  cmd_report->add_option("--markdown", report_out_md, "output markdown path (default stdout)");

  CLI::App* cmd_sig = app.add_subcommand("sig-test", "paired permutation test between two methods");
  add_common(cmd_sig, sig_args);
  std::string sig_results_a, sig_results_b, sig_method_a, sig_method_b, sig_values_a, sig_values_b;
  int sig_k = 16;
  cmd_sig->add_option("--results-a", sig_results_a, "results.csv holding method A");
  cmd_sig->add_option("--results-b", sig_results_b, "results.csv holding method B");
  cmd_sig->add_option("--method-a", sig_method_a, "method name for A");
  cmd_sig->add_option("--method-b", sig_method_b, "method name for B");
  cmd_sig->add_option("--values-a", sig_values_a, "direct comma list of paired values for A");
  cmd_sig->add_option("--values-b", sig_values_b, "direct comma list of paired values for B");
  cmd_sig->add_option("--k", sig_k, "k filter for CSV input (default 16)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_gen->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (gen_args.seed_set) extra.emplace_back("data_seed", std::to_string(gen_args.seed));
      ExperimentConfig cfg = load_config(gen_args, extra);
      SyntheticCorpus corpus = gen_corpus(cfg.gen);
      write_corpus_dir(cfg.resolved_data_dir(), corpus);
      std::cout << "wrote " << cfg.resolved_data_dir() << " (" << corpus.vocab.size()
                << " vocab tokens, " << corpus.pretrain.size() << " pretraining sentences)\n";
      return 0;
    }

    if (cmd_pretrain->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (pretrain_args.seed_set) extra.emplace_back("pretrain_seed", std::to_string(pretrain_args.seed));
      ExperimentConfig cfg = load_config(pretrain_args, extra);
      Experiment exp(cfg);
      const PLMWeights& theta = pretrain_mono ? exp.theta0_monolingual() : exp.theta0();
      const std::string path = pretrain_mono ? cfg.out_dir + "/theta0_mono.ckpt"
                                             : cfg.resolved_theta_path();
      nlohmann::json meta = nlohmann::json::parse(load_checkpoint(path).meta_json);
      std::cout << "checkpoint " << path << " checksum " << theta.checksum();
      if (meta.contains("final_loss")) {
        std::cout << " initial_loss " << meta["initial_loss"].get<double>() << " final_loss "
                  << meta["final_loss"].get<double>();
      }
      std::cout << "\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (train_args.seed_set) extra.emplace_back("seeds", std::to_string(train_args.seed));
      ExperimentConfig cfg = load_config(train_args, extra);
      Experiment exp(cfg);
      ExperimentOutcome outcome = exp.run_grid();
      std::cout << "wrote " << cfg.out_dir << "/results.csv (" << outcome.rows.size() << " rows)\n";
      if (!outcome.rows.empty()) std::cout << outcome.table.to_markdown();
      if (!outcome.errors.empty()) {
        return fail("partial_failure", std::to_string(outcome.errors.size()) +
                                           " runs failed; see " + cfg.out_dir + "/errors.json");
      }
      return 0;
    }

    if (cmd_eval->parsed()) {
      ExperimentConfig cfg = load_config(eval_args);
      Checkpoint ck = load_checkpoint(eval_model);
      TwoTowerModel model = model_from_checkpoint(ck);
      nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
      Template tpl;
      tpl.ids = meta.at("template_ids").get<std::vector<int>>();
      tpl.mask_index = meta.at("template_mask_index").get<int>();
      tpl.origin = meta.at("template_origin") == "artificial"
                       ? TemplateOrigin::artificial_soft_tokens
                       : TemplateOrigin::discrete_source_language;
      Experiment exp(cfg);
      double acc = 0.0;
      if (eval_dev) {
        const int k = meta.at("k").get<int>();
        const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();
        FewShotSplit split = few_shot_sample(exp.corpus().labeled.at(cfg.source_language), k, seed);
        acc = evaluate(model, tpl, split.dev, !eval_no_cache);
      } else {
        if (eval_language.empty()) throw ConfigError("--language or --dev is required");
        Template eval_tpl = tpl;
        if (meta.at("method") == "translation_prompt" && eval_language != cfg.source_language) {
          const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();
          eval_tpl = translate_template(tpl, exp.corpus(), cfg.source_language, eval_language,
                                        cfg.corruption, mix_seed(seed ^ hash_string(eval_language)));
        }
        acc = evaluate(model, eval_tpl, exp.corpus().labeled.at(eval_language).items, !eval_no_cache);
      }
      nlohmann::json out;
      out["accuracy"] = acc;
      out["model"] = eval_model;
      if (!eval_language.empty()) out["language"] = eval_language;
      if (eval_dev) out["split"] = "dev";
      std::cout << out.dump() << "\n";
      return 0;
    }

    if (cmd_sweep->parsed()) {
      ExperimentConfig cfg = load_config(sweep_args);
      Experiment exp(cfg);
      std::vector<int> p_values;
      if (sweep_p_list.empty()) {
        for (int p = 0; p < cfg.model.n_layers; ++p) p_values.push_back(p);
      } else {
        for (const std::string& part : split(sweep_p_list, ',')) p_values.push_back(std::stoi(trim(part)));
      }
      std::vector<std::string> warnings;
      auto curve = exp.sweep_layers(p_values, sweep_k, &warnings);
      for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& point : curve) {
        std::cout << "p=" << point.p << " mean_accuracy=" << format_number(point.mean) << "\n";
      }
      std::cout << "wrote " << cfg.out_dir << "/sweep_layers.csv\n";
      return 0;
    }

    if (cmd_ablate_labels->parsed() || cmd_ablate_init->parsed()) {
      const bool labels = cmd_ablate_labels->parsed();
      ExperimentConfig cfg = load_config(labels ? ablate_labels_args : ablate_init_args);
      Experiment exp(cfg);
      const int k = labels ? ablate_labels_k : ablate_init_k;
      auto rows = labels ? exp.ablation_label_words(k) : exp.ablation_tower_init(k);
      std::vector<RawRow> all;
      for (const auto& row : rows) all.insert(all.end(), row.rows.begin(), row.rows.end());
      ReportTable table = build_report_table(all, cfg.target_languages());
      const std::string sub = cfg.out_dir + (labels ? "/ablation_labels" : "/ablation_init");
      std::filesystem::create_directories(sub);
      write_results_csv(sub + "/results.csv", all);
      std::ofstream(sub + "/report.md") << table.to_markdown();
      nlohmann::json summary;
      summary["k"] = k;
      for (const auto& row : rows) {
        nlohmann::json checks;
        for (const auto& [seed, ck] : row.template_init_checksum) checks[std::to_string(seed)] = ck;
        summary["template_init_checksums"][row.label] = checks;
      }
      std::ofstream(sub + "/summary.json") << summary.dump(2) << "\n";
      std::cout << table.to_markdown();
      std::cout << "wrote " << sub << "/results.csv\n";
      return 0;
    }

    if (cmd_report->parsed()) {
      std::vector<RawRow> rows = read_results_csv(report_csv);
      std::vector<std::string> languages;
      for (const RawRow& r : rows) {
        if (std::find(languages.begin(), languages.end(), r.language) == languages.end()) {
          languages.push_back(r.language);
        }
      }
      ReportTable table = build_report_table(rows, languages);
      if (report_out_md.empty()) {
        std::cout << table.to_markdown();
      } else {
        std::ofstream(report_out_md) << table.to_markdown();
        std::cout << "wrote " << report_out_md << "\n";
      }
      return 0;
    }

    if (cmd_sig->parsed()) {
      std::vector<double> a, b;
      if (!sig_values_a.empty() || !sig_values_b.empty()) {
        a = parse_value_list(sig_values_a);
        b = parse_value_list(sig_values_b);
      } else {
        if (sig_results_a.empty() || sig_results_b.empty() || sig_method_a.empty() ||
            sig_method_b.empty()) {
          throw ConfigError("sig-test needs either --values-a/--values-b or "
                            "--results-a/--method-a/--results-b/--method-b");
        }
        a = paired_values(sig_results_a, sig_method_a, sig_k);
        b = paired_values(sig_results_b, sig_method_b, sig_k);
      }
      const double p = significance_test(a, b, sig_args.seed_set ? sig_args.seed : 0);
      nlohmann::json out;
      out["pairs"] = a.size();
      out["p_value"] = p;
      std::cout << out.dump() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what());
  } catch (const DataError& e) {
    return fail("data", e.what());
  } catch (const CacheError& e) {
    return fail("cache", e.what());
  } catch (const ParityError& e) {
    return fail("parity", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 2;
}
