// jug: train, evaluate, generate, ablate, and inspect JUG models.

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jug/jug.hpp"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 1 usage, 2 config, 3 data, 4 checkpoint.
int guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const jug::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const jug::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const jug::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

void apply_sets(jug::ExperimentConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw jug::ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(jug::trim_ws(s.substr(0, eq)), jug::trim_ws(s.substr(eq + 1)));
  }
}

jug::ExperimentConfig resolve_config(const std::string& config_path,
                                     const std::vector<std::string>& sets,
                                     const std::string& embedded = "") {
  jug::ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = jug::load_config(config_path);
  else if (!embedded.empty())
    cfg = jug::parse_config_text(embedded);
  apply_sets(cfg, sets);
  return cfg;
}

const std::vector<jug::LabelledPair>& pick_split(const jug::Corpus& corpus,
                                                 const std::string& name) {
  if (name == "train") return corpus.train;
  if (name == "valid") return corpus.valid;
  if (name == "test") return corpus.test;
  throw jug::ConfigError("unknown split '" + name + "' (train|valid|test)");
}

void print_report(const jug::MetricReport& r) {
  std::cout << "--- report " << (r.tag.empty() ? "(untagged)" : r.tag) << " ---\n"
            << r.to_text();
}

json report_json(const jug::MetricReport& r) {
  json j;
  for (const auto& [k, v] : r.to_kv()) j[k] = v;
  return j;
}

void write_reports(const std::string& out_prefix, const std::vector<jug::MetricReport>& reports) {
  if (out_prefix.empty()) return;
  std::ofstream text(out_prefix + ".txt");
  json all = json::array();
  for (const auto& r : reports) {
    text << "--- report " << r.tag << " ---\n" << r.to_text();
    all.push_back(report_json(r));
  }
  std::ofstream machine(out_prefix + ".json");
  machine << all.dump(2) << "\n";
}

struct LoadedModel {
  jug::LoadedCheckpoint ckpt;
  jug::ExperimentConfig cfg;
};

LoadedModel load_for_eval(const std::string& ckpt_path, const std::string& config_path,
                          const std::vector<std::string>& sets) {
  LoadedModel out{jug::load_checkpoint(ckpt_path), {}};
  out.cfg = resolve_config(config_path, sets, out.ckpt.extra_meta);
  return out;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& seeds_csv) {
  return guarded([&] {
    jug::ExperimentConfig base = resolve_config(config_path, sets);
    std::vector<std::uint64_t> seeds;
    if (seeds_csv.empty()) {
      seeds.push_back(base.seed);
    } else {
      std::istringstream is(seeds_csv);
      std::string item;
      while (std::getline(is, item, ',')) seeds.push_back(std::stoull(jug::trim_ws(item)));
    }
    for (std::uint64_t s : seeds) {
      jug::ExperimentConfig cfg = base;
      cfg.seed = s;
      cfg.validate();
      jug::Trainer trainer(cfg);
      auto result = trainer.run();
      std::cout << "seed " << s << "  run_dir " << result.run_dir << "  steps " << result.steps
                << "  best_epoch " << result.best_epoch << "  best_score " << result.best_score
                << "  wall_clock_sec " << result.wall_clock_sec << "\n";
      if (!result.history.empty()) print_report(result.history.back().report);
    }
  });
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
             const std::vector<std::string>& sets, const std::string& split,
             const std::string& out_prefix, std::int64_t eval_seed) {
  return guarded([&] {
    LoadedModel lm = load_for_eval(ckpt_path, config_path, sets);
    jug::JugModel model = lm.ckpt.instantiate();
    jug::Corpus corpus = jug::Trainer::prepare_corpus(lm.cfg);
    const auto& examples = pick_split(corpus, split);

    std::vector<jug::MetricReport> reports;
    for (const char* z : {"sample", "mean"}) {
      jug::EvalOptions opts;
      opts.nlg_z = z;
      opts.eval_seed = eval_seed >= 0 ? static_cast<std::uint64_t>(eval_seed) : lm.cfg.seed;
      opts.tag = split + "/z=" + z;
      reports.push_back(jug::evaluate(model, examples, corpus, opts));
      print_report(reports.back());
    }
    write_reports(out_prefix, reports);
  });
}

int cmd_generate(const std::string& ckpt_path, const std::string& direction,
                 const std::string& input, bool epsilon0, std::uint64_t sample_seed,
                 bool as_json) {
  return guarded([&] {
    LoadedModel lm = load_for_eval(ckpt_path, "", {});
    jug::JugModel model = lm.ckpt.instantiate();
    json j;
    j["direction"] = direction;
    j["input"] = input;
    if (direction == "nlu") {
      const auto tokens = jug::tokenize(input);
      if (tokens.empty()) throw jug::DataError("empty utterance");
      auto pred = model.predict_nlu(tokens);
      std::string out;
      if (model.config().mr_mode == jug::MrMode::slot_value)
        out = pred.mr->slots.to_string(model.schema());
      else
        out = jug::join_tokens(pred.tokens);
      j["output"] = out;
      j["delinearisable"] = pred.mr.has_value();
      if (!as_json) std::cout << out << "\n";
    } else if (direction == "nlg") {
      jug::MeaningRepresentation mr;
      mr.mode = model.config().mr_mode;
      if (mr.mode == jug::MrMode::slot_value) {
        mr.slots = jug::SlotValueSet::parse(input);
        mr.slots.validate(model.schema());
      } else {
        mr.tree = jug::delinearise(jug::tokenize(input));
      }
      std::vector<std::string> tokens;
      if (epsilon0) {
        const std::vector<double> zero(model.config().d_z, 0.0);
        tokens = model.predict_nlg(mr, &zero);
      } else {
        jug::Rng rng(sample_seed);
        tokens = model.predict_nlg(mr, nullptr, &rng);
      }
      j["output"] = jug::join_tokens(tokens);
      if (!as_json) std::cout << jug::join_tokens(tokens) << "\n";
    } else {
      throw jug::ConfigError("--direction must be nlu or nlg");
    }
    if (as_json) std::cout << j.dump(2) << "\n";
  });
}

int cmd_ablate(const std::string& which, const std::string& ckpt_path,
               const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& split, const std::string& out_prefix) {
  return guarded([&] {
    std::vector<jug::MetricReport> reports;
    if (which == "random-z") {
      if (ckpt_path.empty()) throw jug::ConfigError("ablate random-z needs --checkpoint");
      LoadedModel lm = load_for_eval(ckpt_path, config_path, sets);
      jug::JugModel model = lm.ckpt.instantiate();
      jug::Corpus corpus = jug::Trainer::prepare_corpus(lm.cfg);
      const auto& examples = pick_split(corpus, split);
      for (bool random_z : {false, true}) {
        jug::EvalOptions opts;
        opts.nlg_z = lm.cfg.nlg_eval_z;
        opts.random_z = random_z;
        opts.eval_seed = lm.cfg.seed;
        opts.tag = split + (random_z ? "/random-z" : "/posterior-z");
        reports.push_back(jug::evaluate(model, examples, corpus, opts));
        print_report(reports.back());
      }
    } else if (which == "unlabelled-source") {
      if (config_path.empty()) throw jug::ConfigError("ablate unlabelled-source needs --config");
      for (const char* source : {"x", "y", "both"}) {
        jug::ExperimentConfig cfg = resolve_config(config_path, sets);
        cfg.objective = jug::ObjectiveKind::semi;
        cfg.unlabelled_source = source;
        cfg.validate();
        jug::Trainer trainer(cfg);
        auto result = trainer.run();
        jug::LoadedCheckpoint best = jug::load_checkpoint(
            result.best_checkpoint.empty() ? result.last_checkpoint : result.best_checkpoint);
        jug::JugModel model = best.instantiate();
        jug::Corpus corpus = jug::Trainer::prepare_corpus(cfg);
        jug::EvalOptions opts;
        opts.nlg_z = cfg.nlg_eval_z;
        opts.eval_seed = cfg.seed;
        opts.tag = std::string("test/+unlabelled-") + source;
        reports.push_back(jug::evaluate(model, pick_split(corpus, split), corpus, opts));
        print_report(reports.back());
      }
    } else {
      throw jug::ConfigError("--which must be random-z or unlabelled-source");
    }
    write_reports(out_prefix, reports);
  });
}

int cmd_dump_latent(const std::string& ckpt_path, const std::string& config_path,
                    const std::vector<std::string>& sets, const std::string& split,
                    const std::string& out_path) {
  return guarded([&] {
    LoadedModel lm = load_for_eval(ckpt_path, config_path, sets);
    jug::JugModel model = lm.ckpt.instantiate();
    jug::Corpus corpus = jug::Trainer::prepare_corpus(lm.cfg);
    jug::check_compatibility(model, corpus);
    const auto& pairs = pick_split(corpus, split);
    std::ofstream out(out_path);
    if (!out) throw jug::DataError("cannot write latent dump: " + out_path);
    auto stats = jug::dump_latents(model, pairs, out);

    std::ofstream dist(out_path + ".distances.tsv");
    dist << "id\tdistance\n";
    dist.precision(17);
    for (const auto& p : pairs) {
      auto [qx, qy] = model.posterior_pair(p);
      double s = 0.0;
      for (std::size_t i = 0; i < qx.mu.size(); ++i)
        s += (qx.mu[i] - qy.mu[i]) * (qx.mu[i] - qy.mu[i]);
      dist << p.id << "\t" << std::sqrt(s) << "\n";
    }
    std::cout << "pairs " << stats.pairs << "\nmean_within_pair_distance " << stats.mean_within
              << "\nmean_across_pair_distance " << stats.mean_across << "\nratio "
              << (stats.mean_across > 0 ? stats.mean_within / stats.mean_across : 0.0) << "\n";
  });
}

int cmd_make_toy(const std::string& out_prefix, const std::string& mode, std::size_t slots,
                 std::size_t values, std::size_t variants, std::size_t n_train,
                 std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
  return guarded([&] {
    jug::ToyGrammar g;
    g.mode = mode == "tree" ? jug::MrMode::tree : jug::MrMode::slot_value;
    g.n_slots = slots;
    g.n_values = values;
    g.n_variants = variants;
    jug::Corpus c = jug::generate_toy_splits(g, n_train, n_valid, n_test, seed);
    jug::save_records(out_prefix + ".train.txt", c, c.train);
    jug::save_records(out_prefix + ".valid.txt", c, c.valid);
    jug::save_records(out_prefix + ".test.txt", c, c.test);
    std::cout << "wrote " << c.train.size() << "/" << c.valid.size() << "/" << c.test.size()
              << " records to " << out_prefix << ".{train,valid,test}.txt\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"JUG: joint natural-language understanding and generation"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, seeds_csv, split = "test", out_prefix, input, direction;
  std::string which, out_path, mode = "slot-value";
  std::vector<std::string> sets;
  bool epsilon0 = false, as_json = false;
  std::uint64_t sample_seed = 1, toy_seed = 1;
  std::int64_t eval_seed = -1;
  std::size_t slots = 5, values = 5, variants = 3, n_train = 1600, n_valid = 200, n_test = 200;

  auto* train = app.add_subcommand("train", "Train a model from a config");
  train->add_option("--config", config_path, "Config file (key = value lines)");
  train->add_option("--set", sets, "Override a config key, key=value (repeatable)");
  train->add_option("--seeds", seeds_csv, "Comma-separated replicate seeds");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  eval_cmd->add_option("--config", config_path, "Config override (defaults to embedded)");
  eval_cmd->add_option("--set", sets, "Override a config key (repeatable)");
  eval_cmd->add_option("--split", split, "train|valid|test (default test)");
  eval_cmd->add_option("--out", out_prefix, "Write report files to PREFIX.txt / PREFIX.json");
  eval_cmd->add_option("--eval-seed", eval_seed, "Seed for NLG z sampling (default: run seed)");

  auto* gen = app.add_subcommand("generate", "Single-example prediction");
  gen->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  gen->add_option("--direction", direction, "nlu | nlg")->required();
  gen->add_option("--input", input, "Utterance text (nlu) or MR text (nlg)")->required();
  gen->add_flag("--epsilon0", epsilon0, "Decode NLG from the posterior mean (epsilon = 0)");
  gen->add_option("--sample-seed", sample_seed, "Seed for the NLG epsilon draw");
  gen->add_flag("--json", as_json, "Machine-readable output");

  auto* ablate = app.add_subcommand("ablate", "Ablation studies");
  ablate->add_option("--which", which, "random-z | unlabelled-source")->required();
  ablate->add_option("--checkpoint", ckpt_path, "Checkpoint (random-z)");
  ablate->add_option("--config", config_path, "Config (unlabelled-source)");
  ablate->add_option("--set", sets, "Override a config key (repeatable)");
  ablate->add_option("--split", split, "Evaluation split (default test)");
  ablate->add_option("--out", out_prefix, "Write report files to PREFIX.txt / PREFIX.json");

  auto* dump = app.add_subcommand("dump-latent", "Export posterior means for a labelled corpus");
  dump->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  dump->add_option("--config", config_path, "Config override (defaults to embedded)");
  dump->add_option("--set", sets, "Override a config key (repeatable)");
  dump->add_option("--split", split, "Split to dump (default test)");
  dump->add_option("--out", out_path, "Output file")->required();

  auto* make_toy = app.add_subcommand("make-toy", "Write a synthetic corpus to record files");
  make_toy->add_option("--out", out_prefix, "Output prefix")->required();
  make_toy->add_option("--mode", mode, "slot-value | tree");
  make_toy->add_option("--slots", slots, "Number of slots");
  make_toy->add_option("--values", values, "Values per slot");
  make_toy->add_option("--variants", variants, "Surface template variants");
  make_toy->add_option("--train", n_train, "Train examples");
  make_toy->add_option("--valid", n_valid, "Valid examples");
  make_toy->add_option("--test", n_test, "Test examples");
  make_toy->add_option("--seed", toy_seed, "Generation seed");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return cmd_train(config_path, sets, seeds_csv);
  if (eval_cmd->parsed()) return cmd_eval(ckpt_path, config_path, sets, split, out_prefix, eval_seed);
  if (gen->parsed()) return cmd_generate(ckpt_path, direction, input, epsilon0, sample_seed, as_json);
  if (ablate->parsed()) return cmd_ablate(which, ckpt_path, config_path, sets, split, out_prefix);
  if (dump->parsed()) return cmd_dump_latent(ckpt_path, config_path, sets, split, out_path);
  if (make_toy->parsed())
    return cmd_make_toy(out_prefix, mode, slots, values, variants, n_train, n_valid, n_test, toy_seed);
  return 1;
}
