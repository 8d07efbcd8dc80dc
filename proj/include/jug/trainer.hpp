#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "toy.hpp"
#include "trainer_eval.hpp"

namespace jug {

struct EpochRecord {
  std::size_t epoch = 0;
  MetricReport report;
  double val_score = 0.0;
};

struct TrainResult {
  std::string run_dir;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<EpochRecord> history;
  double best_score = -1.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::size_t unlabelled_x_batches = 0;
  std::size_t unlabelled_y_batches = 0;
  double wall_clock_sec = 0.0;
};

/// End-to-end training: corpus preparation, optimisation with KL annealing,
/// periodic validation, best/last checkpoints, and a run manifest sufficient
/// to reproduce the run bit-identically.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

  static Corpus prepare_corpus(const ExperimentConfig& cfg) {
    Corpus corpus;
    if (cfg.data == "toy") {
      ToyGrammar g;
      g.mode = cfg.mr_mode;
      g.n_slots = cfg.toy_slots;
      g.n_values = cfg.toy_values;
      g.n_variants = cfg.toy_variants;
      corpus = generate_toy_splits(g, cfg.toy_train, cfg.toy_valid, cfg.toy_test, cfg.toy_seed);
    } else {
      corpus = load_corpus(resolve_data_path(cfg.data_train), resolve_data_path(cfg.data_valid),
                           resolve_data_path(cfg.data_test), cfg.mr_mode, cfg.strip_annotations);
    }
    if (cfg.labelled_fraction < 1.0) corpus = make_split(corpus, cfg.labelled_fraction, cfg.split_seed);
    if (cfg.unlabelled_source == "x") corpus.unlabelled_y.clear();
    if (cfg.unlabelled_source == "y") corpus.unlabelled_x.clear();
    if (cfg.objective == ObjectiveKind::semi && corpus.unlabelled_x.empty() &&
        corpus.unlabelled_y.empty())
      throw ConfigError("objective=semi requires nonempty unlabelled pools");
    return corpus;
  }

  std::string run_dir() const {
    return cfg_.out_dir + "/" + config_hash(cfg_) + "-s" + std::to_string(cfg_.seed);
  }

  TrainResult run() {
    const auto wall_start = std::chrono::steady_clock::now();
    cfg_.validate();
    Corpus corpus = prepare_corpus(cfg_);
    TrainResult result;
    result.run_dir = run_dir();
    std::filesystem::create_directories(result.run_dir);

    {
      std::ofstream cfg_out(result.run_dir + "/config.txt");
      cfg_out << cfg_.serialize();
      std::ofstream split_out(result.run_dir + "/split.manifest");
      split_out << "# fraction=" << cfg_.labelled_fraction << " seed=" << cfg_.split_seed << "\n"
                << split_manifest(corpus);
    }

    JugModel model = make_model(cfg_.model_config(), corpus, cfg_.seed, cfg_.min_count);
    Objectives objectives(model, cfg_.objective_options());
    AdamOptimizer adam(cfg_.lr);
    BaselineState baseline_x{0.0, cfg_.baseline_decay};
    BaselineState baseline_y{0.0, cfg_.baseline_decay};
    Rng train_rng = Rng::derive(cfg_.seed, "train_draws");
    Rng ckpt_rng = Rng::derive(cfg_.seed, "checkpoint_rng");

    std::ofstream log(result.run_dir + "/train_log.tsv");
    log << "step\tobjective\trecon_y_given_zx\trecon_x_given_zy\tkl_qzx_to_prior\t"
           "kl_qzy_to_prior\trecon_x_cascade\trecon_y_cascade\treinforce_surrogate\t"
           "kl_coef\ttotal\tbaseline_x\tbaseline_y\tgrad_norm\n";
    log << std::setprecision(17);

    const std::size_t steps_per_epoch = plan_epoch(corpus, 0).size();
    const std::size_t total_steps = std::max<std::size_t>(1, steps_per_epoch * cfg_.epochs);
    const std::size_t anneal_steps =
        static_cast<std::size_t>(cfg_.kl_anneal_frac * static_cast<double>(total_steps));

    // Initial checkpoint; overwritten by the final state later.
    save_checkpoint(result.run_dir + "/last.ckpt", model, &adam, &ckpt_rng, cfg_.serialize());
    result.last_checkpoint = result.run_dir + "/last.ckpt";

    std::size_t step = 0;
    std::size_t stagnant = 0;
    bool stopped = false;
    for (std::size_t epoch = 1; epoch <= cfg_.epochs && !stopped; ++epoch) {
      for (const Batch& batch : plan_epoch(corpus, epoch)) {
        const double kl_coef =
            anneal_steps == 0
                ? 1.0
                : std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
        objectives.options().kl_coef = kl_coef;
        model.params().zero_grads();
        Tape tape;
        LiveDraws draws(train_rng);
        LossResult r = run_batch(tape, objectives, corpus, batch, baseline_x, baseline_y, draws);
        tape.backward(r.total);
        const double gnorm = clip_global_norm(model.params(), cfg_.clip_norm);
        adam.step(model.params());
        if (batch.kind == BatchKind::unlabelled_x) ++result.unlabelled_x_batches;
        if (batch.kind == BatchKind::unlabelled_y) ++result.unlabelled_y_batches;
        ++step;

        const LossBreakdown& n = r.numbers;
        log << step << "\t" << objective_name(cfg_.objective) << "\t" << n.recon_y_given_zx << "\t"
            << n.recon_x_given_zy << "\t" << n.kl_qzx_to_prior << "\t" << n.kl_qzy_to_prior << "\t"
            << n.recon_x_cascade << "\t" << n.recon_y_cascade << "\t" << n.reinforce_surrogate
            << "\t" << kl_coef << "\t" << n.total << "\t" << baseline_x.value << "\t"
            << baseline_y.value << "\t" << gnorm << "\n";
      }

      if (cfg_.eval_every != 0 && epoch % cfg_.eval_every == 0) {
        EpochRecord rec;
        rec.epoch = epoch;
        EvalOptions eopts;
        eopts.nlg_z = cfg_.objective == ObjectiveKind::decoupled ? "mean" : cfg_.nlg_eval_z;
        eopts.eval_seed = splitmix64(cfg_.seed ^ (0x9e37 + epoch));
        eopts.tag = "valid@" + std::to_string(epoch);
        const auto& split = corpus.valid.empty() ? corpus.train : corpus.valid;
        rec.report = evaluate(model, split, corpus, eopts);
        rec.val_score = validation_score(rec.report);
        result.history.push_back(rec);

        if (rec.val_score > result.best_score) {
          result.best_score = rec.val_score;
          result.best_epoch = epoch;
          result.best_checkpoint = result.run_dir + "/best.ckpt";
          save_checkpoint(result.best_checkpoint, model, &adam, &ckpt_rng, cfg_.serialize());
          stagnant = 0;
        } else if (++stagnant >= cfg_.early_stop_patience) {
          stopped = true;
        }
      }
    }
    result.steps = step;

    save_checkpoint(result.run_dir + "/last.ckpt", model, &adam, &ckpt_rng, cfg_.serialize());
    result.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    write_history(result);
    write_manifest(result);
    return result;
  }

  static double validation_score(const MetricReport& r) {
    const double nlu = r.joint_accuracy ? *r.joint_accuracy : (r.exact_match ? *r.exact_match : 0.0);
    const double nlg = r.bleu4 ? *r.bleu4 : 0.0;
    return 0.5 * (nlu + nlg);
  }

  const ExperimentConfig& config() const { return cfg_; }

 private:
  enum class BatchKind { labelled, unlabelled_x, unlabelled_y };

  struct Batch {
    BatchKind kind = BatchKind::labelled;
    std::vector<std::size_t> indices;
  };

  std::vector<Batch> plan_epoch(const Corpus& corpus, std::size_t epoch) const {
    auto chunk = [&](std::size_t n, Rng rng, BatchKind kind) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(order);
      std::vector<Batch> batches;
      for (std::size_t at = 0; at < n; at += cfg_.batch_size) {
        Batch b;
        b.kind = kind;
        for (std::size_t i = at; i < std::min(n, at + cfg_.batch_size); ++i)
          b.indices.push_back(order[i]);
        batches.push_back(std::move(b));
      }
      return batches;
    };
    const std::string e = std::to_string(epoch);
    std::vector<Batch> labelled =
        chunk(corpus.train.size(), Rng::derive(cfg_.seed, "order.labelled." + e), BatchKind::labelled);
    if (cfg_.objective != ObjectiveKind::semi) return labelled;

    // Mixed-batch schedule: one labelled batch, then ceil(|U| / |L|) batches
    // drawn from the interleaved unlabelled queue, reshuffled every epoch.
    std::vector<Batch> ux = chunk(corpus.unlabelled_x.size(),
                                  Rng::derive(cfg_.seed, "order.ux." + e), BatchKind::unlabelled_x);
    std::vector<Batch> uy = chunk(corpus.unlabelled_y.size(),
                                  Rng::derive(cfg_.seed, "order.uy." + e), BatchKind::unlabelled_y);
    std::vector<Batch> queue;
    for (std::size_t i = 0; i < std::max(ux.size(), uy.size()); ++i) {
      if (i < ux.size()) queue.push_back(std::move(ux[i]));
      if (i < uy.size()) queue.push_back(std::move(uy[i]));
    }
    if (labelled.empty()) return queue;
    const std::size_t per =
        (queue.size() + labelled.size() - 1) / std::max<std::size_t>(1, labelled.size());
    std::vector<Batch> plan;
    std::size_t qi = 0;
    for (auto& lb : labelled) {
      plan.push_back(std::move(lb));
      for (std::size_t k = 0; k < per && qi < queue.size(); ++k) plan.push_back(std::move(queue[qi++]));
    }
    while (qi < queue.size()) plan.push_back(std::move(queue[qi++]));
    return plan;
  }

  LossResult run_batch(Tape& tape, Objectives& objectives, const Corpus& corpus, const Batch& batch,
                       BaselineState& bx, BaselineState& by, LiveDraws& draws) {
    switch (batch.kind) {
      case BatchKind::labelled: {
        std::vector<LabelledPair> pairs;
        pairs.reserve(batch.indices.size());
        for (std::size_t i : batch.indices) pairs.push_back(corpus.train[i]);
        if (cfg_.objective == ObjectiveKind::marginal)
          return objectives.marginal(tape, pairs, bx, by, draws);
        return objectives.basic(tape, pairs, draws);
      }
      case BatchKind::unlabelled_x: {
        LossResult out{tape.constant_scalar(0.0), {}};
        out.numbers.kl_coef = objectives.options().kl_coef;
        for (std::size_t i : batch.indices) {
          LossResult piece = objectives.unlabelled_x(tape, corpus.unlabelled_x[i].x, bx, draws);
          out.total = tape.add(out.total, piece.total);
          out.numbers += piece.numbers;
        }
        return out;
      }
      case BatchKind::unlabelled_y: {
        LossResult out{tape.constant_scalar(0.0), {}};
        out.numbers.kl_coef = objectives.options().kl_coef;
        for (std::size_t i : batch.indices) {
          LossResult piece = objectives.unlabelled_y(tape, corpus.unlabelled_y[i].y, by, draws);
          out.total = tape.add(out.total, piece.total);
          out.numbers += piece.numbers;
        }
        return out;
      }
    }
    throw ConfigError("unreachable batch kind");
  }

  void write_history(const TrainResult& result) const {
    std::ofstream out(result.run_dir + "/metrics_history.tsv");
    out << std::setprecision(17);
    out << "epoch\tval_score\tbleu4\tslot_f1\tjoint_accuracy\tsemantic_accuracy\texact_match\n";
    for (const auto& rec : result.history) {
      auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::ostringstream os;
        os << std::setprecision(17) << *v;
        return os.str();
      };
      out << rec.epoch << "\t" << std::setprecision(17) << rec.val_score << "\t"
          << opt(rec.report.bleu4) << "\t" << opt(rec.report.slot_f1) << "\t"
          << opt(rec.report.joint_accuracy) << "\t" << opt(rec.report.semantic_accuracy) << "\t"
          << opt(rec.report.exact_match) << "\n";
    }
  }

  void write_manifest(const TrainResult& result) const {
    nlohmann::json j;
    j["config"] = cfg_.to_map();
    j["config_hash"] = config_hash(cfg_);
    j["split_manifest"] = "split.manifest";
    j["train_log"] = "train_log.tsv";
    j["metrics_history"] = "metrics_history.tsv";
    j["checkpoints"]["last"] = "last.ckpt";
    if (!result.best_checkpoint.empty()) j["checkpoints"]["best"] = "best.ckpt";
    j["best_epoch"] = result.best_epoch;
    j["best_score"] = result.best_score;
    j["steps"] = result.steps;
    j["unlabelled_x_batches"] = result.unlabelled_x_batches;
    j["unlabelled_y_batches"] = result.unlabelled_y_batches;
    j["wall_clock_sec"] = result.wall_clock_sec;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& rec : result.history) {
      nlohmann::json h;
      h["epoch"] = rec.epoch;
      h["val_score"] = rec.val_score;
      for (const auto& [k, v] : rec.report.to_kv()) h[k] = v;
      hist.push_back(h);
    }
    j["history"] = hist;
    std::ofstream out(result.run_dir + "/manifest.json");
    out << j.dump(2) << "\n";
  }

  ExperimentConfig cfg_;
};

}  // namespace jug
