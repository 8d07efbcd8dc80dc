#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "metrics.hpp"

namespace jug {

struct EvalOptions {
  std::string nlg_z = "sample";  // "sample" (seeded) or "mean" (epsilon = 0)
  bool random_z = false;         // ablation: z ~ N(0, I) instead of the posterior
  std::uint64_t eval_seed = 1;
  std::string tag;
};

inline void check_compatibility(const JugModel& m, const Corpus& corpus) {
  if (m.config().mr_mode != corpus.mode)
    throw CheckpointError(std::string("checkpoint is ") + mr_mode_name(m.config().mr_mode) +
                          " mode but the corpus is " + mr_mode_name(corpus.mode));
  if (corpus.mode == MrMode::slot_value &&
      ckpt::schema_blob(m.schema()) != ckpt::schema_blob(corpus.schema))
    throw CheckpointError("checkpoint schema (" + std::to_string(m.schema().slots.size()) +
                          " slots) differs from the corpus schema (" +
                          std::to_string(corpus.schema.slots.size()) + " slots)");
}

/// Deterministic corpus evaluation: NLU via the posterior mean and greedy
/// decoding, NLG via a seeded sampled z (or epsilon = 0 with nlg_z = "mean").
inline MetricReport evaluate(JugModel& m, const std::vector<LabelledPair>& split,
                             const Corpus& meta, const EvalOptions& opts) {
  if (split.empty()) throw DataError("evaluate: empty split");
  check_compatibility(m, meta);
  Rng rng_eps = Rng::derive(opts.eval_seed, "nlg_eps");
  Rng rng_rand = Rng::derive(opts.eval_seed, "random_z");

  std::vector<SlotValueSet> pred_slots, gold_slots;
  std::vector<TokenSeq> pred_trees;
  std::vector<SemanticTree> gold_trees;
  std::vector<TokenSeq> hyps;
  std::vector<TokenSeq> refs;

  for (const auto& pair : split) {
    std::vector<double> z_nlu, z_nlg;
    if (opts.random_z) {
      z_nlu = rng_rand.normal_vec(m.config().d_z);
      z_nlg = rng_rand.normal_vec(m.config().d_z);
    }
    auto nlu = m.predict_nlu(pair.x, opts.random_z ? &z_nlu : nullptr);
    if (meta.mode == MrMode::slot_value) {
      pred_slots.push_back(nlu.mr ? nlu.mr->slots : SlotValueSet{});
      gold_slots.push_back(pair.y.slots);
    } else {
      pred_trees.push_back(nlu.tokens);
      gold_trees.push_back(pair.y.tree);
    }

    std::vector<double> eps(m.config().d_z, 0.0);
    if (opts.nlg_z == "sample") eps = rng_eps.normal_vec(m.config().d_z);
    hyps.push_back(m.predict_nlg(pair.y, &eps, nullptr, opts.random_z ? &z_nlg : nullptr));
    refs.push_back(pair.x);
  }

  MetricReport r;
  r.tag = opts.tag;
  r.mode = meta.mode;
  r.n_examples = split.size();
  r.bleu4 = bleu4(hyps, refs);
  if (meta.mode == MrMode::slot_value) {
    r.joint_accuracy = joint_accuracy(pred_slots, gold_slots, meta.schema);
    r.slot_f1 = slot_f1(pred_slots, gold_slots, meta.schema);
    const auto tax = error_taxonomy(pred_slots, gold_slots, meta.schema);
    r.nlu_missing = tax.missing;
    r.nlu_redundant = tax.redundant;
    r.nlu_wrong = tax.wrong;
    const SurfaceLexicon lex =
        meta.lexicon.forms.empty() ? lexicon_from_schema(meta.schema) : meta.lexicon;
    const auto sem = semantic_accuracy(hyps, gold_slots, meta.schema, lex);
    r.semantic_accuracy = sem.rate;
    r.nlg_missing = sem.missing;
    r.nlg_wrong = sem.wrong;
  } else {
    r.exact_match = exact_match(pred_trees, gold_trees);
  }
  r.check_ranges();
  return r;
}

struct LatentStats {
  double mean_within = 0.0;
  double mean_across = 0.0;
  std::size_t pairs = 0;
};

/// Writes the latent dump (two rows per labelled pair: from-x and from-y
/// posterior means) and returns within/across mean distances.
inline LatentStats dump_latents(JugModel& m, const std::vector<LabelledPair>& pairs,
                                std::ostream& os) {
  if (pairs.empty()) throw DataError("dump_latents: no labelled pairs");
  std::vector<std::vector<double>> mx, my;
  os.precision(17);
  for (const auto& p : pairs) {
    auto [qx, qy] = m.posterior_pair(p);
    os << p.id << "\tfrom-x";
    for (double v : qx.mu) os << "\t" << v;
    os << "\n" << p.id << "\tfrom-y";
    for (double v : qy.mu) os << "\t" << v;
    os << "\n";
    mx.push_back(qx.mu);
    my.push_back(qy.mu);
  }

  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  LatentStats stats;
  stats.pairs = pairs.size();
  const std::size_t n = std::min<std::size_t>(mx.size(), 500);
  double within = 0.0, across = 0.0;
  std::size_t n_across = 0;
  for (std::size_t i = 0; i < n; ++i) {
    within += dist(mx[i], my[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      across += dist(mx[i], my[j]);
      ++n_across;
    }
  }
  stats.mean_within = within / static_cast<double>(n);
  stats.mean_across = n_across ? across / static_cast<double>(n_across) : 0.0;
  return stats;
}

}  // namespace jug
