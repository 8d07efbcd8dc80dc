#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "data.hpp"
#include "mr.hpp"

namespace jug {

using TokenSeq = std::vector<std::string>;

/// Corpus BLEU-4: modified n-gram precisions with clipping, geometric mean,
/// brevity penalty. Zero-count policy, frozen by the golden tests: a zero
/// unigram numerator gives 0.0; for n >= 2 a zero numerator (including an
/// empty denominator) falls back to add-one smoothing (num+1)/(den+1).
/// Effective reference length per segment is the closest to the hypothesis
/// length, ties resolved toward the shorter reference.
inline double bleu4(const std::vector<TokenSeq>& hyps,
                    const std::vector<std::vector<TokenSeq>>& refs) {
  if (hyps.empty()) throw DataError("bleu4: empty corpus");
  if (hyps.size() != refs.size())
    throw DataError("bleu4: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(refs.size()) + " reference sets");

  auto ngram_key = [](const TokenSeq& toks, std::size_t start, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
      key += toks[start + i];
      key += '\x1f';
    }
    return key;
  };

  long long num[5] = {0, 0, 0, 0, 0};
  long long den[5] = {0, 0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const TokenSeq& hyp = hyps[i];
    if (refs[i].empty()) throw DataError("bleu4: hypothesis " + std::to_string(i) + " has no references");
    hyp_len += static_cast<long long>(hyp.size());

    std::size_t best_ref = refs[i][0].size();
    for (const auto& r : refs[i]) {
      const auto d_new = std::llabs(static_cast<long long>(r.size()) - static_cast<long long>(hyp.size()));
      const auto d_old = std::llabs(static_cast<long long>(best_ref) - static_cast<long long>(hyp.size()));
      if (d_new < d_old || (d_new == d_old && r.size() < best_ref)) best_ref = r.size();
    }
    ref_len += static_cast<long long>(best_ref);

    for (std::size_t n = 1; n <= 4; ++n) {
      if (hyp.size() < n) continue;
      std::unordered_map<std::string, long long> hyp_counts;
      for (std::size_t s = 0; s + n <= hyp.size(); ++s) ++hyp_counts[ngram_key(hyp, s, n)];
      std::unordered_map<std::string, long long> max_ref_counts;
      for (const auto& r : refs[i]) {
        if (r.size() < n) continue;
        std::unordered_map<std::string, long long> rc;
        for (std::size_t s = 0; s + n <= r.size(); ++s) ++rc[ngram_key(r, s, n)];
        for (const auto& [k, v] : rc) {
          auto& m = max_ref_counts[k];
          if (v > m) m = v;
        }
      }
      for (const auto& [k, v] : hyp_counts) {
        den[n] += v;
        auto it = max_ref_counts.find(k);
        if (it != max_ref_counts.end()) num[n] += std::min(v, it->second);
      }
    }
  }

  if (hyp_len == 0 || num[1] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double p;
    if (n >= 2 && num[n] == 0)
      p = static_cast<double>(num[n] + 1) / static_cast<double>(den[n] + 1);
    else
      p = static_cast<double>(num[n]) / static_cast<double>(den[n]);
    log_sum += std::log(p);
  }
  const double precision_mean = std::exp(log_sum / 4.0);
  const double bp = hyp_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * precision_mean;
}

inline double bleu4(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& single_refs) {
  std::vector<std::vector<TokenSeq>> refs;
  refs.reserve(single_refs.size());
  for (const auto& r : single_refs) refs.push_back({r});
  return bleu4(hyps, refs);
}

namespace detail {
inline void check_schema_pair(const SlotValueSet& a, const SlotSchema& schema) {
  for (const auto& [slot, value] : a.asserted)
    if (!schema.find(slot)) throw DataError("metrics: slot '" + slot + "' not in schema");
}
}  // namespace detail

/// Fraction of examples whose every slot (not_mention included) matches.
inline double joint_accuracy(const std::vector<SlotValueSet>& pred,
                             const std::vector<SlotValueSet>& gold, const SlotSchema& schema) {
  if (pred.size() != gold.size()) throw DataError("joint_accuracy: misaligned lists");
  if (pred.empty()) throw DataError("joint_accuracy: empty corpus");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::check_schema_pair(pred[i], schema);
    detail::check_schema_pair(gold[i], schema);
    bool all = true;
    for (const auto& s : schema.slots) all = all && pred[i].get(s.name) == gold[i].get(s.name);
    hits += all ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Micro-averaged F1 over asserted slot-value pairs only.
inline double slot_f1(const std::vector<SlotValueSet>& pred, const std::vector<SlotValueSet>& gold,
                      const SlotSchema& schema) {
  if (pred.size() != gold.size()) throw DataError("slot_f1: misaligned lists");
  long long correct = 0, n_pred = 0, n_gold = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::check_schema_pair(pred[i], schema);
    detail::check_schema_pair(gold[i], schema);
    n_pred += static_cast<long long>(pred[i].asserted.size());
    n_gold += static_cast<long long>(gold[i].asserted.size());
    for (const auto& [slot, value] : pred[i].asserted)
      if (gold[i].get(slot) == value) ++correct;
  }
  if (n_pred == 0 && n_gold == 0) return 1.0;
  if (correct == 0) return 0.0;
  const double p = static_cast<double>(correct) / static_cast<double>(n_pred);
  const double r = static_cast<double>(correct) / static_cast<double>(n_gold);
  return 2.0 * p * r / (p + r);
}

struct SemanticAccuracy {
  double rate = 0.0;
  long long missing = 0;
  long long wrong = 0;
};

inline bool contains_subsequence(const TokenSeq& hay, const TokenSeq& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t s = 0; s + needle.size() <= hay.size(); ++s) {
    bool ok = true;
    for (std::size_t i = 0; i < needle.size(); ++i) ok = ok && hay[s + i] == needle[i];
    if (ok) return true;
  }
  return false;
}

/// A gold slot value counts as generated iff one of its registered surface
/// forms appears as a contiguous token run in the utterance. `wrong` counts
/// gold-asserted slots whose utterance realises a contradicting value.
inline SemanticAccuracy semantic_accuracy(const std::vector<TokenSeq>& utterances,
                                          const std::vector<SlotValueSet>& gold,
                                          const SlotSchema& schema, const SurfaceLexicon& lexicon) {
  if (utterances.size() != gold.size()) throw DataError("semantic_accuracy: misaligned lists");
  SemanticAccuracy out;
  long long correct = 0, total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& [slot, value] : gold[i].asserted) {
      ++total;
      bool found = false;
      for (const auto& form : lexicon.lookup(slot, value))
        found = found || contains_subsequence(utterances[i], form);
      if (found)
        ++correct;
      else
        ++out.missing;

      const auto* s = schema.find(slot);
      if (!s) throw DataError("semantic_accuracy: slot '" + slot + "' not in schema");
      bool contradicted = false;
      for (const auto& other : s->values) {
        if (other == value || other == kNotMention) continue;
        auto it = lexicon.forms.find(slot);
        if (it == lexicon.forms.end()) continue;
        auto vi = it->second.find(other);
        if (vi == it->second.end()) continue;
        for (const auto& form : vi->second)
          contradicted = contradicted || contains_subsequence(utterances[i], form);
      }
      if (contradicted) ++out.wrong;
    }
  }
  out.rate = total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
  return out;
}

/// Fraction of predictions whose canonical linearisation is token-identical
/// to the gold tree's; non-delinearisable predictions never match.
inline double exact_match(const std::vector<TokenSeq>& pred_tokens,
                          const std::vector<SemanticTree>& gold) {
  if (pred_tokens.size() != gold.size()) throw DataError("exact_match: misaligned lists");
  if (gold.empty()) throw DataError("exact_match: empty corpus");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    SemanticTree t;
    if (!try_delinearise(pred_tokens[i], &t)) continue;
    if (pred_tokens[i] == gold[i].linearise()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

struct ErrorTaxonomy {
  long long missing = 0;    // gold asserted, predicted not_mention
  long long redundant = 0;  // predicted asserted, gold not_mention
  long long wrong = 0;      // both asserted, values differ
};

inline ErrorTaxonomy error_taxonomy(const std::vector<SlotValueSet>& pred,
                                    const std::vector<SlotValueSet>& gold,
                                    const SlotSchema& schema) {
  if (pred.size() != gold.size()) throw DataError("error_taxonomy: misaligned lists");
  ErrorTaxonomy out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (const auto& s : schema.slots) {
      const auto& pv = pred[i].get(s.name);
      const auto& gv = gold[i].get(s.name);
      const bool p_has = pv != kNotMention, g_has = gv != kNotMention;
      if (g_has && !p_has) ++out.missing;
      else if (!g_has && p_has) ++out.redundant;
      else if (g_has && p_has && pv != gv) ++out.wrong;
    }
  }
  return out;
}

/// Everything the evaluation reports; inapplicable metrics stay unset.
struct MetricReport {
  std::string tag;
  MrMode mode = MrMode::slot_value;
  std::size_t n_examples = 0;
  std::optional<double> bleu4;
  std::optional<double> slot_f1;
  std::optional<double> joint_accuracy;
  std::optional<double> semantic_accuracy;
  std::optional<double> exact_match;
  long long nlu_missing = 0, nlu_redundant = 0, nlu_wrong = 0;
  long long nlg_missing = 0, nlg_wrong = 0;

  std::vector<std::pair<std::string, std::string>> to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    kv.emplace_back("tag", tag);
    kv.emplace_back("mr_mode", mr_mode_name(mode));
    kv.emplace_back("n_examples", std::to_string(n_examples));
    if (bleu4) kv.emplace_back("bleu4", num(*bleu4));
    if (slot_f1) kv.emplace_back("slot_f1", num(*slot_f1));
    if (joint_accuracy) kv.emplace_back("joint_accuracy", num(*joint_accuracy));
    if (semantic_accuracy) kv.emplace_back("semantic_accuracy", num(*semantic_accuracy));
    if (exact_match) kv.emplace_back("exact_match", num(*exact_match));
    kv.emplace_back("nlu_missing", std::to_string(nlu_missing));
    kv.emplace_back("nlu_redundant", std::to_string(nlu_redundant));
    kv.emplace_back("nlu_wrong", std::to_string(nlu_wrong));
    kv.emplace_back("nlg_missing", std::to_string(nlg_missing));
    kv.emplace_back("nlg_wrong", std::to_string(nlg_wrong));
    return kv;
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_kv()) os << k << " " << v << "\n";
    return os.str();
  }

  void check_ranges() const {
    for (const auto& r : {bleu4, slot_f1, joint_accuracy, semantic_accuracy, exact_match})
      if (r && (*r < 0.0 || *r > 1.0)) throw DataError("metric outside [0, 1]");
    if (nlu_missing < 0 || nlu_redundant < 0 || nlu_wrong < 0 || nlg_missing < 0 || nlg_wrong < 0)
      throw DataError("negative error count");
  }
};

}  // namespace jug
