#pragma once

// Brute-force metric oracles, written independently of jug/metrics.hpp:
// different containers, different scanning strategies, same documented
// definitions. Plus random-case generators shared with the acceptance suite.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "jug/metrics.hpp"
#include "jug/rng.hpp"

namespace jugoracle {

using jug::TokenSeq;

// ---- BLEU ----

inline double oracle_bleu4(const std::vector<TokenSeq>& hyps,
                           const std::vector<std::vector<TokenSeq>>& refs) {
  long long num[5] = {0, 0, 0, 0, 0}, den[5] = {0, 0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<long long>(hyps[i].size());
    // closest reference length, ties toward shorter
    long long best = static_cast<long long>(refs[i][0].size());
    for (const auto& r : refs[i]) {
      const long long len = static_cast<long long>(r.size());
      const long long h = static_cast<long long>(hyps[i].size());
      if (std::llabs(len - h) < std::llabs(best - h) ||
          (std::llabs(len - h) == std::llabs(best - h) && len < best))
        best = len;
    }
    ref_len += best;
    for (int n = 1; n <= 4; ++n) {
      std::map<TokenSeq, long long> hc;
      for (std::size_t s = 0; s + n <= hyps[i].size(); ++s)
        ++hc[TokenSeq(hyps[i].begin() + s, hyps[i].begin() + s + n)];
      std::map<TokenSeq, long long> rc;
      for (const auto& r : refs[i]) {
        std::map<TokenSeq, long long> one;
        for (std::size_t s = 0; s + n <= r.size(); ++s)
          ++one[TokenSeq(r.begin() + s, r.begin() + s + n)];
        for (const auto& [k, v] : one) rc[k] = std::max(rc[k], v);
      }
      for (const auto& [k, v] : hc) {
        den[n] += v;
        auto it = rc.find(k);
        if (it != rc.end()) num[n] += std::min(v, it->second);
      }
    }
  }
  if (hyp_len == 0 || num[1] == 0) return 0.0;
  double product = 1.0;
  for (int n = 1; n <= 4; ++n) {
    const double p = (n >= 2 && num[n] == 0)
                         ? (static_cast<double>(num[n]) + 1.0) / (static_cast<double>(den[n]) + 1.0)
                         : static_cast<double>(num[n]) / static_cast<double>(den[n]);
    product *= std::pow(p, 0.25);
  }
  const double bp =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * product;
}

// ---- slot metrics ----

inline double oracle_joint_accuracy(const std::vector<jug::SlotValueSet>& pred,
                                    const std::vector<jug::SlotValueSet>& gold) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].asserted == gold[i].asserted) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double oracle_slot_f1(const std::vector<jug::SlotValueSet>& pred,
                             const std::vector<jug::SlotValueSet>& gold) {
  std::multiset<std::string> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (const auto& [s, v] : pred[i].asserted) p.insert(std::to_string(i) + "|" + s + "|" + v);
    for (const auto& [s, v] : gold[i].asserted) g.insert(std::to_string(i) + "|" + s + "|" + v);
  }
  std::size_t correct = 0;
  for (const auto& item : p) correct += g.count(item);
  if (p.empty() && g.empty()) return 1.0;
  if (correct == 0) return 0.0;
  const double prec = static_cast<double>(correct) / static_cast<double>(p.size());
  const double rec = static_cast<double>(correct) / static_cast<double>(g.size());
  return 2.0 * prec * rec / (prec + rec);
}

inline jug::ErrorTaxonomy oracle_taxonomy(const std::vector<jug::SlotValueSet>& pred,
                                          const std::vector<jug::SlotValueSet>& gold) {
  jug::ErrorTaxonomy out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::set<std::string> slots;
    for (const auto& [s, v] : pred[i].asserted) slots.insert(s);
    for (const auto& [s, v] : gold[i].asserted) slots.insert(s);
    for (const auto& s : slots) {
      const bool p_has = pred[i].asserted.count(s) != 0;
      const bool g_has = gold[i].asserted.count(s) != 0;
      if (g_has && !p_has) ++out.missing;
      if (!g_has && p_has) ++out.redundant;
      if (g_has && p_has && pred[i].asserted.at(s) != gold[i].asserted.at(s)) ++out.wrong;
    }
  }
  return out;
}

inline jug::SemanticAccuracy oracle_semantic_accuracy(const std::vector<TokenSeq>& utts,
                                                      const std::vector<jug::SlotValueSet>& gold,
                                                      const jug::SlotSchema& schema,
                                                      const jug::SurfaceLexicon& lex) {
  auto delim_join = [](const TokenSeq& t) {
    std::string s = "\x1e";
    for (const auto& tok : t) s += tok + "\x1e";
    return s;
  };
  jug::SemanticAccuracy out;
  long long correct = 0, total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::string hay = delim_join(utts[i]);
    for (const auto& [slot, value] : gold[i].asserted) {
      ++total;
      bool found = false;
      for (const auto& form : lex.lookup(slot, value)) {
        const std::string pat = delim_join(form);
        found = found || hay.find(pat.substr(0, pat.size())) != std::string::npos;
      }
      if (found) ++correct;
      else ++out.missing;
      bool bad = false;
      for (const auto& other : schema.find(slot)->values) {
        if (other == value || other == jug::kNotMention) continue;
        auto fi = lex.forms.find(slot);
        if (fi == lex.forms.end() || !fi->second.count(other)) continue;
        for (const auto& form : fi->second.at(other))
          bad = bad || hay.find(delim_join(form)) != std::string::npos;
      }
      if (bad) ++out.wrong;
    }
  }
  out.rate = total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
  return out;
}

inline bool oracle_tree_equal(const jug::SemanticTree& a, const jug::SemanticTree& b) {
  if (a.tag != b.tag || a.token != b.token || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!oracle_tree_equal(a.children[i], b.children[i])) return false;
  return true;
}

inline double oracle_exact_match(const std::vector<TokenSeq>& pred,
                                 const std::vector<jug::SemanticTree>& gold) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    jug::SemanticTree root;
    std::size_t pos = 0;
    // top level: only bracketed nodes allowed
    bool ok = !pred[i].empty();
    while (ok && pos < pred[i].size()) {
      const std::string& t = pred[i][pos];
      if (t.size() > 1 && t[0] == '[') {
        jug::SemanticTree child;
        child.tag = t.substr(1);
        ++pos;
        std::size_t guard = pos;
        std::function<bool(jug::SemanticTree&)> parse_children = [&](jug::SemanticTree& n) -> bool {
          while (pos < pred[i].size()) {
            const std::string& tok = pred[i][pos];
            if (tok == "]") {
              ++pos;
              return true;
            }
            if (tok.size() > 1 && tok[0] == '[') {
              jug::SemanticTree c;
              c.tag = tok.substr(1);
              ++pos;
              if (!parse_children(c)) return false;
              n.children.push_back(std::move(c));
            } else {
              jug::SemanticTree leaf;
              leaf.token = tok;
              n.children.push_back(std::move(leaf));
              ++pos;
            }
          }
          return false;  // ran out before ']'
        };
        (void)guard;
        ok = parse_children(child);
        if (ok) root.children.push_back(std::move(child));
      } else {
        ok = false;
      }
    }
    if (ok && !root.children.empty() && oracle_tree_equal(root, gold[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

// ---- random case generators ----

inline jug::SlotSchema random_schema(jug::Rng& rng) {
  jug::SlotSchema schema;
  const std::size_t n_slots = 2 + static_cast<std::size_t>(rng.uniform(0, 4));
  for (std::size_t k = 0; k < n_slots; ++k) {
    const std::string slot = "s" + std::to_string(k);
    schema.add_slot(slot);
    const std::size_t n_vals = 2 + static_cast<std::size_t>(rng.uniform(0, 4));
    for (std::size_t j = 0; j < n_vals; ++j)
      schema.add_value(slot, "v" + std::to_string(k) + "_" + std::to_string(j));
  }
  return schema;
}

inline jug::SlotValueSet random_svs(jug::Rng& rng, const jug::SlotSchema& schema) {
  jug::SlotValueSet y;
  for (const auto& s : schema.slots) {
    const std::size_t pick = static_cast<std::size_t>(rng.uniform(0, static_cast<double>(s.values.size())));
    if (pick > 0) y.set(s.name, s.values[pick]);
  }
  return y;
}

inline TokenSeq random_tokens(jug::Rng& rng, const std::vector<std::string>& alphabet,
                              std::size_t max_len) {
  TokenSeq out(static_cast<std::size_t>(rng.uniform(0, static_cast<double>(max_len + 1))));
  for (auto& t : out)
    t = alphabet[static_cast<std::size_t>(rng.uniform(0, static_cast<double>(alphabet.size())))];
  return out;
}

inline jug::SemanticTree random_tree(jug::Rng& rng, std::size_t depth = 0) {
  jug::SemanticTree root;  // virtual root
  const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0, 2.2));
  for (std::size_t i = 0; i < n; ++i) {
    jug::SemanticTree node;
    node.tag = "t" + std::to_string(static_cast<int>(rng.uniform(0, 5)));
    const std::size_t kids = static_cast<std::size_t>(rng.uniform(0, 3.2));
    for (std::size_t k = 0; k < kids; ++k) {
      if (depth < 2 && rng.uniform() < 0.35) {
        jug::SemanticTree sub = random_tree(rng, depth + 1);
        sub.children[0].tag = "d" + std::to_string(static_cast<int>(rng.uniform(0, 4)));
        node.children.push_back(sub.children[0]);
      } else {
        node.children.push_back(jug::SemanticTree::leaf("w" + std::to_string(static_cast<int>(rng.uniform(0, 6)))));
      }
    }
    root.children.push_back(std::move(node));
  }
  return root;
}

}  // namespace jugoracle
