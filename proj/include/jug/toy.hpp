#pragma once

#include <string>
#include <vector>

#include "data.hpp"

namespace jug {

/// Deterministic synthetic grammar: K slots with V values each (plus
/// not_mention), or the tree analogue where each asserted argument may wrap
/// its value in a modifier node. Each meaning representation has exactly one
/// canonical surface form, picked among a few fixed templates by a hash of
/// the MR, so the y -> utterance mapping stays injective.
struct ToyGrammar {
  MrMode mode = MrMode::slot_value;
  std::size_t n_slots = 3;
  std::size_t n_values = 4;
  std::size_t n_variants = 3;

  std::size_t radix() const {
    return mode == MrMode::slot_value ? n_values + 1 : 2 * n_values + 1;
  }

  /// Number of distinct meaning representations the grammar admits.
  std::size_t admissible() const {
    std::size_t total = 1;
    for (std::size_t k = 0; k < n_slots; ++k) {
      if (total > (std::size_t{1} << 48) / radix())
        throw DataError("toy grammar: admissible space too large to enumerate");
      total *= radix();
    }
    return total;
  }

  std::string slot_name(std::size_t k) const {
    return (mode == MrMode::slot_value ? "slot" : "arg") + std::to_string(k + 1);
  }

  std::string value_name(std::size_t k, std::size_t j) const {
    return (mode == MrMode::slot_value ? "val" : "tv") + std::to_string(k + 1) + "_" +
           std::to_string(j);
  }

  SlotSchema schema() const {
    SlotSchema s;
    for (std::size_t k = 0; k < n_slots; ++k) {
      s.add_slot(slot_name(k));
      for (std::size_t j = 1; j <= n_values; ++j) s.add_value(slot_name(k), value_name(k, j));
    }
    return s;
  }

  MeaningRepresentation mr_at(std::size_t index) const {
    MeaningRepresentation mr;
    mr.mode = mode;
    if (mode == MrMode::slot_value) {
      mr.slots = SlotValueSet{};
      std::size_t rest = index;
      for (std::size_t k = 0; k < n_slots; ++k) {
        const std::size_t digit = rest % radix();
        rest /= radix();
        if (digit > 0) mr.slots.set(slot_name(k), value_name(k, digit));
      }
    } else {
      SemanticTree inform = SemanticTree::node("inform");
      std::size_t rest = index;
      for (std::size_t k = 0; k < n_slots; ++k) {
        const std::size_t digit = rest % radix();
        rest /= radix();
        if (digit == 0) continue;
        if (digit <= n_values) {
          inform.children.push_back(
              SemanticTree::node(slot_name(k), {SemanticTree::leaf(value_name(k, digit))}));
        } else {
          inform.children.push_back(SemanticTree::node(
              slot_name(k),
              {SemanticTree::node("mod", {SemanticTree::leaf(value_name(k, digit - n_values))})}));
        }
      }
      mr.tree = SemanticTree::node("", {inform});
      mr.tree.tag.clear();
    }
    return mr;
  }

  std::vector<std::string> utterance_for(const MeaningRepresentation& mr) const {
    if (mode == MrMode::slot_value) {
      const SlotSchema sch = schema();
      const std::size_t variant = fnv1a(mr.slots.to_string(sch)) % n_variants;
      std::vector<std::string> out;
      for (std::size_t k = 0; k < n_slots; ++k) {
        const std::string& v = mr.slots.get(slot_name(k));
        if (v == kNotMention) continue;
        switch (variant) {
          case 0: out.insert(out.end(), {"the", slot_name(k), "is", v}); break;
          case 1: out.insert(out.end(), {slot_name(k), "equals", v}); break;
          default: out.insert(out.end(), {"set", slot_name(k), "to", v}); break;
        }
      }
      if (out.empty()) {
        switch (variant) {
          case 0: out = {"nothing", "is", "set"}; break;
          case 1: out = {"no", "preferences"}; break;
          default: out = {"set", "nothing"}; break;
        }
      }
      if (variant == 1) out.push_back("thanks");
      if (variant == 2) out.push_back("please");
      out.push_back(".");
      return out;
    }
    // Tree mode: walk the inform node in order.
    std::vector<std::string> out;
    const SemanticTree& inform = mr.tree.children.at(0);
    for (const auto& child : inform.children) {
      out.insert(out.end(), {"the", child.tag, "is"});
      const SemanticTree& inner = child.children.at(0);
      if (inner.is_leaf()) {
        out.push_back(inner.token);
      } else {
        out.push_back("roughly");
        out.push_back(inner.children.at(0).token);
      }
    }
    if (out.empty()) out = {"nothing", "to", "report"};
    out.push_back(".");
    return out;
  }

  SurfaceLexicon lexicon() const {
    SurfaceLexicon lex;
    for (std::size_t k = 0; k < n_slots; ++k)
      for (std::size_t j = 1; j <= n_values; ++j)
        lex.add(slot_name(k), value_name(k, j), {value_name(k, j)});
    return lex;
  }
};

/// n distinct (utterance, y) pairs, deterministic in the seed; every pair
/// lands in the train split. Rejects n above the admissible count.
inline Corpus generate_toy(const ToyGrammar& grammar, std::size_t n, std::uint64_t seed) {
  const std::size_t total = grammar.admissible();
  if (n > total)
    throw DataError("toy grammar admits only " + std::to_string(total) + " distinct MRs, asked for " +
                    std::to_string(n));
  std::vector<std::size_t> indices(total);
  for (std::size_t i = 0; i < total; ++i) indices[i] = i;
  Rng rng = Rng::derive(seed, "generate_toy");
  rng.shuffle(indices);

  Corpus c;
  c.mode = grammar.mode;
  if (grammar.mode == MrMode::slot_value) {
    c.schema = grammar.schema();
    c.lexicon = grammar.lexicon();
  }
  for (std::size_t i = 0; i < n; ++i) {
    MeaningRepresentation mr = grammar.mr_at(indices[i]);
    LabelledPair p{"toy" + std::to_string(indices[i]), grammar.utterance_for(mr), std::move(mr)};
    if (grammar.mode == MrMode::tree)
      for (const auto& tok : p.y.tree.linearise()) c.formal_tokens.insert(tok);
    c.train.push_back(std::move(p));
  }
  return c;
}

/// Toy corpus with train/valid/test splits carved from one shuffled draw.
inline Corpus generate_toy_splits(const ToyGrammar& grammar, std::size_t n_train,
                                  std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
  Corpus all = generate_toy(grammar, n_train + n_valid + n_test, seed);
  Corpus c = all;
  c.train.assign(all.train.begin(), all.train.begin() + n_train);
  c.valid.assign(all.train.begin() + n_train, all.train.begin() + n_train + n_valid);
  c.test.assign(all.train.begin() + n_train + n_valid, all.train.end());
  return c;
}

}  // namespace jug
