#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace jug {

inline const std::string kNotMention = "not_mention";
inline const std::string kNoneSymbol = "<none>";

/// Ordered slot schema; every value list carries not_mention at position 0.
struct SlotSchema {
  struct Slot {
    std::string name;
    std::vector<std::string> values;  // values[0] == not_mention
  };
  std::vector<Slot> slots;

  const Slot* find(const std::string& name) const {
    for (const auto& s : slots)
      if (s.name == name) return &s;
    return nullptr;
  }

  void add_slot(const std::string& name) {
    slots.push_back(Slot{name, {kNotMention}});
  }

  void add_value(const std::string& slot, const std::string& value) {
    for (auto& s : slots)
      if (s.name == slot) {
        if (std::find(s.values.begin(), s.values.end(), value) == s.values.end())
          s.values.push_back(value);
        return;
      }
    slots.push_back(Slot{slot, {kNotMention, value}});
  }

  void validate() const {
    for (const auto& s : slots) {
      if (s.values.empty() || s.values[0] != kNotMention)
        throw DataError("schema: slot '" + s.name + "' must list " + kNotMention + " first");
      if (s.values.size() < 2)
        throw DataError("schema: slot '" + s.name + "' has no real values");
    }
  }
};

/// Flat meaning representation: asserted slot -> value; absent = not_mention.
struct SlotValueSet {
  std::map<std::string, std::string> asserted;

  const std::string& get(const std::string& slot) const {
    auto it = asserted.find(slot);
    return it == asserted.end() ? kNotMention : it->second;
  }

  void set(const std::string& slot, const std::string& value) {
    if (value == kNotMention)
      asserted.erase(slot);
    else
      asserted[slot] = value;
  }

  bool operator==(const SlotValueSet& other) const { return asserted == other.asserted; }

  void validate(const SlotSchema& schema) const {
    for (const auto& [slot, value] : asserted) {
      const auto* s = schema.find(slot);
      if (!s) throw DataError("slot-value set: unknown slot '" + slot + "'");
      if (std::find(s->values.begin(), s->values.end(), value) == s->values.end())
        throw DataError("slot-value set: value '" + value + "' not declared for slot '" + slot +
                        "'");
    }
  }

  /// Canonical symbol sequence for the NLG encoder: schema order, two symbols
  /// per asserted slot; an empty set becomes the dedicated <none> symbol.
  std::vector<std::string> linearise(const SlotSchema& schema) const {
    std::vector<std::string> out;
    for (const auto& s : schema.slots) {
      auto it = asserted.find(s.name);
      if (it == asserted.end()) continue;
      out.push_back(s.name);
      out.push_back(it->second);
    }
    if (out.empty()) out.push_back(kNoneSymbol);
    return out;
  }

  /// "slot=value; slot=value" in schema order.
  std::string to_string(const SlotSchema& schema) const {
    std::ostringstream os;
    bool first = true;
    for (const auto& s : schema.slots) {
      auto it = asserted.find(s.name);
      if (it == asserted.end()) continue;
      os << (first ? "" : "; ") << s.name << "=" << it->second;
      first = false;
    }
    return os.str();
  }

  static SlotValueSet parse(const std::string& text) {
    SlotValueSet y;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ';')) {
      const auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      item = strip(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 >= item.size())
        throw DataError("slot-value set: expected slot=value, got '" + item + "'");
      const std::string slot = strip(item.substr(0, eq));
      const std::string value = strip(item.substr(eq + 1));
      if (y.asserted.count(slot)) throw DataError("slot-value set: slot '" + slot + "' repeated");
      if (value != kNotMention) y.asserted[slot] = value;
    }
    return y;
  }
};

/// Bracketed semantic tree. A node carries a tag and an ordered mix of leaf
/// tokens and child nodes; the top-level virtual root has an empty tag and
/// node children only. Linearisation uses "[tag" ... "]" tokens.
struct SemanticTree {
  std::string tag;    // empty on the virtual root and on leaves
  std::string token;  // set only on leaves
  std::vector<SemanticTree> children;

  bool is_leaf() const { return !token.empty(); }

  static SemanticTree leaf(std::string tok) {
    SemanticTree t;
    t.token = std::move(tok);
    return t;
  }

  static SemanticTree node(std::string tag, std::vector<SemanticTree> children = {}) {
    SemanticTree t;
    t.tag = std::move(tag);
    t.children = std::move(children);
    return t;
  }

  bool operator==(const SemanticTree& other) const {
    return tag == other.tag && token == other.token && children == other.children;
  }

  void linearise_into(std::vector<std::string>& out) const {
    if (is_leaf()) {
      out.push_back(token);
      return;
    }
    const bool root = tag.empty();
    if (!root) out.push_back("[" + tag);
    for (const auto& c : children) c.linearise_into(out);
    if (!root) out.push_back("]");
  }

  std::vector<std::string> linearise() const {
    std::vector<std::string> out;
    linearise_into(out);
    return out;
  }

  std::string to_string() const {
    const auto toks = linearise();
    std::ostringstream os;
    for (std::size_t i = 0; i < toks.size(); ++i) os << (i ? " " : "") << toks[i];
    return os.str();
  }
};

inline bool is_open_token(const std::string& tok) { return tok.size() > 1 && tok[0] == '['; }
inline bool is_close_token(const std::string& tok) { return tok == "]"; }

/// Parses a linearised token sequence back to a tree (virtual root). Rejects
/// unbalanced brackets and stray tokens outside any node.
inline SemanticTree delinearise(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw DataError("tree: empty token sequence");
  SemanticTree root;
  std::vector<SemanticTree*> stack{&root};
  for (const auto& tok : tokens) {
    if (is_open_token(tok)) {
      stack.back()->children.push_back(SemanticTree::node(tok.substr(1)));
      stack.push_back(&stack.back()->children.back());
    } else if (is_close_token(tok)) {
      if (stack.size() == 1) throw DataError("tree: unbalanced ']'");
      stack.pop_back();
    } else {
      if (stack.size() == 1)
        throw DataError("tree: token '" + tok + "' outside any bracketed node");
      stack.back()->children.push_back(SemanticTree::leaf(tok));
    }
  }
  if (stack.size() != 1) throw DataError("tree: missing ']' (unbalanced)");
  if (root.children.empty()) throw DataError("tree: no nodes");
  return root;
}

inline bool try_delinearise(const std::vector<std::string>& tokens, SemanticTree* out) {
  try {
    SemanticTree t = delinearise(tokens);
    if (out) *out = std::move(t);
    return true;
  } catch (const DataError&) {
    return false;
  }
}

/// Removes tree-annotation tokens from an utterance, keeping surface words.
inline std::vector<std::string> strip_tree_annotations(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (!is_open_token(t) && !is_close_token(t)) out.push_back(t);
  return out;
}

enum class MrMode { slot_value, tree };

inline const char* mr_mode_name(MrMode m) { return m == MrMode::slot_value ? "slot-value" : "tree"; }

/// Tagged union over the two formal-representation scenarios.
struct MeaningRepresentation {
  MrMode mode = MrMode::slot_value;
  SlotValueSet slots;
  SemanticTree tree;

  bool operator==(const MeaningRepresentation& o) const {
    if (mode != o.mode) return false;
    return mode == MrMode::slot_value ? slots == o.slots : tree == o.tree;
  }

  std::vector<std::string> linearise(const SlotSchema& schema) const {
    return mode == MrMode::slot_value ? slots.linearise(schema) : tree.linearise();
  }

  std::string to_string(const SlotSchema& schema) const {
    return mode == MrMode::slot_value ? slots.to_string(schema) : tree.to_string();
  }
};

}  // namespace jug
