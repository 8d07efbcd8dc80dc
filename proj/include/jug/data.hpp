#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mr.hpp"
#include "rng.hpp"
#include "vocab.hpp"

namespace jug {

/// Whitespace + punctuation tokenizer, lowercasing. Bracket annotation tokens
/// ("[tag", "]") survive intact.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::string spaced;
  spaced.reserve(text.size() * 2);
  for (char c : text) {
    if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') {
      spaced.push_back(' ');
      spaced.push_back(c);
      spaced.push_back(' ');
    } else {
      spaced.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  std::vector<std::string> out;
  std::istringstream is(spaced);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::ostringstream os;
  for (std::size_t i = 0; i < toks.size(); ++i) os << (i ? " " : "") << toks[i];
  return os.str();
}

struct LabelledPair {
  std::string id;
  std::vector<std::string> x;
  MeaningRepresentation y;
};

struct UnlabelledX {
  std::string id;
  std::vector<std::string> x;
};

struct UnlabelledY {
  std::string id;
  MeaningRepresentation y;
};

/// value -> surface token sequences, per slot; drives semantic accuracy.
struct SurfaceLexicon {
  std::map<std::string, std::map<std::string, std::vector<std::vector<std::string>>>> forms;

  void add(const std::string& slot, const std::string& value, std::vector<std::string> surface) {
    forms[slot][value].push_back(std::move(surface));
  }

  const std::vector<std::vector<std::string>>& lookup(const std::string& slot,
                                                      const std::string& value) const {
    auto si = forms.find(slot);
    if (si == forms.end()) throw DataError("surface lexicon: no entry for slot '" + slot + "'");
    auto vi = si->second.find(value);
    if (vi == si->second.end())
      throw DataError("surface lexicon: no entry for value '" + value + "' of slot '" + slot + "'");
    return vi->second;
  }
};

/// In-memory corpus: labelled pairs plus the two unlabelled pools per split.
struct Corpus {
  MrMode mode = MrMode::slot_value;
  SlotSchema schema;        // slot mode
  SurfaceLexicon lexicon;   // slot mode
  std::set<std::string> formal_tokens;  // tree mode: closed token inventory

  std::vector<LabelledPair> train;
  std::vector<UnlabelledX> unlabelled_x;
  std::vector<UnlabelledY> unlabelled_y;
  std::vector<LabelledPair> valid;
  std::vector<LabelledPair> test;

  std::size_t total_examples() const {
    return train.size() + unlabelled_x.size() + unlabelled_y.size() + valid.size() + test.size();
  }
};

namespace detail {

inline MeaningRepresentation parse_mr(const std::string& text, MrMode mode, int line_no) {
  MeaningRepresentation mr;
  mr.mode = mode;
  try {
    if (mode == MrMode::slot_value)
      mr.slots = SlotValueSet::parse(text);
    else
      mr.tree = delinearise(tokenize(text));
  } catch (const DataError& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
  return mr;
}

inline void register_mr(Corpus& c, const MeaningRepresentation& mr) {
  if (c.mode == MrMode::slot_value) {
    for (const auto& [slot, value] : mr.slots.asserted) {
      c.schema.add_value(slot, value);
      c.lexicon.add(slot, value, tokenize(value));
    }
  } else {
    for (const auto& tok : mr.tree.linearise()) c.formal_tokens.insert(tok);
  }
}

}  // namespace detail

/// One record per line: id TAB utterance TAB meaning representation. A record
/// with an empty MR field is an unlabelled utterance; one with an empty
/// utterance is an unlabelled MR. Lines starting with '#' are comments.
inline void load_records(const std::string& path, MrMode mode, bool strip_annotations,
                         std::vector<LabelledPair>& pairs, std::vector<UnlabelledX>* pool_x,
                         std::vector<UnlabelledY>* pool_y, std::set<std::string>& seen_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    if (t1 == std::string::npos)
      throw DataError(path + " line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    const auto t2 = line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw DataError(path + " line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    const std::string id = line.substr(0, t1);
    const std::string x_text = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string y_text = line.substr(t2 + 1);
    if (id.empty()) throw DataError(path + " line " + std::to_string(line_no) + ": empty id");
    if (!seen_ids.insert(id).second)
      throw DataError(path + " line " + std::to_string(line_no) + ": duplicate id '" + id + "'");

    std::vector<std::string> x = tokenize(x_text);
    if (mode == MrMode::tree && strip_annotations) x = strip_tree_annotations(x);

    const bool has_x = !x.empty();
    const bool has_y = !y_text.empty();
    if (!has_x && !has_y)
      throw DataError(path + " line " + std::to_string(line_no) + ": record has neither side");
    if (has_x && has_y) {
      pairs.push_back({id, std::move(x), detail::parse_mr(y_text, mode, line_no)});
    } else if (has_x) {
      if (!pool_x) throw DataError(path + " line " + std::to_string(line_no) + ": unlabelled record not allowed here");
      pool_x->push_back({id, std::move(x)});
    } else {
      if (!pool_y) throw DataError(path + " line " + std::to_string(line_no) + ": unlabelled record not allowed here");
      pool_y->push_back({id, detail::parse_mr(y_text, mode, line_no)});
    }
  }
}

/// Loads a corpus from train/valid/test record files (valid and test may be
/// empty paths). Builds the schema / formal token inventory from every gold
/// MR and validates labelled records against it.
inline Corpus load_corpus(const std::string& train_path, const std::string& valid_path,
                          const std::string& test_path, MrMode mode,
                          bool strip_annotations = true) {
  Corpus c;
  c.mode = mode;
  std::set<std::string> ids;
  load_records(train_path, mode, strip_annotations, c.train, &c.unlabelled_x, &c.unlabelled_y, ids);
  if (!valid_path.empty()) load_records(valid_path, mode, strip_annotations, c.valid, nullptr, nullptr, ids);
  if (!test_path.empty()) load_records(test_path, mode, strip_annotations, c.test, nullptr, nullptr, ids);

  for (const auto& split : {&c.train, &c.valid, &c.test})
    for (const auto& p : *split) detail::register_mr(c, p.y);
  for (const auto& u : c.unlabelled_y) detail::register_mr(c, u.y);
  if (mode == MrMode::slot_value) {
    c.schema.validate();
    for (const auto& split : {&c.train, &c.valid, &c.test})
      for (const auto& p : *split) p.y.slots.validate(c.schema);
  }
  return c;
}

inline bool is_standard_fraction(double f) {
  for (double s : {0.05, 0.1, 0.25, 0.5, 1.0})
    if (std::abs(f - s) < 1e-12) return true;
  return false;
}

/// Deterministic labelled/unlabelled partition of the train split. The
/// withheld remainder contributes its x to the unlabelled-x pool and its y to
/// the unlabelled-y pool; both pools are shuffled independently so no
/// implicit pairing survives.
inline Corpus make_split(const Corpus& corpus, double labelled_fraction, std::uint64_t seed) {
  if (!(labelled_fraction > 0.0) || labelled_fraction > 1.0)
    throw DataError("labelled fraction must lie in (0, 1], got " +
                    std::to_string(labelled_fraction));
  Corpus out = corpus;
  out.train.clear();
  out.unlabelled_x = corpus.unlabelled_x;
  out.unlabelled_y = corpus.unlabelled_y;

  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::derive(seed, "make_split");
  rng.shuffle(order);
  const std::size_t n_labelled =
      static_cast<std::size_t>(std::llround(labelled_fraction * static_cast<double>(order.size())));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& p = corpus.train[order[i]];
    if (i < n_labelled) {
      out.train.push_back(p);
    } else {
      out.unlabelled_x.push_back({p.id, p.x});
      out.unlabelled_y.push_back({p.id, p.y});
    }
  }
  Rng rx = Rng::derive(seed, "make_split.pool_x");
  Rng ry = Rng::derive(seed, "make_split.pool_y");
  rx.shuffle(out.unlabelled_x);
  ry.shuffle(out.unlabelled_y);
  return out;
}

/// Split manifest: pool TAB id, one line per example, reproducible from the
/// seed alone.
inline std::string split_manifest(const Corpus& c) {
  std::ostringstream os;
  for (const auto& p : c.train) os << "labelled\t" << p.id << "\n";
  for (const auto& u : c.unlabelled_x) os << "unlabelled_x\t" << u.id << "\n";
  for (const auto& u : c.unlabelled_y) os << "unlabelled_y\t" << u.id << "\n";
  return os.str();
}

/// Natural vocabulary from training utterances (labelled + unlabelled pool)
/// with a frequency cutoff; formal vocabulary closed over the schema/grammar.
inline std::pair<Vocabulary, Vocabulary> build_vocab(const Corpus& corpus, std::size_t min_count) {
  if (corpus.train.empty() && corpus.unlabelled_x.empty())
    throw DataError("build_vocab: empty training split");

  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  auto tally = [&](const std::vector<std::string>& toks) {
    for (const auto& t : toks) {
      if (counts[t]++ == 0) order.push_back(t);
    }
  };
  for (const auto& p : corpus.train) tally(p.x);
  for (const auto& u : corpus.unlabelled_x) tally(u.x);

  Vocabulary nat(false);
  for (const auto& t : order)
    if (counts[t] >= min_count) nat.add(t);

  Vocabulary formal(true);
  if (corpus.mode == MrMode::slot_value) {
    formal.add(kNoneSymbol);
    for (const auto& s : corpus.schema.slots) {
      formal.add(s.name);
      for (const auto& v : s.values)
        if (v != kNotMention) formal.add(v);
    }
  } else {
    for (const auto& t : corpus.formal_tokens) formal.add(t);
  }
  return {nat, formal};
}

inline void save_records(const std::string& path, const Corpus& c,
                         const std::vector<LabelledPair>& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write data file: " + path);
  for (const auto& p : split)
    out << p.id << "\t" << join_tokens(p.x) << "\t" << p.y.to_string(c.schema) << "\n";
}

}  // namespace jug
