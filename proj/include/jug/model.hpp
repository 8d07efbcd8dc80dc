#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "draws.hpp"
#include "latent.hpp"
#include "mr.hpp"
#include "seq.hpp"
#include "vocab.hpp"

namespace jug {

struct JugConfig {
  std::size_t d_hidden = 150;
  std::size_t d_z = 150;
  std::size_t d_embed = 64;
  MrMode mr_mode = MrMode::slot_value;
  AttentionKind attention = AttentionKind::bilinear;
  std::size_t decode_cap_x = 60;  // utterances
  std::size_t decode_cap_y = 80;  // linearised trees
};

enum class DecodeMode { greedy, sample };

/// The JUG model: NLU and NLG encoders/decoders coupled through the shared
/// latent space. One natural-language embedding table serves the NLU encoder
/// and the NLG decoder; one formal table serves the NLG encoder and the
/// tree-mode NLU decoder.
class JugModel {
 public:
  JugModel(JugConfig cfg, SlotSchema schema, Vocabulary nat, Vocabulary formal,
           std::uint64_t init_seed)
      : cfg_(cfg), schema_(std::move(schema)), nat_(std::move(nat)), formal_(std::move(formal)) {
    if (cfg_.mr_mode == MrMode::slot_value && schema_.slots.empty())
      throw ConfigError("slot-value mode requires a nonempty slot schema");
    if (cfg_.mr_mode == MrMode::tree && formal_.size() <= 4)
      throw ConfigError("tree mode requires a formal-token vocabulary");
    Rng rng = Rng::derive(init_seed, "model_init");
    store_.add("nat_embed", Shape{nat_.size(), cfg_.d_embed}, rng);
    store_.add("mr_embed", Shape{formal_.size(), cfg_.d_embed}, rng);
    for (const char* enc : {"enc_x", "enc_y"}) {
      register_lstm(store_, std::string(enc) + ".fwd", cfg_.d_embed, cfg_.d_hidden, rng);
      register_lstm(store_, std::string(enc) + ".bwd", cfg_.d_embed, cfg_.d_hidden, rng);
    }
    register_gaussian_head(store_, "post_x", 2 * cfg_.d_hidden, cfg_.d_z, rng);
    register_gaussian_head(store_, "post_y", 2 * cfg_.d_hidden, cfg_.d_z, rng);

    register_lstm(store_, "dec_x", cfg_.d_embed, cfg_.d_hidden, rng);
    register_attention(store_, "dec_x.att", cfg_.attention, cfg_.d_hidden, rng);
    register_head(store_, "dec_x.out", nat_.size(), 2 * cfg_.d_hidden + cfg_.d_hidden + cfg_.d_z,
                  rng);
    if (cfg_.mr_mode == MrMode::slot_value) {
      for (const auto& s : schema_.slots)
        register_head(store_, "slot_head." + s.name, s.values.size(), cfg_.d_z, rng);
    } else {
      register_lstm(store_, "dec_y", cfg_.d_embed, cfg_.d_hidden, rng);
      register_attention(store_, "dec_y.att", cfg_.attention, cfg_.d_hidden, rng);
      register_head(store_, "dec_y.out", formal_.size(),
                    2 * cfg_.d_hidden + cfg_.d_hidden + cfg_.d_z, rng);
    }
  }

  const JugConfig& config() const { return cfg_; }
  const SlotSchema& schema() const { return schema_; }
  const Vocabulary& nat_vocab() const { return nat_; }
  const Vocabulary& formal_vocab() const { return formal_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  std::vector<std::size_t> encode_x(const std::vector<std::string>& tokens) const {
    return nat_.encode(tokens);
  }
  std::vector<std::size_t> encode_y(const MeaningRepresentation& y) const {
    return formal_.encode(y.linearise(schema_));
  }

  // ---- posteriors ----

  struct Posterior {
    GaussianVars q;
    EncoderStates H;
  };

  /// q(z|x) plus the encoder states needed for tree-mode attention.
  Posterior posterior_x(Tape& t, const std::vector<std::size_t>& x_ids) {
    if (x_ids.empty()) throw DataError("nlu_posterior: empty utterance");
    Posterior p;
    p.H = bilstm_encode(t, store_, "enc_x", "nat_embed", x_ids, cfg_.d_hidden);
    p.q = infer_gaussian(t, store_, "post_x", pool(t, p.H));
    return p;
  }

  /// q(z|y) plus the encoder states used by the surface decoder's attention.
  Posterior posterior_y(Tape& t, const std::vector<std::size_t>& y_ids) {
    if (y_ids.empty()) throw DataError("nlg_posterior: empty meaning representation");
    Posterior p;
    p.H = bilstm_encode(t, store_, "enc_y", "mr_embed", y_ids, cfg_.d_hidden);
    p.q = infer_gaussian(t, store_, "post_y", pool(t, p.H));
    return p;
  }

  // ---- teacher-forced reconstruction terms ----

  /// Sum over all slots of the classifier cross-entropy, not_mention included.
  Var nll_slots(Tape& t, Var z, const SlotValueSet& gold) {
    require_mode(MrMode::slot_value, "nlu_decode_slots");
    Var total = t.constant_scalar(0.0);
    for (const auto& s : schema_.slots) {
      Var logits = head_logits(t, store_, "slot_head." + s.name, {z});
      total = t.add(total, t.cross_entropy(logits, value_index(s, gold.get(s.name))));
    }
    return total;
  }

  /// Teacher-forced NLL of an utterance (EOS included) given z and attention
  /// over the formal-side encoder states.
  Var nll_sequence_x(Tape& t, Var z, const EncoderStates& Hy,
                     const std::vector<std::size_t>& x_ids) {
    return nll_sequence(t, z, Hy, x_ids, "dec_x", "nat_embed");
  }

  /// Teacher-forced NLL of a linearised formal sequence given z and attention
  /// over the utterance-side encoder states.
  Var nll_sequence_y(Tape& t, Var z, const EncoderStates& Hx,
                     const std::vector<std::size_t>& y_ids) {
    require_mode(MrMode::tree, "nlu_decode_tree");
    return nll_sequence(t, z, Hx, y_ids, "dec_y", "mr_embed");
  }

  // ---- decoding ----

  struct DecodedSeq {
    std::vector<std::size_t> ids;  // without EOS
    Var log_prob;                  // log q of the emitted sequence (incl. EOS step)
    bool hit_cap = false;
  };

  struct DecodedSlots {
    SlotValueSet slots;
    Var log_prob;
  };

  /// Autoregressive utterance generation; sample mode draws each token from
  /// the head distribution through `draws`.
  DecodedSeq decode_x(Tape& t, Var z, const EncoderStates& Hy, DecodeMode mode,
                      DrawSource* draws = nullptr) {
    return decode_sequence(t, z, Hy, "dec_x", "nat_embed", cfg_.decode_cap_x, mode, draws);
  }

  /// Formal token sequence decoding for tree mode.
  DecodedSeq decode_y_tree(Tape& t, Var z, const EncoderStates& Hx, DecodeMode mode,
                           DrawSource* draws = nullptr) {
    require_mode(MrMode::tree, "nlu_decode_tree");
    return decode_sequence(t, z, Hx, "dec_y", "mr_embed", cfg_.decode_cap_y, mode, draws);
  }

  /// Per-slot argmax or sampling over each slot's value list.
  DecodedSlots decode_slots(Tape& t, Var z, DecodeMode mode, DrawSource* draws = nullptr) {
    require_mode(MrMode::slot_value, "nlu_decode_slots");
    DecodedSlots out;
    Var nll = t.constant_scalar(0.0);
    for (const auto& s : schema_.slots) {
      Var logits = head_logits(t, store_, "slot_head." + s.name, {z});
      std::size_t pick;
      if (mode == DecodeMode::greedy) {
        pick = argmax(t.val(logits));
      } else {
        if (!draws) throw ConfigError("decode_slots: sample mode needs a draw source");
        pick = draws->categorical(softmax_values(t.val(logits)));
      }
      nll = t.add(nll, t.cross_entropy(logits, pick));
      if (pick > 0) out.slots.set(s.name, s.values[pick]);
    }
    out.log_prob = t.scale(nll, -1.0);
    return out;
  }

  // ---- prediction API ----

  struct NluPrediction {
    std::vector<std::string> tokens;              // linearised output (tree mode)
    std::optional<MeaningRepresentation> mr;      // absent iff not delinearisable
  };

  /// Deterministic NLU: z is the posterior mean, decoding is greedy.
  NluPrediction predict_nlu(const std::vector<std::string>& x_tokens,
                            const std::vector<double>* z_override = nullptr) {
    Tape t(false);
    Posterior px = posterior_x(t, encode_x(x_tokens));
    LatentSample zs = z_override ? LatentSample{*z_override, LatentSource::from_x}
                                 : mean_vector(gaussian_value(t, px.q));
    Var z = t.constant_vec(zs.z);
    NluPrediction out;
    if (cfg_.mr_mode == MrMode::slot_value) {
      DecodedSlots d = decode_slots(t, z, DecodeMode::greedy);
      out.tokens = d.slots.linearise(schema_);
      MeaningRepresentation mr;
      mr.mode = MrMode::slot_value;
      mr.slots = d.slots;
      out.mr = std::move(mr);
    } else {
      DecodedSeq d = decode_y_tree(t, z, px.H, DecodeMode::greedy);
      out.tokens = formal_.decode(d.ids);
      SemanticTree tree;
      if (try_delinearise(out.tokens, &tree)) {
        MeaningRepresentation mr;
        mr.mode = MrMode::tree;
        mr.tree = std::move(tree);
        out.mr = std::move(mr);
      }
    }
    return out;
  }

  /// NLG with a reparameterised z: epsilon may be supplied for exact
  /// reproducibility (zeros decode from the posterior mean); otherwise drawn
  /// from `rng`. Surface decoding is greedy.
  std::vector<std::string> predict_nlg(const MeaningRepresentation& y,
                                       const std::vector<double>* epsilon = nullptr,
                                       Rng* rng = nullptr,
                                       const std::vector<double>* z_override = nullptr) {
    Tape t(false);
    Posterior py = posterior_y(t, encode_y(y));
    std::vector<double> z_val;
    if (z_override) {
      z_val = *z_override;
    } else {
      std::vector<double> eps;
      if (epsilon) {
        eps = *epsilon;
      } else if (rng) {
        eps = rng->normal_vec(cfg_.d_z);
      } else {
        eps.assign(cfg_.d_z, 0.0);
      }
      z_val = reparameterize(gaussian_value(t, py.q), eps, LatentSource::from_y).z;
    }
    DecodedSeq d = decode_x(t, t.constant_vec(z_val), py.H, DecodeMode::greedy);
    return nat_.decode(d.ids);
  }

  /// Posterior means from both sides of a labelled pair (latent inspection).
  std::pair<LatentGaussian, LatentGaussian> posterior_pair(const LabelledPair& p) {
    Tape t(false);
    Posterior px = posterior_x(t, encode_x(p.x));
    Posterior py = posterior_y(t, encode_y(p.y));
    return {gaussian_value(t, px.q), gaussian_value(t, py.q)};
  }

  std::size_t value_index(const SlotSchema::Slot& s, const std::string& value) const {
    const auto it = std::find(s.values.begin(), s.values.end(), value);
    if (it == s.values.end())
      throw DataError("value '" + value + "' not declared for slot '" + s.name + "'");
    return static_cast<std::size_t>(it - s.values.begin());
  }

  static std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  }

 private:
  void require_mode(MrMode m, const char* op) const {
    if (cfg_.mr_mode != m)
      throw ConfigError(std::string(op) + ": model is in " + mr_mode_name(cfg_.mr_mode) + " mode");
  }

  Var nll_sequence(Tape& t, Var z, const EncoderStates& H, const std::vector<std::size_t>& ids,
                   const std::string& dec, const std::string& embed) {
    Var table = t.param(store_.at(embed));
    LstmState st = lstm_zero_state(t, cfg_.d_hidden);
    std::size_t prev = Vocabulary::kBos;
    Var nll = t.constant_scalar(0.0);
    for (std::size_t i = 0; i <= ids.size(); ++i) {
      st = lstm_step(t, store_, dec, st, t.embedding(table, prev));
      auto att = attention(t, store_, dec + ".att", cfg_.attention, st.h, H);
      Var logits = head_logits(t, store_, dec + ".out", {att.context, st.h, z});
      const std::size_t target = i < ids.size() ? ids[i] : Vocabulary::kEos;
      nll = t.add(nll, t.cross_entropy(logits, target));
      prev = target;
    }
    return nll;
  }

  DecodedSeq decode_sequence(Tape& t, Var z, const EncoderStates& H, const std::string& dec,
                             const std::string& embed, std::size_t cap, DecodeMode mode,
                             DrawSource* draws) {
    if (mode == DecodeMode::sample && !draws)
      throw ConfigError("decode: sample mode needs a draw source");
    Var table = t.param(store_.at(embed));
    LstmState st = lstm_zero_state(t, cfg_.d_hidden);
    std::size_t prev = Vocabulary::kBos;
    DecodedSeq out;
    Var nll = t.constant_scalar(0.0);
    for (std::size_t step = 0; step < cap; ++step) {
      st = lstm_step(t, store_, dec, st, t.embedding(table, prev));
      auto att = attention(t, store_, dec + ".att", cfg_.attention, st.h, H);
      Var logits = head_logits(t, store_, dec + ".out", {att.context, st.h, z});
      std::size_t next;
      if (mode == DecodeMode::greedy) {
        next = argmax(t.val(logits));
      } else {
        next = draws->categorical(softmax_values(t.val(logits)));
      }
      nll = t.add(nll, t.cross_entropy(logits, next));
      if (next == Vocabulary::kEos) {
        out.log_prob = t.scale(nll, -1.0);
        return out;
      }
      out.ids.push_back(next);
      prev = next;
    }
    out.hit_cap = true;
    out.log_prob = t.scale(nll, -1.0);
    return out;
  }

  JugConfig cfg_;
  SlotSchema schema_;
  Vocabulary nat_;
  Vocabulary formal_;
  ParameterStore store_;
};

/// Builds a model whose vocabularies and schema come from the corpus.
inline JugModel make_model(const JugConfig& cfg, const Corpus& corpus, std::uint64_t init_seed,
                           std::size_t min_count = 1) {
  auto [nat, formal] = build_vocab(corpus, min_count);
  return JugModel(cfg, corpus.schema, std::move(nat), std::move(formal), init_seed);
}

}  // namespace jug
