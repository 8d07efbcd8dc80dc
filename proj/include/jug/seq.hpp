#pragma once

#include <string>
#include <vector>

#include "param_store.hpp"
#include "tape.hpp"

namespace jug {

enum class AttentionKind { bilinear, additive };

inline const char* attention_kind_name(AttentionKind k) {
  return k == AttentionKind::bilinear ? "bilinear" : "additive";
}

/// Hidden/cell pair carried between decoder steps.
struct LstmState {
  Var h;
  Var c;
};

/// Per-timestep encoder outputs: each state is the concatenation of the
/// forward and backward LSTM hidden vectors (dimension 2 * d_hidden).
struct EncoderStates {
  std::vector<Var> states;
  Var matrix;  // [T, 2*d_hidden], rows = states
  std::vector<std::size_t> token_ids;

  std::size_t length() const { return states.size(); }
};

inline void register_lstm(ParameterStore& store, const std::string& prefix, std::size_t d_in,
                          std::size_t d_hidden, Rng& rng) {
  store.add(prefix + ".wx", Shape{4 * d_hidden, d_in}, rng);
  store.add(prefix + ".wh", Shape{4 * d_hidden, d_hidden}, rng);
  store.add(prefix + ".b", Shape{4 * d_hidden}, rng);
}

inline LstmState lstm_zero_state(Tape& t, std::size_t d_hidden) {
  return {t.constant_vec(std::vector<double>(d_hidden, 0.0)),
          t.constant_vec(std::vector<double>(d_hidden, 0.0))};
}

/// Standard LSTM gate equations, gate order [input | forget | candidate | output].
inline LstmState lstm_step(Tape& t, ParameterStore& store, const std::string& prefix,
                           const LstmState& state, Var x_emb) {
  Var wx = t.param(store.at(prefix + ".wx"));
  Var wh = t.param(store.at(prefix + ".wh"));
  Var b = t.param(store.at(prefix + ".b"));
  const std::size_t d = t.shape(state.h)[0];
  if (t.shape(wx)[1] != t.shape(x_emb)[0] || t.shape(wh)[1] != d)
    throw ShapeError("lstm_step: input " + shape_str(t.shape(x_emb)) + " hidden " +
                     shape_str(t.shape(state.h)) + " vs weights " + shape_str(t.shape(wx)) + "," +
                     shape_str(t.shape(wh)));
  Var pre = t.add(t.add(t.matvec(wx, x_emb), t.matvec(wh, state.h)), b);
  Var i = t.sigmoid_(t.slice(pre, 0, d));
  Var f = t.sigmoid_(t.slice(pre, d, d));
  Var g = t.tanh_(t.slice(pre, 2 * d, d));
  Var o = t.sigmoid_(t.slice(pre, 3 * d, d));
  Var c_next = t.add(t.mul(f, state.c), t.mul(i, g));
  Var h_next = t.mul(o, t.tanh_(c_next));
  return {h_next, c_next};
}

/// Bi-directional encoder over an id sequence. `prefix` owns the ".fwd" and
/// ".bwd" cells; `embed` names the embedding table.
inline EncoderStates bilstm_encode(Tape& t, ParameterStore& store, const std::string& prefix,
                                   const std::string& embed, const std::vector<std::size_t>& ids,
                                   std::size_t d_hidden) {
  if (ids.empty()) throw DataError("bilstm_encode: empty token sequence");
  Var table = t.param(store.at(embed));
  const std::size_t vocab = t.shape(table)[0];
  for (std::size_t id : ids)
    if (id >= vocab)
      throw DataError("bilstm_encode: token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(vocab));
  const std::size_t n = ids.size();
  std::vector<Var> emb(n);
  for (std::size_t i = 0; i < n; ++i) emb[i] = t.embedding(table, ids[i]);

  std::vector<Var> fwd(n), bwd(n);
  LstmState sf = lstm_zero_state(t, d_hidden);
  for (std::size_t i = 0; i < n; ++i) {
    sf = lstm_step(t, store, prefix + ".fwd", sf, emb[i]);
    fwd[i] = sf.h;
  }
  LstmState sb = lstm_zero_state(t, d_hidden);
  for (std::size_t i = n; i-- > 0;) {
    sb = lstm_step(t, store, prefix + ".bwd", sb, emb[i]);
    bwd[i] = sb.h;
  }

  EncoderStates out;
  out.token_ids = ids;
  out.states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.states.push_back(t.concat({fwd[i], bwd[i]}));
  out.matrix = t.stack_rows(out.states);
  return out;
}

/// Average pooling over encoder states.
inline Var pool(Tape& t, const EncoderStates& H) {
  if (H.states.empty()) throw DataError("pool: empty encoder states");
  return t.mean_axis0(H.matrix);
}

inline void register_attention(ParameterStore& store, const std::string& prefix, AttentionKind kind,
                               std::size_t d_hidden, Rng& rng) {
  if (kind == AttentionKind::bilinear) {
    store.add(prefix + ".w", Shape{2 * d_hidden, d_hidden}, rng);
  } else {
    store.add(prefix + ".w1", Shape{d_hidden, d_hidden}, rng);
    store.add(prefix + ".w2", Shape{d_hidden, 2 * d_hidden}, rng);
    store.add(prefix + ".v", Shape{1, d_hidden}, rng);
  }
}

struct AttentionResult {
  Var context;  // [2*d_hidden]
  Var weights;  // [T], nonnegative, sums to 1
};

/// Attention over encoder states. Bilinear scoring h_enc . (W g) by default;
/// the additive form v . tanh(W1 g + W2 h_enc) is selectable in config.
inline AttentionResult attention(Tape& t, ParameterStore& store, const std::string& prefix,
                                 AttentionKind kind, Var g, const EncoderStates& H) {
  if (H.states.empty()) throw DataError("attention: empty encoder states");
  Var scores;
  if (kind == AttentionKind::bilinear) {
    Var w = t.param(store.at(prefix + ".w"));
    scores = t.matvec(H.matrix, t.matvec(w, g));
  } else {
    Var w1 = t.param(store.at(prefix + ".w1"));
    Var w2 = t.param(store.at(prefix + ".w2"));
    Var v = t.param(store.at(prefix + ".v"));  // [1, d_a]
    Var pre = t.add_rowvec(t.matmul_nt(H.matrix, w2), t.matvec(w1, g));  // [T, d_a]
    scores = t.matvec(t.tanh_(pre), t.embedding(v, 0));
  }
  Var weights = t.softmax(scores);
  Var context = t.tmatvec(H.matrix, weights);
  return {context, weights};
}

inline void register_head(ParameterStore& store, const std::string& prefix, std::size_t vocab,
                          std::size_t in_dim, Rng& rng) {
  store.add(prefix + ".w", Shape{vocab, in_dim}, rng);
  store.add(prefix + ".b", Shape{vocab}, rng);
}

/// Affine projection of the concatenated head inputs to vocabulary logits.
inline Var head_logits(Tape& t, ParameterStore& store, const std::string& prefix,
                       const std::vector<Var>& parts) {
  Var w = t.param(store.at(prefix + ".w"));
  Var b = t.param(store.at(prefix + ".b"));
  Var in = parts.size() == 1 ? parts[0] : t.concat(parts);
  if (t.shape(w)[1] != t.shape(in)[0])
    throw ShapeError("output_head: input " + shape_str(t.shape(in)) + " vs weights " +
                     shape_str(t.shape(w)));
  return t.add(t.matvec(w, in), b);
}

/// Token distribution of the output head.
inline Var output_head(Tape& t, ParameterStore& store, const std::string& prefix,
                       const std::vector<Var>& parts) {
  return t.softmax(head_logits(t, store, prefix, parts));
}

}  // namespace jug
