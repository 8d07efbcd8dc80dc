#include <gtest/gtest.h>

#include <cmath>

#include "jug/seq.hpp"
#include "support/testutil.hpp"

using jug::AttentionKind;
using jug::EncoderStates;
using jug::LstmState;
using jug::ParameterStore;
using jug::Rng;
using jug::Shape;
using jug::Tape;
using jug::Var;

namespace {

void randomize(ParameterStore& store, Rng& rng, double scale = 0.4) {
  for (auto& [name, t] : store.entries())
    for (auto& x : t.value) x = rng.uniform(-scale, scale);
}

void zero(ParameterStore& store) {
  for (auto& [name, t] : store.entries())
    for (auto& x : t.value) x = 0.0;
}

}  // namespace

TEST(LstmStep, AllZeroWeightsZeroStateGiveZeros) {
  Rng rng(1);
  ParameterStore store;
  jug::register_lstm(store, "cell", 3, 4, rng);
  zero(store);
  Tape t;
  LstmState st = jug::lstm_zero_state(t, 4);
  LstmState next = jug::lstm_step(t, store, "cell", st, t.constant_vec({0, 0, 0}));
  for (double x : t.val(next.h)) EXPECT_EQ(x, 0.0);
  for (double x : t.val(next.c)) EXPECT_EQ(x, 0.0);
}

TEST(LstmStep, ZeroWeightsHalveTheCell) {
  // All gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0, so
  // c' = 0.5 c and h' = 0.5 tanh(0.5 c).
  Rng rng(1);
  ParameterStore store;
  jug::register_lstm(store, "cell", 3, 2, rng);
  zero(store);
  Tape t;
  const std::vector<double> c0{0.8, -1.2};
  LstmState st{t.constant_vec({0, 0}), t.constant_vec(c0)};
  LstmState next = jug::lstm_step(t, store, "cell", st, t.constant_vec({0, 0, 0}));
  for (std::size_t i = 0; i < c0.size(); ++i) {
    EXPECT_NEAR(t.val(next.c)[i], 0.5 * c0[i], 1e-15);
    EXPECT_NEAR(t.val(next.h)[i], 0.5 * std::tanh(0.5 * c0[i]), 1e-15);
  }
}

TEST(LstmStep, ThreeChainedStepsMatchFiniteDifferences) {
  Rng rng(21);
  ParameterStore store;
  jug::register_lstm(store, "cell", 3, 4, rng);
  randomize(store, rng);
  const auto x1 = rng.normal_vec(3), x2 = rng.normal_vec(3), x3 = rng.normal_vec(3);

  auto eval = [&](bool grads) {
    Tape t(grads);
    LstmState st = jug::lstm_zero_state(t, 4);
    st = jug::lstm_step(t, store, "cell", st, t.constant_vec(x1));
    st = jug::lstm_step(t, store, "cell", st, t.constant_vec(x2));
    st = jug::lstm_step(t, store, "cell", st, t.constant_vec(x3));
    Var loss = t.sum(t.mul(st.h, st.h));
    if (grads) t.backward(loss);
    return t.scalar(loss);
  };
  store.zero_grads();
  eval(true);
  auto res = jugtest::check_gradients(store, [&] { return eval(false); });
  EXPECT_LT(res.max_rel_err, 1e-4) << res.worst_param << " ad=" << res.analytic
                                   << " fd=" << res.numeric;
}

TEST(LstmStep, DimensionMismatchRejected) {
  Rng rng(1);
  ParameterStore store;
  jug::register_lstm(store, "cell", 3, 4, rng);
  Tape t;
  LstmState st = jug::lstm_zero_state(t, 4);
  EXPECT_THROW(jug::lstm_step(t, store, "cell", st, t.constant_vec({0, 0})), jug::ShapeError);
}

TEST(BilstmEncode, LengthOneShape) {
  Rng rng(2);
  ParameterStore store;
  store.add("emb", Shape{10, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 4, rng);
  jug::register_lstm(store, "enc.bwd", 3, 4, rng);
  Tape t;
  EncoderStates H = jug::bilstm_encode(t, store, "enc", "emb", {5}, 4);
  ASSERT_EQ(H.length(), 1u);
  EXPECT_EQ(t.shape(H.states[0]), (Shape{8}));
  EXPECT_EQ(t.shape(H.matrix), (Shape{1, 8}));
}

TEST(BilstmEncode, OutputCountEqualsInputLength) {
  Rng rng(3);
  ParameterStore store;
  store.add("emb", Shape{12, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 5, rng);
  jug::register_lstm(store, "enc.bwd", 3, 5, rng);
  randomize(store, rng);
  for (std::size_t len = 1; len <= 9; ++len) {
    std::vector<std::size_t> ids(len);
    for (auto& id : ids) id = static_cast<std::size_t>(rng.uniform(0, 12));
    Tape t;
    EncoderStates H = jug::bilstm_encode(t, store, "enc", "emb", ids, 5);
    EXPECT_EQ(H.length(), len);
  }
}

TEST(BilstmEncode, ReversedInputSwapsHalves) {
  Rng rng(4);
  ParameterStore store;
  store.add("emb", Shape{9, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 4, rng);
  jug::register_lstm(store, "enc.bwd", 3, 4, rng);
  randomize(store, rng);
  // Symmetry requires the two directions to share weights.
  for (const char* leaf : {".wx", ".wh", ".b"})
    store.at(std::string("enc.bwd") + leaf).value = store.at(std::string("enc.fwd") + leaf).value;

  const std::vector<std::size_t> ids{1, 4, 7, 2};
  std::vector<std::size_t> rev(ids.rbegin(), ids.rend());
  Tape t;
  EncoderStates fwd = jug::bilstm_encode(t, store, "enc", "emb", ids, 4);
  EncoderStates bwd = jug::bilstm_encode(t, store, "enc", "emb", rev, 4);
  const std::size_t n = ids.size(), d = 4;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = t.val(fwd.states[i]);
    const auto& b = t.val(bwd.states[n - 1 - i]);
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_NEAR(a[j], b[d + j], 1e-12);
      EXPECT_NEAR(a[d + j], b[j], 1e-12);
    }
  }
}

TEST(BilstmEncode, ZeroWeightsGiveZeroStates) {
  Rng rng(5);
  ParameterStore store;
  store.add("emb", Shape{6, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 4, rng);
  jug::register_lstm(store, "enc.bwd", 3, 4, rng);
  zero(store);
  Tape t;
  EncoderStates H = jug::bilstm_encode(t, store, "enc", "emb", {0, 1, 2}, 4);
  for (const auto& s : H.states)
    for (double x : t.val(s)) EXPECT_EQ(x, 0.0);
}

TEST(BilstmEncode, EmptyAndUnknownIdsRejected) {
  Rng rng(6);
  ParameterStore store;
  store.add("emb", Shape{6, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 4, rng);
  jug::register_lstm(store, "enc.bwd", 3, 4, rng);
  Tape t;
  EXPECT_THROW(jug::bilstm_encode(t, store, "enc", "emb", {}, 4), jug::DataError);
  EXPECT_THROW(jug::bilstm_encode(t, store, "enc", "emb", {6}, 4), jug::DataError);
}

TEST(Pool, SingleStateIsIdentity) {
  Tape t;
  EncoderStates H;
  H.states = {t.constant_vec({1.0, -2.0, 0.5})};
  H.matrix = t.stack_rows(H.states);
  EXPECT_EQ(t.val(jug::pool(t, H)), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Pool, OppositeStatesCancel) {
  Tape t;
  EncoderStates H;
  H.states = {t.constant_vec({1.0, -2.0}), t.constant_vec({-1.0, 2.0})};
  H.matrix = t.stack_rows(H.states);
  for (double x : t.val(jug::pool(t, H))) EXPECT_EQ(x, 0.0);
}

TEST(Pool, MeanOfTwoStates) {
  Tape t;
  EncoderStates H;
  H.states = {t.constant_vec({1.0, 3.0}), t.constant_vec({3.0, 1.0})};
  H.matrix = t.stack_rows(H.states);
  EXPECT_EQ(t.val(jug::pool(t, H)), (std::vector<double>{2.0, 2.0}));
}

TEST(Attention, SingleStatePassesThrough) {
  Rng rng(7);
  ParameterStore store;
  jug::register_attention(store, "att", AttentionKind::bilinear, 2, rng);
  Tape t;
  EncoderStates H;
  H.states = {t.constant_vec({0.3, -0.7, 1.1, 0.2})};
  H.matrix = t.stack_rows(H.states);
  auto [c, w] = jug::attention(t, store, "att", AttentionKind::bilinear, t.constant_vec({1.0, -1.0}), H);
  EXPECT_EQ(t.val(w), (std::vector<double>{1.0}));
  EXPECT_EQ(t.val(c), t.val(H.states[0]));
}

TEST(Attention, EqualScoresAverage) {
  Rng rng(8);
  ParameterStore store;
  jug::register_attention(store, "att", AttentionKind::bilinear, 2, rng);
  zero(store);  // W = 0 -> all scores 0 -> uniform weights
  Tape t;
  EncoderStates H;
  H.states = {t.constant_vec({2.0, 0.0, 0.0, 0.0}), t.constant_vec({0.0, 2.0, 0.0, 0.0})};
  H.matrix = t.stack_rows(H.states);
  auto [c, w] = jug::attention(t, store, "att", AttentionKind::bilinear, t.constant_vec({1.0, 1.0}), H);
  EXPECT_NEAR(t.val(w)[0], 0.5, 1e-15);
  EXPECT_NEAR(t.val(w)[1], 0.5, 1e-15);
  EXPECT_NEAR(t.val(c)[0], 1.0, 1e-15);
  EXPECT_NEAR(t.val(c)[1], 1.0, 1e-15);
}

TEST(Attention, WeightsOnSimplexForRandomInputs) {
  Rng rng(9);
  for (AttentionKind kind : {AttentionKind::bilinear, AttentionKind::additive}) {
    ParameterStore store;
    store.add("emb", Shape{8, 3}, rng);
    jug::register_lstm(store, "enc.fwd", 3, 3, rng);
    jug::register_lstm(store, "enc.bwd", 3, 3, rng);
    jug::register_attention(store, "att", kind, 3, rng);
    randomize(store, rng, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::size_t> ids(1 + static_cast<std::size_t>(rng.uniform(0, 7)));
      for (auto& id : ids) id = static_cast<std::size_t>(rng.uniform(0, 8));
      Tape t;
      EncoderStates H = jug::bilstm_encode(t, store, "enc", "emb", ids, 3);
      auto [c, w] = jug::attention(t, store, "att", kind, t.constant_vec(rng.normal_vec(3)), H);
      double sum = 0.0;
      for (double x : t.val(w)) {
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  for (AttentionKind kind : {AttentionKind::bilinear, AttentionKind::additive}) {
    Rng rng(10);
    ParameterStore store;
    store.add("g", Shape{1, 3}, rng);
    store.add("h", Shape{4, 6}, rng);
    jug::register_attention(store, "att", kind, 3, rng);
    randomize(store, rng, 0.8);

    auto eval = [&](bool grads) {
      Tape t(grads);
      EncoderStates H;
      Var hmat = t.param(store.at("h"));
      for (std::size_t i = 0; i < 4; ++i) H.states.push_back(t.embedding(hmat, i));
      H.matrix = t.stack_rows(H.states);
      auto [c, w] = jug::attention(t, store, "att", kind, t.embedding(t.param(store.at("g")), 0), H);
      Var loss = t.sum(t.mul(c, c));
      if (grads) t.backward(loss);
      return t.scalar(loss);
    };
    store.zero_grads();
    eval(true);
    auto res = jugtest::check_gradients(store, [&] { return eval(false); });
    EXPECT_LT(res.max_rel_err, 1e-4)
        << jug::attention_kind_name(kind) << " " << res.worst_param << " ad=" << res.analytic
        << " fd=" << res.numeric;
  }
}

TEST(Attention, EmptyStatesRejected) {
  Rng rng(11);
  ParameterStore store;
  jug::register_attention(store, "att", AttentionKind::bilinear, 2, rng);
  Tape t;
  EncoderStates H;
  EXPECT_THROW(jug::attention(t, store, "att", AttentionKind::bilinear, t.constant_vec({0, 0}), H),
               jug::DataError);
}

TEST(OutputHead, ZeroWeightsGiveUniform) {
  Rng rng(12);
  ParameterStore store;
  jug::register_head(store, "head", 7, 5, rng);
  zero(store);
  Tape t;
  Var dist = jug::output_head(t, store, "head", {t.constant_vec({1, 2, 3}), t.constant_vec({4, 5})});
  for (double p : t.val(dist)) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
}

TEST(OutputHead, DistributionSumsToOne) {
  Rng rng(13);
  ParameterStore store;
  jug::register_head(store, "head", 9, 6, rng);
  randomize(store, rng, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    Var dist = jug::output_head(t, store, "head", {t.constant_vec(rng.normal_vec(6))});
    double sum = 0.0;
    for (double p : t.val(dist)) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(OutputHead, LargeBiasDominates) {
  Rng rng(14);
  ParameterStore store;
  jug::register_head(store, "head", 8, 4, rng);
  zero(store);
  store.at("head.b").value[3] = 10.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Var dist = jug::output_head(t, store, "head", {t.constant_vec(rng.normal_vec(4))});
    EXPECT_GT(t.val(dist)[3], 0.99);
  }
}

TEST(OutputHead, DimensionMismatchRejected) {
  Rng rng(15);
  ParameterStore store;
  jug::register_head(store, "head", 8, 4, rng);
  Tape t;
  EXPECT_THROW(jug::output_head(t, store, "head", {t.constant_vec({1, 2, 3})}), jug::ShapeError);
}

// Full encoder + attention + head composition against finite differences.
TEST(SeqComposition, EndToEndGradientCheck) {
  Rng rng(16);
  ParameterStore store;
  store.add("emb", Shape{7, 3}, rng);
  jug::register_lstm(store, "enc.fwd", 3, 3, rng);
  jug::register_lstm(store, "enc.bwd", 3, 3, rng);
  jug::register_lstm(store, "dec", 3, 3, rng);
  jug::register_attention(store, "att", AttentionKind::bilinear, 3, rng);
  jug::register_head(store, "head", 7, 6 + 3, rng);
  randomize(store, rng, 0.5);
  const std::vector<std::size_t> ids{2, 5, 1};

  auto eval = [&](bool grads) {
    Tape t(grads);
    EncoderStates H = jug::bilstm_encode(t, store, "enc", "emb", ids, 3);
    LstmState st = jug::lstm_zero_state(t, 3);
    Var table = t.param(store.at("emb"));
    Var loss = t.constant_scalar(0.0);
    for (std::size_t target : {3u, 6u}) {
      st = jug::lstm_step(t, store, "dec", st, t.embedding(table, target));
      auto [c, w] = jug::attention(t, store, "att", AttentionKind::bilinear, st.h, H);
      Var logits = jug::head_logits(t, store, "head", {c, st.h});
      loss = t.add(loss, t.cross_entropy(logits, target));
    }
    if (grads) t.backward(loss);
    return t.scalar(loss);
  };
  store.zero_grads();
  eval(true);
  auto res = jugtest::check_gradients(store, [&] { return eval(false); });
  EXPECT_LT(res.max_rel_err, 1e-4) << res.worst_param << " ad=" << res.analytic
                                   << " fd=" << res.numeric;
}
