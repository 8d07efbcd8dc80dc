#include <gtest/gtest.h>

#include <cmath>

#include "jug/objectives.hpp"
#include "support/reference_model.hpp"
#include "support/testutil.hpp"
#include "support/tiny.hpp"

using jug::BaselineState;
using jug::Corpus;
using jug::DrawTrace;
using jug::JugModel;
using jug::LiveDraws;
using jug::LossResult;
using jug::MrMode;
using jug::Objectives;
using jug::ObjectiveOptions;
using jug::ParameterStore;
using jug::RecordingDraws;
using jug::ReplayDraws;
using jug::Rng;
using jug::Tape;

namespace {

// Draw source that presets epsilon vectors and passes everything else live.
class FixedEps : public jug::DrawSource {
 public:
  FixedEps(std::vector<std::vector<double>> eps, Rng& rng) : eps_(std::move(eps)), live_(rng) {}
  std::vector<double> epsilon(std::size_t d) override {
    if (pos_ < eps_.size()) return eps_[pos_++];
    return live_.epsilon(d);
  }
  std::size_t categorical(const std::vector<double>& p) override { return live_.categorical(p); }
  std::vector<double> detached(const std::vector<double>& v) override { return v; }
  double coeff(double v) override { return v; }

 private:
  std::vector<std::vector<double>> eps_;
  std::size_t pos_ = 0;
  LiveDraws live_;
};

class CoeffOverride : public jug::DrawSource {
 public:
  CoeffOverride(jug::DrawSource& inner, double forced) : inner_(inner), forced_(forced) {}
  std::vector<double> epsilon(std::size_t d) override { return inner_.epsilon(d); }
  std::size_t categorical(const std::vector<double>& p) override { return inner_.categorical(p); }
  std::vector<double> detached(const std::vector<double>& v) override { return inner_.detached(v); }
  double coeff(double) override { return forced_; }

 private:
  jug::DrawSource& inner_;
  double forced_;
};

double grad_abs_sum(const ParameterStore& store, const std::string& name) {
  double s = 0.0;
  for (double g : store.at(name).grad) s += std::abs(g);
  return s;
}

}  // namespace

TEST(PairPath, KlZeroWhenPosteriorsForcedIdentical) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 1);
  JugModel m = jugtest::tiny_model(c);
  // Test double: zero encoders make both pooled vectors zero; shared head
  // biases then force q(z|x) == q(z|y) for every input.
  for (const char* prefix : {"enc_x", "enc_y"})
    for (const char* dir : {".fwd", ".bwd"})
      for (const char* leaf : {".wx", ".wh", ".b"})
        for (auto& v : m.params().at(std::string(prefix) + dir + leaf).value) v = 0.0;
  for (const char* head : {".mu.w", ".mu.b", ".logsig.w", ".logsig.b"})
    m.params().at(std::string("post_y") + head).value =
        m.params().at(std::string("post_x") + head).value;

  Objectives obj(m, {});
  Rng rng(2);
  LiveDraws draws(rng);
  Tape t;
  LossResult r = obj.pair_x_path(t, c.train[0], draws);
  EXPECT_NEAR(r.numbers.kl_qzx_to_prior, 0.0, 1e-12);
}

TEST(PairPath, PeakedSlotHeadsDriveSlotReconToZeroFromAbove) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 3);
  JugModel m = jugtest::tiny_model(c, 3);
  jugtest::scale_params(m.params(), 0.0);
  const auto& pair = c.train[0];
  for (const auto& s : m.schema().slots) {
    auto& b = m.params().at("slot_head." + s.name + ".b").value;
    b[m.value_index(s, pair.y.slots.get(s.name))] = 30.0;
  }
  Objectives obj(m, {});
  Rng rng(4);
  LiveDraws draws(rng);
  Tape t;
  LossResult r = obj.pair_x_path(t, pair, draws);
  EXPECT_GT(r.numbers.recon_y_given_zx, 0.0);
  EXPECT_LT(r.numbers.recon_y_given_zx, 1e-10);
}

TEST(PairPath, ComponentsNonnegativeOnRandomModels) {
  for (int trial = 0; trial < 50; ++trial) {
    const MrMode mode = trial % 2 ? MrMode::tree : MrMode::slot_value;
    Corpus c = jugtest::tiny_corpus(mode, 8, 100 + trial);
    JugModel m = jugtest::tiny_model(c, 300 + trial);
    Objectives obj(m, {});
    Rng rng(500 + trial);
    LiveDraws draws(rng);
    Tape t;
    LossResult rx = obj.pair_x_path(t, c.train[trial % 8], draws);
    LossResult ry = obj.pair_y_path(t, c.train[trial % 8], draws);
    EXPECT_GE(rx.numbers.recon_y_given_zx, 0.0);
    EXPECT_GE(rx.numbers.recon_x_given_zy, 0.0);
    EXPECT_GE(rx.numbers.kl_qzx_to_prior, 0.0);
    EXPECT_GE(ry.numbers.kl_qzy_to_prior, 0.0);
  }
}

TEST(PairPath, MatchesIndependentRecomputationToTenDecimals) {
  for (MrMode mode : {MrMode::slot_value, MrMode::tree}) {
    Corpus c = jugtest::tiny_corpus(mode, 12, 5);
    JugModel m = jugtest::tiny_model(c, 5);
    Objectives obj(m, {});
    Rng rng(6);
    const std::vector<double> eps = rng.normal_vec(m.config().d_z);
    const auto& pair = c.train[2];

    Rng live_rng(7);
    FixedEps draws({eps}, live_rng);
    Tape t;
    LossResult r = obj.pair_x_path(t, pair, draws);
    EXPECT_NEAR(r.numbers.total, jugref::pair_x_path_value(m, pair, eps, 1.0), 1e-10)
        << jug::mr_mode_name(mode);

    Rng live_rng2(8);
    FixedEps draws2({eps}, live_rng2);
    Tape t2;
    LossResult r2 = obj.pair_y_path(t2, pair, draws2);
    EXPECT_NEAR(r2.numbers.total, jugref::pair_y_path_value(m, pair, eps, 1.0), 1e-10)
        << jug::mr_mode_name(mode);
  }
}

TEST(PairPath, SelfInverseDoubleMakesPathLossesEqual) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 9);
  JugModel m = jugtest::tiny_model(c, 9);
  for (const char* prefix : {"enc_x", "enc_y"})
    for (const char* dir : {".fwd", ".bwd"})
      for (const char* leaf : {".wx", ".wh", ".b"})
        for (auto& v : m.params().at(std::string(prefix) + dir + leaf).value) v = 0.0;
  for (const char* head : {".mu.w", ".mu.b", ".logsig.w", ".logsig.b"})
    m.params().at(std::string("post_y") + head).value =
        m.params().at(std::string("post_x") + head).value;

  Objectives obj(m, {});
  Rng rng(10);
  const std::vector<double> eps = rng.normal_vec(m.config().d_z);
  Rng r1(11), r2(12);
  FixedEps dx({eps}, r1), dy({eps}, r2);
  Tape t;
  LossResult lx = obj.pair_x_path(t, c.train[0], dx);
  LossResult ly = obj.pair_y_path(t, c.train[0], dy);
  EXPECT_NEAR(lx.numbers.total, ly.numbers.total, 1e-10);
}

TEST(PairPath, DetachedPriorLeavesPriorOnlyHeadsWithoutGradient) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 13);
  for (bool detach : {true, false}) {
    JugModel m = jugtest::tiny_model(c, 13);
    ObjectiveOptions opts;
    opts.detach_prior = detach;
    Objectives obj(m, opts);
    Rng rng(14);
    LiveDraws draws(rng);
    m.params().zero_grads();
    Tape t;
    LossResult r = obj.pair_x_path(t, c.train[0], draws);
    t.backward(r.total);
    const double mu_grad = grad_abs_sum(m.params(), "post_y.mu.w");
    const double ls_grad = grad_abs_sum(m.params(), "post_y.logsig.w");
    if (detach) {
      EXPECT_EQ(mu_grad, 0.0);
      EXPECT_EQ(ls_grad, 0.0);
    } else {
      EXPECT_GT(mu_grad, 0.0);
      EXPECT_GT(ls_grad, 0.0);
    }
    // The y-side encoder is not prior-exclusive: it also conditions the
    // x-reconstruction through attention, so it keeps a gradient either way.
    EXPECT_GT(grad_abs_sum(m.params(), "enc_y.fwd.wx"), 0.0);
  }
}

TEST(UnlabelledX, PriorSideHeadsGetGradientOnlyThroughSurrogatePaths) {
  for (MrMode mode : {MrMode::slot_value, MrMode::tree}) {
    Corpus c = jugtest::tiny_corpus(mode, 10, 15);
    JugModel m = jugtest::tiny_model(c, 15);
    Objectives obj(m, {});
    Rng rng(16);
    LiveDraws draws(rng);
    BaselineState baseline;
    m.params().zero_grads();
    Tape t;
    LossResult r = obj.unlabelled_x(t, c.train[0].x, baseline, draws);
    t.backward(r.total);
    EXPECT_EQ(grad_abs_sum(m.params(), "post_y.mu.w"), 0.0) << jug::mr_mode_name(mode);
    EXPECT_EQ(grad_abs_sum(m.params(), "post_y.logsig.w"), 0.0) << jug::mr_mode_name(mode);
    // The q(z|x) side and the surface decoder must be trained.
    EXPECT_GT(grad_abs_sum(m.params(), "post_x.mu.w"), 0.0);
    EXPECT_GT(grad_abs_sum(m.params(), "dec_x.out.w"), 0.0);
  }
}

TEST(UnlabelledX, RewardEqualToBaselineZeroesDecoderSurrogateGradient) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 17);
  JugModel m = jugtest::tiny_model(c, 17);
  Objectives obj(m, {});
  Rng rng(18);
  LiveDraws live(rng);
  CoeffOverride draws(live, 0.0);  // (r - b) == 0
  BaselineState baseline;
  m.params().zero_grads();
  Tape t;
  LossResult r = obj.unlabelled_x(t, c.train[0].x, baseline, draws);
  t.backward(r.total);
  // Slot heads feed the loss only through the surrogate in the x-cascade.
  for (const auto& s : m.schema().slots) {
    EXPECT_EQ(grad_abs_sum(m.params(), "slot_head." + s.name + ".w"), 0.0);
    EXPECT_EQ(grad_abs_sum(m.params(), "slot_head." + s.name + ".b"), 0.0);
  }
  EXPECT_EQ(r.numbers.reinforce_surrogate, 0.0);
}

TEST(UnlabelledX, TreeModeRewardFloorClampsCoefficient) {
  Corpus c = jugtest::tiny_corpus(MrMode::tree, 10, 19);
  jug::JugConfig cfg = jugtest::tiny_config(MrMode::tree);
  cfg.decode_cap_y = 4;
  JugModel m = jug::make_model(cfg, c, 19);
  // Push EOS far down so sampling always hits the cap.
  m.params().at("dec_y.out.b").value[jug::Vocabulary::kEos] = -60.0;

  Objectives obj(m, {});
  Rng rng(20);
  DrawTrace trace;
  RecordingDraws draws(rng, trace);
  BaselineState baseline;
  baseline.value = 2.0;
  Tape t;
  LossResult r = obj.unlabelled_x(t, c.train[0].x, baseline, draws);
  double coeff = 1e9;
  for (const auto& e : trace)
    if (e.kind == jug::DrawEvent::Kind::coeff) coeff = e.value;
  // Floor reward = baseline - 1, so the frozen coefficient is exactly -1.
  EXPECT_DOUBLE_EQ(coeff, -1.0);
  EXPECT_NEAR(baseline.value, 0.95 * 2.0 + 0.05 * (2.0 - 1.0), 1e-12);
  EXPECT_GE(r.numbers.recon_x_cascade, 0.0);
}

TEST(Baseline, EmaClosedFormAfterIdenticalRewards) {
  BaselineState b;
  b.value = 0.7;
  b.decay = 0.95;
  const double r = -3.25;
  const int k = 17;
  for (int i = 0; i < k; ++i) b.update(r);
  const double expected = r * (1.0 - std::pow(0.95, k)) + 0.7 * std::pow(0.95, k);
  EXPECT_NEAR(b.value, expected, 1e-12);
}

// Score-function estimate vs exact enumerated gradient on a 3-outcome toy.
TEST(Reinforce, EstimatorTracksEnumeratedGradient) {
  Rng rng(21);
  ParameterStore store;
  jug::Tensor& theta = store.add("theta", jug::Shape{3}, rng);
  theta.value = {0.2, -0.4, 0.9};
  const std::vector<double> reward{1.0, 2.5, -0.5};

  // Exact: d/d theta of sum_k pi_k f_k = pi_k (f_k - sum_j pi_j f_j).
  const auto pi = jug::softmax_values(theta.value);
  double avg = 0.0;
  for (int k = 0; k < 3; ++k) avg += pi[k] * reward[k];
  std::vector<double> exact(3);
  for (int k = 0; k < 3; ++k) exact[k] = pi[k] * (reward[k] - avg);

  const int n = 30000;
  std::vector<double> acc(3, 0.0);
  BaselineState baseline;
  for (int i = 0; i < n; ++i) {
    const std::size_t k = rng.categorical(pi);
    store.zero_grads();
    Tape t;
    jug::Var logp = t.scale(t.cross_entropy(t.param(theta), k), -1.0);
    t.backward(logp);
    const double coeff = reward[k] - baseline.value;
    baseline.update(reward[k]);
    for (int j = 0; j < 3; ++j) acc[j] += coeff * theta.grad[j];
  }
  for (int j = 0; j < 3; ++j) {
    const double mc = acc[j] / n;
    EXPECT_LT(std::abs(mc - exact[j]) / std::max(0.05, std::abs(exact[j])), 0.10)
        << "component " << j << " mc=" << mc << " exact=" << exact[j];
  }
}

TEST(Composites, EmptyBatchIsZero) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 22);
  JugModel m = jugtest::tiny_model(c, 22);
  Objectives obj(m, {});
  Rng rng(23);
  LiveDraws draws(rng);
  Tape t;
  LossResult r = obj.basic(t, {}, draws);
  EXPECT_EQ(r.numbers.total, 0.0);
  EXPECT_EQ(t.scalar(r.total), 0.0);
}

TEST(Composites, SinglePairEqualsSumOfPathLossesAndBatchesAreAdditive) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 12, 24);
  JugModel m = jugtest::tiny_model(c, 24);
  Objectives obj(m, {});

  // Record per-example traces, then replay their concatenation on the batch.
  std::vector<jug::LabelledPair> batch(c.train.begin(), c.train.begin() + 4);
  DrawTrace full;
  double sum_parts = 0.0;
  for (const auto& p : batch) {
    Rng rng(jug::fnv1a(p.id));
    DrawTrace trace;
    RecordingDraws rec(rng, trace);
    Tape t;
    sum_parts += obj.basic(t, {p}, rec).numbers.total;
    full.insert(full.end(), trace.begin(), trace.end());
  }
  ReplayDraws replay(full);
  Tape t;
  LossResult whole = obj.basic(t, batch, replay);
  EXPECT_TRUE(replay.exhausted());
  EXPECT_NEAR(whole.numbers.total, sum_parts, 1e-12);

  // Single pair = x path + y path (replayed halves).
  {
    Rng rng(31);
    DrawTrace trace;
    RecordingDraws rec(rng, trace);
    Tape tb;
    const double total = obj.basic(tb, {batch[0]}, rec).numbers.total;
    ReplayDraws rep(trace);
    Tape tp;
    const double a = obj.pair_x_path(tp, batch[0], rep).numbers.total;
    const double b = obj.pair_y_path(tp, batch[0], rep).numbers.total;
    EXPECT_NEAR(total, a + b, 1e-12);
  }
}

TEST(Composites, MarginalEqualsBasicPlusCascades) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 10, 25);
  JugModel m = jugtest::tiny_model(c, 25);
  Objectives obj(m, {});
  std::vector<jug::LabelledPair> batch(c.train.begin(), c.train.begin() + 2);

  Rng rng(26);
  DrawTrace trace;
  RecordingDraws rec(rng, trace);
  BaselineState bx, by;
  Tape t;
  LossResult whole = obj.marginal(t, batch, bx, by, rec);

  ReplayDraws rep(trace);
  BaselineState bx2, by2;
  Tape t2;
  double parts = 0.0;
  for (const auto& p : batch) {
    parts += obj.pair_x_path(t2, p, rep).numbers.total;
    parts += obj.pair_y_path(t2, p, rep).numbers.total;
    parts += obj.unlabelled_x(t2, p.x, bx2, rep).numbers.total;
    parts += obj.unlabelled_y(t2, p.y, by2, rep).numbers.total;
  }
  EXPECT_TRUE(rep.exhausted());
  EXPECT_NEAR(whole.numbers.total, parts, 1e-12);
  EXPECT_NEAR(bx.value, bx2.value, 1e-12);
}

TEST(Composites, SemiReducesToBasicWithoutPoolsAndToPureAutoencodingWithoutLabels) {
  Corpus c = jugtest::tiny_corpus(MrMode::slot_value, 12, 27);
  JugModel m = jugtest::tiny_model(c, 27);
  Objectives obj(m, {});
  std::vector<jug::LabelledPair> batch(c.train.begin(), c.train.begin() + 3);

  {
    Rng rng(28);
    DrawTrace trace;
    RecordingDraws rec(rng, trace);
    BaselineState bx, by;
    Tape t;
    LossResult semi = obj.semi(t, batch, {}, {}, bx, by, rec);
    ReplayDraws rep(trace);
    BaselineState bx2, by2;
    Tape t2;
    LossResult basic = obj.basic(t2, batch, rep);
    EXPECT_NEAR(semi.numbers.total, basic.numbers.total, 1e-12);
  }
  {
    Rng rng(29);
    LiveDraws draws(rng);
    BaselineState bx, by;
    std::vector<jug::UnlabelledX> xs{{c.train[4].id, c.train[4].x}};
    std::vector<jug::UnlabelledY> ys{{c.train[5].id, c.train[5].y}};
    Tape t;
    LossResult semi = obj.semi(t, {}, xs, ys, bx, by, draws);
    EXPECT_EQ(semi.numbers.recon_y_given_zx, 0.0);
    EXPECT_EQ(semi.numbers.recon_x_given_zy, 0.0);
    EXPECT_GT(semi.numbers.recon_x_cascade, 0.0);
    EXPECT_GT(semi.numbers.recon_y_cascade, 0.0);
  }
}

TEST(Composites, TotalEqualsCompositeBookkeeping) {
  for (MrMode mode : {MrMode::slot_value, MrMode::tree}) {
    Corpus c = jugtest::tiny_corpus(mode, 10, 30);
    JugModel m = jugtest::tiny_model(c, 30);
    ObjectiveOptions opts;
    opts.kl_coef = 0.37;
    Objectives obj(m, opts);
    std::vector<jug::LabelledPair> batch(c.train.begin(), c.train.begin() + 2);
    Rng rng(31);
    LiveDraws draws(rng);
    BaselineState bx, by;
    Tape t;
    LossResult r = obj.marginal(t, batch, bx, by, draws);
    EXPECT_NEAR(r.numbers.total, r.numbers.composite(), 1e-12);
    EXPECT_NEAR(r.numbers.total, t.scalar(r.total), 1e-12);
  }
}

TEST(Decoupled, MatchesIndependentPlainSeq2seqLoss) {
  for (MrMode mode : {MrMode::slot_value, MrMode::tree}) {
    for (int trial = 0; trial < 5; ++trial) {
      Corpus c = jugtest::tiny_corpus(mode, 10, 40 + trial);
      JugModel m = jugtest::tiny_model(c, 50 + trial);
      Objectives obj(m, ObjectiveOptions::decoupled());
      Rng rng(60 + trial);
      LiveDraws draws(rng);
      std::vector<jug::LabelledPair> batch(c.train.begin(), c.train.begin() + 3);
      Tape t;
      LossResult r = obj.basic(t, batch, draws);
      double ref = 0.0;
      for (const auto& p : batch) ref += jugref::decoupled_pair_value(m, p);
      EXPECT_NEAR(r.numbers.total, ref, 1e-10) << jug::mr_mode_name(mode);
      EXPECT_EQ(r.numbers.kl_qzx_to_prior, 0.0);
      EXPECT_EQ(r.numbers.kl_qzy_to_prior, 0.0);
    }
  }
}

// Small-scale finite-difference smoke of the full losses (the acceptance
// suite runs the exhaustive sweep).
TEST(Gradients, PairAndCascadeLossesMatchFiniteDifferences) {
  for (MrMode mode : {MrMode::slot_value, MrMode::tree}) {
    Corpus c = jugtest::tiny_corpus(mode, 8, 70, 2, 2);
    JugModel m = jugtest::tiny_model(c, 71, 4, 3, 3);
    Objectives obj(m, {});
    const auto& pair = c.train[1];

    {
      Rng rng(72);
      DrawTrace trace;
      RecordingDraws rec(rng, trace);
      m.params().zero_grads();
      Tape t;
      LossResult r = obj.pair_x_path(t, pair, rec);
      t.backward(r.total);
      auto res = jugtest::check_gradients(m.params(), [&] {
        ReplayDraws rep(trace);
        Tape t2(false);
        return obj.pair_x_path(t2, pair, rep).numbers.total;
      });
      EXPECT_LT(res.max_rel_err, 1e-4)
          << jug::mr_mode_name(mode) << " pair_x worst " << res.worst_param << " ad="
          << res.analytic << " fd=" << res.numeric;
    }
    {
      Rng rng(73);
      DrawTrace trace;
      RecordingDraws rec(rng, trace);
      BaselineState baseline;
      m.params().zero_grads();
      Tape t;
      LossResult r = obj.unlabelled_x(t, pair.x, baseline, rec);
      t.backward(r.total);
      auto res = jugtest::check_gradients(m.params(), [&] {
        ReplayDraws rep(trace);
        BaselineState b2;
        Tape t2(false);
        return obj.unlabelled_x(t2, pair.x, b2, rep).numbers.total;
      });
      EXPECT_LT(res.max_rel_err, 1e-4)
          << jug::mr_mode_name(mode) << " unlabelled_x worst " << res.worst_param << " ad="
          << res.analytic << " fd=" << res.numeric;
    }
  }
}
