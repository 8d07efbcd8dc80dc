#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "model.hpp"

namespace jug {

/// Per-term loss values in nats. Reconstruction fields hold negative
/// log-likelihoods (>= 0); the surrogate may take either sign. `total` is the
/// minimised composite: recon terms + kl_coef * KL terms + surrogate.
struct LossBreakdown {
  double recon_y_given_zx = 0.0;
  double recon_x_given_zy = 0.0;
  double kl_qzx_to_prior = 0.0;
  double kl_qzy_to_prior = 0.0;
  double recon_x_cascade = 0.0;
  double recon_y_cascade = 0.0;
  double reinforce_surrogate = 0.0;
  double kl_coef = 1.0;
  double total = 0.0;

  double composite() const {
    return recon_y_given_zx + recon_x_given_zy +
           kl_coef * (kl_qzx_to_prior + kl_qzy_to_prior) + recon_x_cascade + recon_y_cascade +
           reinforce_surrogate;
  }

  LossBreakdown& operator+=(const LossBreakdown& o) {
    recon_y_given_zx += o.recon_y_given_zx;
    recon_x_given_zy += o.recon_x_given_zy;
    kl_qzx_to_prior += o.kl_qzx_to_prior;
    kl_qzy_to_prior += o.kl_qzy_to_prior;
    recon_x_cascade += o.recon_x_cascade;
    recon_y_cascade += o.recon_y_cascade;
    reinforce_surrogate += o.reinforce_surrogate;
    total += o.total;
    return *this;
  }
};

/// Exponential moving average of the cascade reconstruction reward,
/// b_k = decay * b_{k-1} + (1 - decay) * r; starts at zero.
struct BaselineState {
  double value = 0.0;
  double decay = 0.95;

  void update(double reward) { value = decay * value + (1.0 - decay) * reward; }
};

struct ObjectiveOptions {
  double kl_coef = 1.0;
  // Cross-posterior prior (and the pseudo-posterior z in cascades) is
  // gradient-detached; flip for the non-detached ablation.
  bool detach_prior = true;
  // Eq-9-style cascade KL prior: the pseudo-pair posterior, or N(0, I).
  bool cascade_cross_prior = true;
  // Decoupled baseline: z is the deterministic posterior mean, no KL, and no
  // cross-path reconstruction terms.
  bool latent_injection = true;
  bool cross_reconstruction = true;
  double reward_floor_offset = 1.0;

  static ObjectiveOptions decoupled() {
    ObjectiveOptions o;
    o.kl_coef = 0.0;
    o.latent_injection = false;
    o.cross_reconstruction = false;
    return o;
  }
};

struct LossResult {
  Var total;
  LossBreakdown numbers;
};

/// Training objectives over a JugModel. Every stochastic event and every
/// stop-gradient value flows through the supplied DrawSource, so a recorded
/// loss can be replayed as a pure function of the parameters.
class Objectives {
 public:
  Objectives(JugModel& model, ObjectiveOptions opts) : m_(model), opts_(opts) {}

  const ObjectiveOptions& options() const { return opts_; }
  ObjectiveOptions& options() { return opts_; }

  /// Eq-6 path: z ~ q(z|x); -log p(y|z,x) - log p(x|z,y) + KL[q(z|x) || q(z|y)].
  LossResult pair_x_path(Tape& t, const LabelledPair& pair, DrawSource& draws) {
    return pair_path(t, pair, draws, /*from_x=*/true);
  }

  /// Eq-7 mirror: z ~ q(z|y), prior q(z|x).
  LossResult pair_y_path(Tape& t, const LabelledPair& pair, DrawSource& draws) {
    return pair_path(t, pair, draws, /*from_x=*/false);
  }

  /// Eq-9 cascade x -> z -> y^ -> z -> x with a REINFORCE surrogate for the
  /// discrete y^ draw.
  LossResult unlabelled_x(Tape& t, const std::vector<std::string>& x, BaselineState& baseline,
                          DrawSource& draws) {
    const auto ids_x = m_.encode_x(x);
    auto Px = m_.posterior_x(t, ids_x);
    Var z1 = sample_z(t, Px.q, draws);

    // Pseudo formal representation from the NLU decoder.
    Var logq{};
    std::vector<std::size_t> pseudo_ids;
    bool undecodable = false;
    if (m_.config().mr_mode == MrMode::slot_value) {
      auto d = m_.decode_slots(t, z1, DecodeMode::sample, &draws);
      logq = d.log_prob;
      pseudo_ids = m_.formal_vocab().encode(d.slots.linearise(m_.schema()));
    } else {
      auto d = m_.decode_y_tree(t, z1, Px.H, DecodeMode::sample, &draws);
      logq = d.log_prob;
      pseudo_ids = d.ids;
      undecodable = d.hit_cap || d.ids.empty();
      if (pseudo_ids.empty()) pseudo_ids.push_back(Vocabulary::kUnk);
    }

    auto Py_hat = m_.posterior_y(t, pseudo_ids);
    Var z2 = pseudo_z(t, Py_hat.q, draws);
    Var recon = m_.nll_sequence_x(t, z2, Py_hat.H, ids_x);
    Var kl = cascade_kl(t, Px.q, Py_hat.q, draws);
    return finish_cascade(t, recon, kl, logq, undecodable, baseline, draws,
                          /*x_side=*/true);
  }

  /// Eq-10 cascade y -> z -> x^ -> z -> y.
  LossResult unlabelled_y(Tape& t, const MeaningRepresentation& y, BaselineState& baseline,
                          DrawSource& draws) {
    const auto ids_y = m_.encode_y(y);
    auto Py = m_.posterior_y(t, ids_y);
    Var z1 = sample_z(t, Py.q, draws);

    auto d = m_.decode_x(t, z1, Py.H, DecodeMode::sample, &draws);
    Var logq = d.log_prob;
    bool undecodable = d.hit_cap || d.ids.empty();
    std::vector<std::size_t> pseudo_ids = d.ids;
    if (pseudo_ids.empty()) pseudo_ids.push_back(Vocabulary::kUnk);

    auto Px_hat = m_.posterior_x(t, pseudo_ids);
    Var z2 = pseudo_z(t, Px_hat.q, draws);
    Var recon = m_.config().mr_mode == MrMode::slot_value
                    ? m_.nll_slots(t, z2, y.slots)
                    : m_.nll_sequence_y(t, z2, Px_hat.H, ids_y);
    Var kl = cascade_kl(t, Py.q, Px_hat.q, draws);
    return finish_cascade(t, recon, kl, logq, undecodable, baseline, draws,
                          /*x_side=*/false);
  }

  /// Eq-11: sum of both supervised paths over a batch.
  LossResult basic(Tape& t, const std::vector<LabelledPair>& batch, DrawSource& draws) {
    LossResult out = zero(t);
    for (const auto& p : batch) {
      accumulate(t, out, pair_x_path(t, p, draws));
      accumulate(t, out, pair_y_path(t, p, draws));
    }
    return out;
  }

  /// Eq-12: basic plus both auto-encoding cascades on the labelled examples.
  LossResult marginal(Tape& t, const std::vector<LabelledPair>& batch, BaselineState& baseline_x,
                      BaselineState& baseline_y, DrawSource& draws) {
    LossResult out = zero(t);
    for (const auto& p : batch) {
      accumulate(t, out, pair_x_path(t, p, draws));
      accumulate(t, out, pair_y_path(t, p, draws));
      accumulate(t, out, unlabelled_x(t, p.x, baseline_x, draws));
      accumulate(t, out, unlabelled_y(t, p.y, baseline_y, draws));
    }
    return out;
  }

  /// Eq-13: basic over the labelled batch plus cascades over the unlabelled
  /// pools.
  LossResult semi(Tape& t, const std::vector<LabelledPair>& labelled,
                  const std::vector<UnlabelledX>& xs, const std::vector<UnlabelledY>& ys,
                  BaselineState& baseline_x, BaselineState& baseline_y, DrawSource& draws) {
    LossResult out = basic(t, labelled, draws);
    for (const auto& u : xs) accumulate(t, out, unlabelled_x(t, u.x, baseline_x, draws));
    for (const auto& u : ys) accumulate(t, out, unlabelled_y(t, u.y, baseline_y, draws));
    return out;
  }

 private:
  LossResult zero(Tape& t) {
    LossResult r;
    r.total = t.constant_scalar(0.0);
    r.numbers.kl_coef = opts_.kl_coef;
    return r;
  }

  void accumulate(Tape& t, LossResult& into, const LossResult& piece) {
    into.total = t.add(into.total, piece.total);
    into.numbers += piece.numbers;
  }

  Var sample_z(Tape& t, const GaussianVars& q, DrawSource& draws) {
    if (!opts_.latent_injection) return q.mu;
    return reparameterize(t, q, draws.epsilon(t.shape(q.mu)[0]));
  }

  /// z drawn from a pseudo-pair posterior. Detached by default: the pseudo
  /// posterior acts purely as prior belief, so no gradient flows into it.
  Var pseudo_z(Tape& t, const GaussianVars& q, DrawSource& draws) {
    const auto eps = draws.epsilon(t.shape(q.mu)[0]);
    if (!opts_.detach_prior) return reparameterize(t, q, eps);
    const auto mu = draws.detached(t.val(q.mu));
    auto sig = draws.detached(t.val(q.log_sigma));
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(sig[i]) * eps[i];
    return t.constant_vec(z);
  }

  Var kl_to(Tape& t, const GaussianVars& q, const GaussianVars& prior, DrawSource& draws) {
    if (!opts_.detach_prior) return kl_divergence(t, q, prior);
    LatentGaussian p;
    p.mu = draws.detached(t.val(prior.mu));
    p.sigma = draws.detached(t.val(prior.log_sigma));
    for (auto& s : p.sigma) s = std::exp(s);
    return kl_divergence(t, q, p);
  }

  Var cascade_kl(Tape& t, const GaussianVars& q, const GaussianVars& pseudo, DrawSource& draws) {
    if (opts_.cascade_cross_prior) return kl_to(t, q, pseudo, draws);
    LatentGaussian std_normal;
    std_normal.mu.assign(t.shape(q.mu)[0], 0.0);
    std_normal.sigma.assign(t.shape(q.mu)[0], 1.0);
    return kl_divergence(t, q, std_normal);
  }

  LossResult pair_path(Tape& t, const LabelledPair& pair, DrawSource& draws, bool from_x) {
    const auto ids_x = m_.encode_x(pair.x);
    const auto ids_y = m_.encode_y(pair.y);
    auto Px = m_.posterior_x(t, ids_x);
    auto Py = m_.posterior_y(t, ids_y);
    Var z = sample_z(t, from_x ? Px.q : Py.q, draws);

    Var recon_y{}, recon_x{};
    const bool slot_mode = m_.config().mr_mode == MrMode::slot_value;
    const bool want_y = from_x || opts_.cross_reconstruction;
    const bool want_x = !from_x || opts_.cross_reconstruction;
    if (want_y)
      recon_y = slot_mode ? m_.nll_slots(t, z, pair.y.slots) : m_.nll_sequence_y(t, z, Px.H, ids_y);
    if (want_x) recon_x = m_.nll_sequence_x(t, z, Py.H, ids_x);

    LossResult r = zero(t);
    if (want_y) {
      r.total = t.add(r.total, recon_y);
      r.numbers.recon_y_given_zx = t.scalar(recon_y);
    }
    if (want_x) {
      r.total = t.add(r.total, recon_x);
      r.numbers.recon_x_given_zy = t.scalar(recon_x);
    }
    if (opts_.latent_injection) {
      Var kl = kl_to(t, from_x ? Px.q : Py.q, from_x ? Py.q : Px.q, draws);
      if (opts_.kl_coef != 0.0) r.total = t.add(r.total, t.scale(kl, opts_.kl_coef));
      (from_x ? r.numbers.kl_qzx_to_prior : r.numbers.kl_qzy_to_prior) = t.scalar(kl);
    }
    r.numbers.total = t.scalar(r.total);
    return r;
  }

  LossResult finish_cascade(Tape& t, Var recon, Var kl, Var logq, bool undecodable,
                            BaselineState& baseline, DrawSource& draws, bool x_side) {
    LossResult r = zero(t);
    r.total = recon;
    double reward = -t.scalar(recon);
    if (undecodable) reward = baseline.value - opts_.reward_floor_offset;
    const double coeff = draws.coeff(reward - baseline.value);
    Var surrogate = t.scale(logq, -coeff);
    r.total = t.add(r.total, surrogate);
    if (opts_.latent_injection && opts_.kl_coef != 0.0)
      r.total = t.add(r.total, t.scale(kl, opts_.kl_coef));
    baseline.update(reward);

    (x_side ? r.numbers.recon_x_cascade : r.numbers.recon_y_cascade) = t.scalar(recon);
    if (opts_.latent_injection)
      (x_side ? r.numbers.kl_qzx_to_prior : r.numbers.kl_qzy_to_prior) = t.scalar(kl);
    r.numbers.reinforce_surrogate = t.scalar(surrogate);
    r.numbers.total = t.scalar(r.total);
    return r;
  }

  JugModel& m_;
  ObjectiveOptions opts_;
};

}  // namespace jug
