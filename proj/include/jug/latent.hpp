#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "param_store.hpp"
#include "seq.hpp"
#include "tape.hpp"

namespace jug {

enum class LatentSource { from_x, from_y, mean_only };

inline const char* latent_source_name(LatentSource s) {
  switch (s) {
    case LatentSource::from_x: return "from-x";
    case LatentSource::from_y: return "from-y";
    case LatentSource::mean_only: return "mean-only";
  }
  return "?";
}

/// Diagonal Gaussian over the latent space; sigma strictly positive.
struct LatentGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t dim() const { return mu.size(); }

  void validate() const {
    if (mu.size() != sigma.size())
      throw ShapeError("LatentGaussian: mu dim " + std::to_string(mu.size()) + " vs sigma dim " +
                       std::to_string(sigma.size()));
    for (double s : sigma)
      if (!(s > 0.0)) throw ShapeError("LatentGaussian: sigma must be strictly positive");
  }
};

struct LatentSample {
  std::vector<double> z;
  LatentSource source = LatentSource::mean_only;
};

/// Tape-level posterior parameterisation. sigma is represented as log sigma,
/// which the affine head produces directly; exponentiation keeps it positive.
struct GaussianVars {
  Var mu;
  Var log_sigma;
};

inline void register_gaussian_head(ParameterStore& store, const std::string& prefix,
                                   std::size_t d_in, std::size_t d_z, Rng& rng) {
  store.add(prefix + ".mu.w", Shape{d_z, d_in}, rng);
  store.add(prefix + ".mu.b", Shape{d_z}, rng);
  store.add(prefix + ".logsig.w", Shape{d_z, d_in}, rng);
  store.add(prefix + ".logsig.b", Shape{d_z}, rng);
}

/// Two feed-forward maps from a pooled encoder vector to (mu, log sigma).
inline GaussianVars infer_gaussian(Tape& t, ParameterStore& store, const std::string& prefix,
                                   Var pooled) {
  Var wm = t.param(store.at(prefix + ".mu.w"));
  if (t.shape(wm)[1] != t.shape(pooled)[0])
    throw ShapeError("infer_gaussian: pooled " + shape_str(t.shape(pooled)) + " vs head " +
                     shape_str(t.shape(wm)));
  Var mu = t.add(t.matvec(wm, pooled), t.param(store.at(prefix + ".mu.b")));
  Var ls = t.add(t.matvec(t.param(store.at(prefix + ".logsig.w")), pooled),
                 t.param(store.at(prefix + ".logsig.b")));
  return {mu, ls};
}

/// Numeric snapshot of a tape posterior (detaches from the tape).
inline LatentGaussian gaussian_value(const Tape& t, const GaussianVars& q) {
  LatentGaussian g;
  g.mu = t.val(q.mu);
  g.sigma = t.val(q.log_sigma);
  for (auto& s : g.sigma) s = std::exp(s);
  return g;
}

/// z = mu + sigma (.) epsilon on the tape; gradient flows to mu and sigma only.
inline Var reparameterize(Tape& t, const GaussianVars& q, const std::vector<double>& epsilon) {
  if (epsilon.size() != t.shape(q.mu)[0])
    throw ShapeError("reparameterize: epsilon dim " + std::to_string(epsilon.size()) + " vs d_z " +
                     std::to_string(t.shape(q.mu)[0]));
  return t.add(q.mu, t.mul(t.exp_(q.log_sigma), t.constant_vec(epsilon)));
}

/// Numeric reparameterisation for inference paths.
inline LatentSample reparameterize(const LatentGaussian& q, const std::vector<double>& epsilon,
                                   LatentSource source) {
  q.validate();
  if (epsilon.size() != q.dim())
    throw ShapeError("reparameterize: epsilon dim " + std::to_string(epsilon.size()) + " vs d_z " +
                     std::to_string(q.dim()));
  LatentSample s;
  s.source = source;
  s.z.resize(q.dim());
  for (std::size_t i = 0; i < q.dim(); ++i) s.z[i] = q.mu[i] + q.sigma[i] * epsilon[i];
  return s;
}

/// Deterministic mean-vector decoding choice; consumes no randomness.
inline LatentSample mean_vector(const LatentGaussian& q) {
  q.validate();
  return LatentSample{q.mu, LatentSource::mean_only};
}

/// Closed-form KL between diagonal Gaussians:
/// sum_i log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2.
inline double kl_divergence(const LatentGaussian& q, const LatentGaussian& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim())
    throw ShapeError("kl_divergence: dim " + std::to_string(q.dim()) + " vs " +
                     std::to_string(p.dim()));
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double vq = q.sigma[i] * q.sigma[i];
    const double vp = p.sigma[i] * p.sigma[i];
    const double dm = q.mu[i] - p.mu[i];
    kl += std::log(p.sigma[i] / q.sigma[i]) + (vq + dm * dm) / (2.0 * vp) - 0.5;
  }
  return kl;
}

/// Tape KL of a live posterior against a fixed (gradient-detached) prior.
inline Var kl_divergence(Tape& t, const GaussianVars& q, const LatentGaussian& p) {
  p.validate();
  const std::size_t d = t.shape(q.mu)[0];
  if (p.dim() != d)
    throw ShapeError("kl_divergence: prior dim " + std::to_string(p.dim()) + " vs d_z " +
                     std::to_string(d));
  std::vector<double> inv2vp(d), log_sp(d);
  double const_part = -0.5 * static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) {
    inv2vp[i] = 1.0 / (2.0 * p.sigma[i] * p.sigma[i]);
    const_part += std::log(p.sigma[i]);
  }
  Var diff = t.sub(q.mu, t.constant_vec(p.mu));
  Var quad = t.mul(t.add(t.exp_(t.scale(q.log_sigma, 2.0)), t.mul(diff, diff)),
                   t.constant_vec(inv2vp));
  Var kl = t.add(t.sum(quad), t.scale(t.sum(q.log_sigma), -1.0));
  return t.shift(kl, const_part);
}

/// Tape KL with gradients flowing into both sides (the non-detached ablation).
inline Var kl_divergence(Tape& t, const GaussianVars& q, const GaussianVars& p) {
  const std::size_t d = t.shape(q.mu)[0];
  if (t.shape(p.mu)[0] != d) throw ShapeError("kl_divergence: posterior dims differ");
  Var diff = t.sub(q.mu, p.mu);
  Var quad = t.mul(t.add(t.exp_(t.scale(q.log_sigma, 2.0)), t.mul(diff, diff)),
                   t.exp_(t.scale(p.log_sigma, -2.0)));
  Var kl = t.add(t.scale(t.sum(quad), 0.5),
                 t.sub(t.sum(p.log_sigma), t.sum(q.log_sigma)));
  return t.shift(kl, -0.5 * static_cast<double>(d));
}

/// The cross-posterior prior policy: the opposite side's posterior, detached,
/// serves as p(z). For unlabelled data the opposite posterior comes from the
/// model-generated pseudo partner.
inline LatentGaussian prior_for(const Tape& t, const GaussianVars& opposite) {
  return gaussian_value(t, opposite);
}

}  // namespace jug
