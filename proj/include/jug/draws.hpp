#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace jug {

/// One recorded stochastic or detached event inside a loss computation.
struct DrawEvent {
  enum class Kind { epsilon, categorical, detached, coeff } kind;
  std::vector<double> vec;
  std::size_t index = 0;
  double value = 0.0;
};

using DrawTrace = std::vector<DrawEvent>;

/// Source of every random draw and every detached numeric value inside a
/// loss. The live source samples an Rng and passes detached values through;
/// recording additionally logs each event; replay returns the logged events
/// in order. Replaying makes a loss a deterministic function of the
/// parameters with all sampling and all stop-gradient sites frozen, which is
/// exactly the function the tape differentiates.
class DrawSource {
 public:
  virtual ~DrawSource() = default;
  virtual std::vector<double> epsilon(std::size_t d) = 0;
  virtual std::size_t categorical(const std::vector<double>& probs) = 0;
  virtual std::vector<double> detached(const std::vector<double>& live) = 0;
  virtual double coeff(double live) = 0;
};

class LiveDraws : public DrawSource {
 public:
  explicit LiveDraws(Rng& rng) : rng_(rng) {}
  std::vector<double> epsilon(std::size_t d) override { return rng_.normal_vec(d); }
  std::size_t categorical(const std::vector<double>& probs) override {
    return rng_.categorical(probs);
  }
  std::vector<double> detached(const std::vector<double>& live) override { return live; }
  double coeff(double live) override { return live; }

 private:
  Rng& rng_;
};

class RecordingDraws : public DrawSource {
 public:
  RecordingDraws(Rng& rng, DrawTrace& trace) : rng_(rng), trace_(trace) {}
  std::vector<double> epsilon(std::size_t d) override {
    auto v = rng_.normal_vec(d);
    trace_.push_back({DrawEvent::Kind::epsilon, v, 0, 0.0});
    return v;
  }
  std::size_t categorical(const std::vector<double>& probs) override {
    const std::size_t k = rng_.categorical(probs);
    trace_.push_back({DrawEvent::Kind::categorical, {}, k, 0.0});
    return k;
  }
  std::vector<double> detached(const std::vector<double>& live) override {
    trace_.push_back({DrawEvent::Kind::detached, live, 0, 0.0});
    return live;
  }
  double coeff(double live) override {
    trace_.push_back({DrawEvent::Kind::coeff, {}, 0, live});
    return live;
  }

 private:
  Rng& rng_;
  DrawTrace& trace_;
};

class ReplayDraws : public DrawSource {
 public:
  explicit ReplayDraws(const DrawTrace& trace) : trace_(trace) {}

  std::vector<double> epsilon(std::size_t d) override {
    const DrawEvent& e = next(DrawEvent::Kind::epsilon);
    if (e.vec.size() != d) throw std::runtime_error("replay: epsilon dimension drifted");
    return e.vec;
  }
  std::size_t categorical(const std::vector<double>&) override {
    return next(DrawEvent::Kind::categorical).index;
  }
  std::vector<double> detached(const std::vector<double>&) override {
    return next(DrawEvent::Kind::detached).vec;
  }
  double coeff(double) override { return next(DrawEvent::Kind::coeff).value; }

  bool exhausted() const { return pos_ == trace_.size(); }

 private:
  const DrawEvent& next(DrawEvent::Kind kind) {
    if (pos_ >= trace_.size()) throw std::runtime_error("replay: trace exhausted");
    const DrawEvent& e = trace_[pos_++];
    if (e.kind != kind) throw std::runtime_error("replay: event kind drifted");
    return e;
  }

  const DrawTrace& trace_;
  std::size_t pos_ = 0;
};

}  // namespace jug
