#pragma once

#include <string>
#include <vector>

#include "cdr/config.hpp"

namespace cdr {

enum class Prop1Regime : uint8_t { Independent = 0, Dependent = 1 };

Prop1Regime prop1_regime_from_string(const std::string& name);  // indep | dep
const char* to_string(Prop1Regime regime);

struct Prop1Trial {
  uint64_t seed = 0;
  double ratio = 0.0;  // ||W_e||_F / ||W_x||_F after training
  double loss_unrestricted = 0.0;
  double loss_clamped = 0.0;  // W_e forced to zero, bias free
  bool converged = false;
};

struct Prop1Report {
  Prop1Regime regime = Prop1Regime::Independent;
  std::vector<Prop1Trial> trials;
  double median_ratio = 0.0;
  int converged_count = 0;
};

// Synthetic separable-encoder experiment: x and e are independent uniforms,
// the targets are linear in fixed random tanh features of x (and of e in the
// dependent regime). Each trial trains an unrestricted model and a clamped
// one on fresh batches, then scores both on one shared evaluation sample.
Prop1Report prop1_experiment(Prop1Regime regime, const Prop1Config& config, uint64_t seed);

std::string to_line(const Prop1Trial& trial, Prop1Regime regime);
std::string to_text(const Prop1Report& report);

}  // namespace cdr
