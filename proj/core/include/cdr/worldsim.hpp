#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cdr/geom.hpp"
#include "cdr/rng.hpp"

namespace cdr {

inline constexpr double kSqrt2 = 1.4142135623730951;

// One simulated frame and the fixed internal subdivision.
inline constexpr double kFrameDt = 1.0 / 30.0;
inline constexpr int kSubsteps = 4;

enum class Shape : uint8_t { Disc = 0, Square = 1 };

struct Body {
  Shape shape = Shape::Disc;
  double size = 0.1;  // disc radius or square half-extent, meters
  Vec2 position;
  Vec2 velocity;  // m/s
  double mass = 1.0;

  // Collision and containment use bounding circles; squares get r*sqrt(2).
  double bounding_radius() const { return shape == Shape::Disc ? size : size * kSqrt2; }
  // Exact shape membership (axis-aligned square), used by the rasterizer.
  bool contains(Vec2 p) const;
};

struct WorldState {
  std::vector<Body> bodies;  // index 0 is the agent in controlled scenes
  double frame_half_extent = 1.0;
  double drag_coeff = 0.0;  // 1/s, linear
  double restitution = 1.0; // [0,1]
};

// Force in Newtons applied to body 0 for the duration of one step.
struct ActionPush {
  Vec2 force;
};

struct SceneConfig {
  int body_count = 2;
  double frame_half_extent = 1.0;
  double drag_coeff = 2.0;
  double restitution = 0.9;
  double size_min = 0.10, size_max = 0.22;
  double mass_min = 0.5, mass_max = 2.0;
  // Body 0 uses these when distinct_agent is set (controlled scenes).
  bool distinct_agent = true;
  double agent_size_min = 0.07, agent_size_max = 0.11;
  double agent_mass_min = 0.6, agent_mass_max = 1.2;
  // Initial impulse magnitude range, uncontrolled episodes (N).
  double impulse_min = 60.0, impulse_max = 180.0;
  // Per-step push magnitude range, controlled episodes (N).
  double action_min = 10.0, action_max = 40.0;

  double max_force() const { return impulse_max > action_max ? impulse_max : action_max; }
  void validate() const;
};

// Set when the corresponding resolver changed anything during a step;
// lets invariant checks identify contact-free steps.
struct StepProbe {
  bool wall_contact = false;
  bool pair_contact = false;
};

// Advance one step of length dt (subdivided internally). Pure; rejects
// non-finite inputs. Walls are resolved before body pairs, pairs in
// ascending index order, so the result does not depend on iteration order.
WorldState step(const WorldState& state, const std::optional<ActionPush>& action, double dt,
                StepProbe* probe = nullptr);

// Rejection-samples non-overlapping bodies; throws after 1000 attempts per body.
WorldState sample_initial_state(Rng& rng, const SceneConfig& config);

// Direction uniform on the circle, magnitude uniform in the configured range.
ActionPush sample_initial_impulse(Rng& rng, const SceneConfig& config);
ActionPush sample_action(Rng& rng, const SceneConfig& config);

double kinetic_energy(const WorldState& state);
Vec2 total_momentum(const WorldState& state);

// Invariant probes used by tests and dataset validation.
bool contained_in_frame(const WorldState& state, double tol = 1e-9);
bool no_pair_overlap(const WorldState& state, double tol = 1e-6);

}  // namespace cdr
