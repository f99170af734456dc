#include "cdr/worldsim.hpp"

#include <cmath>
#include <numbers>

#include "cdr/util.hpp"

namespace cdr {

bool Body::contains(Vec2 p) const {
  Vec2 d = p - position;
  if (shape == Shape::Disc) return d.norm_sq() <= size * size;
  return std::abs(d.x) <= size && std::abs(d.y) <= size;
}

void SceneConfig::validate() const {
  CDR_REQUIRE(body_count >= 2 && body_count <= 4, "scene body_count must be in [2,4], got ", body_count);
  CDR_REQUIRE(frame_half_extent > 0, "scene frame_half_extent must be positive");
  CDR_REQUIRE(drag_coeff >= 0, "scene drag_coeff must be non-negative");
  CDR_REQUIRE(restitution >= 0 && restitution <= 1, "scene restitution must be in [0,1]");
  CDR_REQUIRE(size_min > 0 && size_min <= size_max, "scene size range invalid: [", size_min, ",", size_max, "]");
  CDR_REQUIRE(mass_min > 0 && mass_min <= mass_max, "scene mass range invalid: [", mass_min, ",", mass_max, "]");
  if (distinct_agent) {
    CDR_REQUIRE(agent_size_min > 0 && agent_size_min <= agent_size_max, "scene agent size range invalid");
    CDR_REQUIRE(agent_mass_min > 0 && agent_mass_min <= agent_mass_max, "scene agent mass range invalid");
  }
  CDR_REQUIRE(impulse_min >= 0 && impulse_min <= impulse_max, "scene impulse range invalid");
  CDR_REQUIRE(action_min >= 0 && action_min <= action_max, "scene action range invalid");
  CDR_REQUIRE(size_max * kSqrt2 < frame_half_extent, "scene bodies too large for the frame");
}

namespace {

bool finite(const Vec2& v) { return std::isfinite(v.x) && std::isfinite(v.y); }

void check_finite(const WorldState& s, const std::optional<ActionPush>& action) {
  CDR_REQUIRE(std::isfinite(s.frame_half_extent) && std::isfinite(s.drag_coeff) &&
                  std::isfinite(s.restitution),
              "step: non-finite world parameters");
  for (const Body& b : s.bodies) {
    CDR_REQUIRE(finite(b.position) && finite(b.velocity) && std::isfinite(b.size) &&
                    std::isfinite(b.mass),
                "step: non-finite body state");
  }
  if (action) CDR_REQUIRE(finite(action->force), "step: non-finite action force");
}

void resolve_walls(WorldState& s, StepProbe* probe) {
  const double half = s.frame_half_extent;
  for (Body& b : s.bodies) {
    const double r = b.bounding_radius();
    if (b.position.x - r < -half || b.position.x + r > half || b.position.y - r < -half ||
        b.position.y + r > half) {
      if (probe) probe->wall_contact = true;
    }
    if (b.position.x - r < -half) {
      b.position.x = -half + r;
      if (b.velocity.x < 0) b.velocity.x = -s.restitution * b.velocity.x;
    }
    if (b.position.x + r > half) {
      b.position.x = half - r;
      if (b.velocity.x > 0) b.velocity.x = -s.restitution * b.velocity.x;
    }
    if (b.position.y - r < -half) {
      b.position.y = -half + r;
      if (b.velocity.y < 0) b.velocity.y = -s.restitution * b.velocity.y;
    }
    if (b.position.y + r > half) {
      b.position.y = half - r;
      if (b.velocity.y > 0) b.velocity.y = -s.restitution * b.velocity.y;
    }
  }
}

void resolve_pairs(WorldState& s, StepProbe* probe) {
  const size_t n = s.bodies.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      Body& a = s.bodies[i];
      Body& b = s.bodies[j];
      const double rsum = a.bounding_radius() + b.bounding_radius();
      Vec2 d = b.position - a.position;
      double dist = d.norm();
      if (dist >= rsum) continue;
      if (probe) probe->pair_contact = true;
      // Coincident centers: pick a fixed separation axis.
      Vec2 normal = dist > 1e-12 ? d / dist : Vec2{1.0, 0.0};
      const double inv_ma = 1.0 / a.mass;
      const double inv_mb = 1.0 / b.mass;
      const double inv_sum = inv_ma + inv_mb;
      // Positional de-penetration, split by inverse mass.
      const double overlap = rsum - dist;
      a.position -= normal * (overlap * inv_ma / inv_sum);
      b.position += normal * (overlap * inv_mb / inv_sum);
      // Impulse along the normal if approaching.
      const double rel = (b.velocity - a.velocity).dot(normal);
      if (rel < 0) {
        const double impulse = -(1.0 + s.restitution) * rel / inv_sum;
        a.velocity -= normal * (impulse * inv_ma);
        b.velocity += normal * (impulse * inv_mb);
      }
    }
  }
}

void substep(WorldState& s, const std::optional<ActionPush>& action, double h,
             StepProbe* probe) {
  if (action && !s.bodies.empty()) {
    Body& agent = s.bodies[0];
    agent.velocity += action->force * (h / agent.mass);
  }
  for (Body& b : s.bodies) {
    b.velocity *= 1.0 - s.drag_coeff * h;
    b.position += b.velocity * h;
  }
  // A fixed number of passes; pair separation can undo a wall projection,
  // so walls get the last word.
  for (int pass = 0; pass < 3; ++pass) {
    resolve_walls(s, probe);
    resolve_pairs(s, probe);
  }
  resolve_walls(s, probe);
}

}  // namespace

WorldState step(const WorldState& state, const std::optional<ActionPush>& action, double dt,
                StepProbe* probe) {
  CDR_REQUIRE(dt > 0 && std::isfinite(dt), "step: dt must be positive, got ", dt);
  check_finite(state, action);
  WorldState s = state;
  const double h = dt / kSubsteps;
  for (int i = 0; i < kSubsteps; ++i) substep(s, action, h, probe);
  return s;
}

WorldState sample_initial_state(Rng& rng, const SceneConfig& config) {
  config.validate();
  WorldState s;
  s.frame_half_extent = config.frame_half_extent;
  s.drag_coeff = config.drag_coeff;
  s.restitution = config.restitution;
  s.bodies.reserve(static_cast<size_t>(config.body_count));
  for (int i = 0; i < config.body_count; ++i) {
    const bool agent = config.distinct_agent && i == 0;
    Body b;
    b.shape = rng.uniform_int(2) == 0 ? Shape::Disc : Shape::Square;
    b.size = agent ? rng.uniform(config.agent_size_min, config.agent_size_max)
                   : rng.uniform(config.size_min, config.size_max);
    b.mass = agent ? rng.uniform(config.agent_mass_min, config.agent_mass_max)
                   : rng.uniform(config.mass_min, config.mass_max);
    const double r = b.bounding_radius();
    const double lo = -config.frame_half_extent + r;
    const double hi = config.frame_half_extent - r;
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      b.position = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
      placed = true;
      for (const Body& other : s.bodies) {
        if ((b.position - other.position).norm() < r + other.bounding_radius()) {
          placed = false;
          break;
        }
      }
      if (placed) break;
    }
    CDR_REQUIRE(placed, "sample_initial_state: no non-overlapping placement for body ", i,
                " after 1000 attempts (body_count=", config.body_count,
                ", frame_half_extent=", config.frame_half_extent,
                ", size range [", config.size_min, ",", config.size_max, "])");
    s.bodies.push_back(b);
  }
  return s;
}

namespace {
ActionPush sample_push(Rng& rng, double mag_lo, double mag_hi) {
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double mag = rng.uniform(mag_lo, mag_hi);
  return ActionPush{{mag * std::cos(angle), mag * std::sin(angle)}};
}
}  // namespace

ActionPush sample_initial_impulse(Rng& rng, const SceneConfig& config) {
  config.validate();
  return sample_push(rng, config.impulse_min, config.impulse_max);
}

ActionPush sample_action(Rng& rng, const SceneConfig& config) {
  config.validate();
  return sample_push(rng, config.action_min, config.action_max);
}

double kinetic_energy(const WorldState& state) {
  double e = 0.0;
  for (const Body& b : state.bodies) e += 0.5 * b.mass * b.velocity.norm_sq();
  return e;
}

Vec2 total_momentum(const WorldState& state) {
  Vec2 p;
  for (const Body& b : state.bodies) p += b.velocity * b.mass;
  return p;
}

bool contained_in_frame(const WorldState& state, double tol) {
  const double half = state.frame_half_extent;
  for (const Body& b : state.bodies) {
    const double r = b.bounding_radius();
    if (std::abs(b.position.x) > half - r + tol) return false;
    if (std::abs(b.position.y) > half - r + tol) return false;
  }
  return true;
}

bool no_pair_overlap(const WorldState& state, double tol) {
  for (size_t i = 0; i < state.bodies.size(); ++i) {
    for (size_t j = i + 1; j < state.bodies.size(); ++j) {
      const Body& a = state.bodies[i];
      const Body& b = state.bodies[j];
      const double rsum = a.bounding_radius() + b.bounding_radius();
      if ((b.position - a.position).norm() < rsum - tol) return false;
    }
  }
  return true;
}

}  // namespace cdr
