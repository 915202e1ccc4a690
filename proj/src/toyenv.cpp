#include "hypergoal/toyenv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hypergoal/errors.hpp"

namespace hypergoal {
namespace {

constexpr Vec2 kCenter{0.5, 0.5};
constexpr double kExpertKp = 2.0;
constexpr double kExpertKd = 1.0;
constexpr int kSubsamples = 4;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
Vec2 clamp01(Vec2 v) { return {clamp01(v.x), clamp01(v.y)}; }

Vec2 polar(double angle, double radius) { return {radius * std::cos(angle), radius * std::sin(angle)}; }

Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 unit_or(Vec2 v, Vec2 fallback) {
  const double n = v.norm();
  return n > 1e-12 ? (1.0 / n) * v : fallback;
}

Vec2 pd_toward(Vec2 target, const EnvState& s) {
  return clip_action(kExpertKp * (target - s.agent_pos) - kExpertKd * s.agent_vel);
}

void paint_disc(Tensor& image, std::size_t size, Vec2 center, double radius, double intensity) {
  const double pixel = 1.0 / static_cast<double>(size);
  const auto lo = [&](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor((v - radius) / pixel), 0.0, double(size - 1)));
  };
  const auto hi = [&](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor((v + radius) / pixel), 0.0, double(size - 1)));
  };
  const double r2 = radius * radius;
  for (std::size_t row = lo(center.y); row <= hi(center.y); ++row) {
    for (std::size_t col = lo(center.x); col <= hi(center.x); ++col) {
      int inside = 0;
      for (int sy = 0; sy < kSubsamples; ++sy)
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double px = (static_cast<double>(col) + (sx + 0.5) / kSubsamples) * pixel;
          const double py = (static_cast<double>(row) + (sy + 0.5) / kSubsamples) * pixel;
          const double dx = px - center.x, dy = py - center.y;
          if (dx * dx + dy * dy <= r2) ++inside;
        }
      if (inside == 0) continue;
      const double coverage = static_cast<double>(inside) / (kSubsamples * kSubsamples);
      double& p = image[row * size + col];
      p += coverage * (intensity - p);
    }
  }
}

}  // namespace

double Vec2::norm() const { return std::hypot(x, y); }

std::string to_string(Task task) { return task == Task::reach ? "reach" : "push"; }
std::string to_string(Difficulty d) { return d == Difficulty::d0 ? "d0" : "d1"; }

Task parse_task(const std::string& text) {
  if (text == "reach") return Task::reach;
  if (text == "push") return Task::push;
  throw ConfigError("unknown task '" + text + "' (expected reach or push)");
}

Difficulty parse_difficulty(const std::string& text) {
  if (text == "d0") return Difficulty::d0;
  if (text == "d1") return Difficulty::d1;
  throw ConfigError("unknown difficulty '" + text + "' (expected d0 or d1)");
}

int EnvConfig::effective_horizon() const {
  if (horizon > 0) return horizon;
  return task == Task::reach ? 60 : 120;
}

SamplingRanges sampling_ranges(Task task, Difficulty difficulty) {
  const bool easy = difficulty == Difficulty::d0;
  if (task == Task::reach)
    return easy ? SamplingRanges{0.05, 0.20, 0.30, 0.0, 0.0, 0.0}
                : SamplingRanges{0.15, 0.10, 0.40, 0.0, 0.0, 0.0};
  return easy ? SamplingRanges{0.05, 0.15, 0.25, 0.15, 0.20, std::numbers::pi / 6}
              : SamplingRanges{0.15, 0.10, 0.30, 0.12, 0.25, std::numbers::pi / 2};
}

std::pair<EnvState, Observation> env_reset(const EnvConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const SamplingRanges r = sampling_ranges(cfg.task, cfg.difficulty);

  EnvState s;
  s.task = cfg.task;
  s.difficulty = cfg.difficulty;
  if (cfg.task == Task::reach) {
    // Uniform over the disc (sqrt for area-uniform radius).
    const double a0 = uniform(0.0, 2 * std::numbers::pi);
    s.agent_pos = kCenter + polar(a0, r.start_radius * std::sqrt(unit(rng)));
    const double a1 = uniform(0.0, 2 * std::numbers::pi);
    s.goal_pos = kCenter + polar(a1, uniform(r.goal_min, r.goal_max));
    s.block_pos = kCenter;
  } else {
    const double a0 = uniform(0.0, 2 * std::numbers::pi);
    s.block_pos = kCenter + polar(a0, r.start_radius * std::sqrt(unit(rng)));
    const double a1 = uniform(0.0, 2 * std::numbers::pi);
    const Vec2 axis = polar(a1, 1.0);
    s.goal_pos = s.block_pos + uniform(r.goal_min, r.goal_max) * axis;
    const double off = uniform(-r.approach_spread, r.approach_spread);
    s.agent_pos = clamp01(s.block_pos - uniform(r.approach_min, r.approach_max) * rotate(axis, off));
  }
  return {s, observe(cfg, s)};
}

Vec2 clip_action(Vec2 a) { return {std::clamp(a.x, -1.0, 1.0), std::clamp(a.y, -1.0, 1.0)}; }

bool is_success(const EnvConfig& cfg, const EnvState& s) {
  if (s.task == Task::reach) return (s.agent_pos - s.goal_pos).norm() < cfg.reach_tolerance;
  return (s.block_pos - s.goal_pos).norm() < cfg.push_tolerance;
}

StepResult env_step(const EnvConfig& cfg, const EnvState& state, Vec2 action) {
  if (!std::isfinite(action.x) || !std::isfinite(action.y))
    throw NonFiniteError("env_step: non-finite action");
  const Vec2 a = clip_action(action);
  EnvState s = state;
  s.agent_vel = cfg.damping * s.agent_vel + cfg.gain * a;
  s.agent_pos = clamp01(s.agent_pos + cfg.dt * s.agent_vel);
  if (s.task == Task::push) {
    const double contact = cfg.agent_radius + cfg.block_radius;
    const Vec2 rel = s.block_pos - s.agent_pos;
    if (rel.norm() < contact)
      s.block_pos = clamp01(s.agent_pos + contact * unit_or(rel, Vec2{1.0, 0.0}));
  }
  s.step_index += 1;
  StepResult out;
  out.done = is_success(cfg, s);
  out.obs = observe(cfg, s);
  out.state = s;
  return out;
}

Tensor render_disc(const EnvConfig& cfg, Vec2 center, double radius, double intensity) {
  Tensor image({cfg.image_size, cfg.image_size});
  paint_disc(image, cfg.image_size, center, radius, intensity);
  return image;
}

Tensor render(const EnvConfig& cfg, const EnvState& s) {
  Tensor image({cfg.image_size, cfg.image_size});
  paint_disc(image, cfg.image_size, s.goal_pos, cfg.goal_radius, kGoalIntensity);
  if (s.task == Task::push) paint_disc(image, cfg.image_size, s.block_pos, cfg.block_radius, kBlockIntensity);
  paint_disc(image, cfg.image_size, s.agent_pos, cfg.agent_radius, kAgentIntensity);
  return image;
}

Observation observe(const EnvConfig& cfg, const EnvState& s) {
  return Observation{render(cfg, s), Proprio{s.agent_pos.x, s.agent_pos.y, s.agent_vel.x, s.agent_vel.y}};
}

Vec2 expert_action(const EnvConfig& cfg, const EnvState& s) {
  if (s.task == Task::reach) return pd_toward(s.goal_pos, s);

  const double contact = cfg.agent_radius + cfg.block_radius;
  const Vec2 axis = unit_or(s.goal_pos - s.block_pos, Vec2{1.0, 0.0});
  const Vec2 rel = s.agent_pos - s.block_pos;
  const double along = rel.dot(axis);
  const Vec2 lateral = rel - along * axis;
  const double lateral_dist = lateral.norm();

  if (along > -0.5 * contact || lateral_dist > 0.03) {
    if (along > -0.5 * contact) {
      // In front of or beside the block: swing around it on the near side.
      const Vec2 side = unit_or(lateral, Vec2{-axis.y, axis.x});
      return pd_toward(s.block_pos + (contact + 0.04) * side - 0.02 * axis, s);
    }
    return pd_toward(s.block_pos - (contact + 0.02) * axis, s);
  }
  // Lined up behind the block: drive to the pose that leaves the block on the goal.
  return pd_toward(s.goal_pos - contact * axis, s);
}

}  // namespace hypergoal
