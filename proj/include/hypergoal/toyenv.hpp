#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "hypergoal/tensor.hpp"

namespace hypergoal {

enum class Task { reach, push };
enum class Difficulty { d0, d1 };

std::string to_string(Task task);
std::string to_string(Difficulty difficulty);
Task parse_task(const std::string& text);
Difficulty parse_difficulty(const std::string& text);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const;
};

inline constexpr std::size_t kProprioDim = 4;
inline constexpr std::size_t kActionDim = 2;

using Proprio = std::array<double, kProprioDim>;

/// Physics, geometry and rendering constants. All lengths are in arena
/// units; the arena is [0,1]^2.
struct EnvConfig {
  Task task = Task::reach;
  Difficulty difficulty = Difficulty::d0;
  double dt = 0.1;
  double damping = 0.8;
  double gain = 0.5;
  int horizon = 0;  // 0 selects the task default (60 reach, 120 push)
  double agent_radius = 0.05;
  double block_radius = 0.05;
  double goal_radius = 0.05;
  double reach_tolerance = 0.05;
  double push_tolerance = 0.06;
  std::size_t image_size = 24;

  int effective_horizon() const;
  std::size_t pixel_count() const { return image_size * image_size; }
  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

/// Initial-pose sampling ranges. Every d1 range contains the matching d0 one.
struct SamplingRanges {
  double start_radius;     // reach: agent offset from center; push: block offset
  double goal_min;         // reach: goal distance from center; push: from block
  double goal_max;
  double approach_min;     // push only: agent distance behind the block
  double approach_max;
  double approach_spread;  // push only: max angle (rad) off the block->goal axis
};

SamplingRanges sampling_ranges(Task task, Difficulty difficulty);

struct EnvState {
  Vec2 agent_pos;
  Vec2 agent_vel;
  Vec2 block_pos;
  Vec2 goal_pos;
  int step_index = 0;
  Task task = Task::reach;
  Difficulty difficulty = Difficulty::d0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Observation {
  Tensor image;  // [image_size, image_size], values in [0,1]
  Proprio proprio{};

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  EnvState state;
  Observation obs;
  bool done = false;
};

std::pair<EnvState, Observation> env_reset(const EnvConfig& cfg, std::uint64_t seed);
/// Semi-implicit Euler step. The action is clipped to [-1,1]^2.
StepResult env_step(const EnvConfig& cfg, const EnvState& state, Vec2 action);
bool is_success(const EnvConfig& cfg, const EnvState& state);

inline constexpr double kGoalIntensity = 0.3;
inline constexpr double kBlockIntensity = 0.6;
inline constexpr double kAgentIntensity = 1.0;

/// Anti-aliased raster: goal marker, then block, then agent, each blended
/// over what is already painted by its per-pixel disc coverage.
Tensor render(const EnvConfig& cfg, const EnvState& state);
/// Coverage-weighted raster of a single disc over a black background.
Tensor render_disc(const EnvConfig& cfg, Vec2 center, double radius, double intensity);
Observation observe(const EnvConfig& cfg, const EnvState& state);

/// Scripted controller. Reach: clipped PD toward the goal. Push: approach a
/// waypoint behind the block on the goal line, then drive the block home.
Vec2 expert_action(const EnvConfig& cfg, const EnvState& state);

Vec2 clip_action(Vec2 action);

}  // namespace hypergoal
