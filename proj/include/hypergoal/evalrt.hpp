#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hypergoal/dataset.hpp"
#include "hypergoal/trainer.hpp"

namespace hypergoal {

struct RolloutConfig {
  int max_steps = 0;  // 0 selects the environment horizon
  double epsilon = 0.1;
  bool regenerate_every_step = true;
  /// End the episode as soon as the latent distance drops below epsilon.
  /// When false only the environment predicate or the step limit ends it.
  bool stop_on_detection = true;
  /// Keep a copy of the generated policy parameters for every step.
  bool record_params = false;

  friend bool operator==(const RolloutConfig&, const RolloutConfig&) = default;
};

void validate(const RolloutConfig& cfg);

/// Something that picks actions in the environment. Learned agents also
/// report latent distances to the goal; stubs report none.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin(const EnvConfig& env, std::uint64_t env_seed, const Observation& first,
                     const Tensor& goal_image, const RolloutConfig& cfg) = 0;
  virtual Vec2 act(const EnvState& state, const Observation& obs) = 0;
  virtual std::optional<double> goal_distance(const Observation&) { return std::nullopt; }
  /// Parameters used for the most recent action, if the agent generates any.
  virtual const std::vector<double>* current_params() const { return nullptr; }
};

class ExpertAgent : public Agent {
 public:
  void begin(const EnvConfig& env, std::uint64_t, const Observation&, const Tensor&, const RolloutConfig&) override {
    env_ = env;
  }
  Vec2 act(const EnvState& state, const Observation&) override { return expert_action(env_, state); }

 private:
  EnvConfig env_;
};

/// Uniform actions in [-1,1]^2, reseeded from the episode seed.
class RandomAgent : public Agent {
 public:
  explicit RandomAgent(std::uint64_t seed) : seed_(seed) {}
  void begin(const EnvConfig&, std::uint64_t env_seed, const Observation&, const Tensor&,
             const RolloutConfig&) override {
    rng_.seed(seed_ ^ (env_seed * 0x9e3779b97f4a7c15ULL));
  }
  Vec2 act(const EnvState&, const Observation&) override;

 private:
  std::uint64_t seed_;
  Rng rng_;
};

/// Policy restored from a checkpoint: encoder + hypernetwork, direct map or GCBC.
class LearnedAgent : public Agent {
 public:
  explicit LearnedAgent(Checkpoint ckpt);

  void begin(const EnvConfig& env, std::uint64_t env_seed, const Observation& first, const Tensor& goal_image,
             const RolloutConfig& cfg) override;
  Vec2 act(const EnvState& state, const Observation& obs) override;
  std::optional<double> goal_distance(const Observation& obs) override;
  const std::vector<double>* current_params() const override;

  const Checkpoint& checkpoint() const { return ckpt_; }
  LatentVector encode_image(const Tensor& image) const;
  Metric metric() const { return ckpt_.config.shaping.metric; }

 private:
  const LatentVector& latent_for(const Tensor& image);

  Checkpoint ckpt_;
  Model model_;
  bool regenerate_ = true;
  LatentVector goal_;
  LatentVector prev_latent_;
  Proprio prev_proprio_{};
  bool has_prev_ = false;
  Tensor cached_image_;
  LatentVector cached_latent_;
  ParamVector theta_;
  bool has_theta_ = false;
};

struct RolloutResult {
  std::uint64_t env_seed = 0;
  std::size_t steps = 0;
  /// d(E(I_{t+1}), E(I_g)) after each action; empty for agents without an encoder.
  std::vector<double> distances;
  bool env_success = false;
  bool auto_success = false;
  std::vector<Vec2> actions;
  std::vector<std::vector<double>> params;
  /// Wall-clock seconds spent choosing actions.
  double inference_seconds = 0.0;
};

/// One closed-loop episode: choose an action, step, then check the latent
/// distance and the environment predicate, in that order.
RolloutResult rollout(Agent& agent, const EnvConfig& env, std::uint64_t env_seed, const Tensor& goal_image,
                      const RolloutConfig& cfg);

/// Goal image for a seed: the expert's terminal frame, or nothing if the
/// expert fails within the horizon.
std::optional<Tensor> expert_goal_image(const EnvConfig& env, std::uint64_t env_seed);

inline constexpr std::uint64_t kEvalSeedBase = 100000;

struct DetectionMetrics {
  double auto_success_rate = 0.0;
  double env_success_rate = 0.0;
  double accuracy = 0.0;
  std::optional<double> recall;
};

DetectionMetrics detection_metrics(std::span<const RolloutResult> results);

/// Fraction of consecutive pairs with d_{t+1} <= d_t + 1e-9.
double monotonicity_fraction(std::span<const double> distances);
inline double monotonicity_fraction(const RolloutResult& r) { return monotonicity_fraction(r.distances); }

struct EvalReport {
  std::string agent;
  EnvConfig env;
  RolloutConfig rollout;
  std::uint64_t seed = 0;
  std::size_t n_rollouts = 0;
  std::size_t env_successes = 0;
  std::size_t auto_successes = 0;
  double env_success_rate = 0.0;
  double auto_success_rate = 0.0;
  double detection_accuracy = 0.0;
  std::optional<double> detection_recall;
  std::optional<double> mean_steps_to_success;
  /// Mean over env-successful rollouts with at least two distances.
  std::optional<double> monotonicity;
  double mean_inference_seconds_per_step = 0.0;
  std::vector<RolloutResult> results;
};

/// n rollouts on seeds seed, seed+1, ... skipping seeds where the expert
/// cannot produce a goal image.
EvalReport evaluate(Agent& agent, const std::string& agent_name, const EnvConfig& env, std::size_t n,
                    std::uint64_t seed, const RolloutConfig& cfg);

/// Nearest-rank quantile: the ceil(q n)-th smallest value.
double nearest_rank(std::vector<double> values, double quantile);

/// Quantile of d(E(o_{N-1}), E(o_N)) over the dataset's trajectories.
double calibrate_epsilon(const LearnedAgent& agent, const Dataset& dataset, double quantile = 0.95);

void export_curves(std::span<const RolloutResult> results, const std::filesystem::path& path);

struct CurvePoint {
  std::size_t rollout_id;
  std::size_t step;
  double distance;
  bool env_success;
};
std::vector<CurvePoint> read_curves(const std::filesystem::path& path);

nlohmann::json report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace hypergoal
