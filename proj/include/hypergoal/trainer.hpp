#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hypergoal/dataset.hpp"
#include "hypergoal/encoder.hpp"
#include "hypergoal/gradcheck.hpp"
#include "hypergoal/hypernet.hpp"
#include "hypergoal/optim.hpp"
#include "hypergoal/policy.hpp"
#include "hypergoal/shaping.hpp"

namespace hypergoal {

enum class Variant { hypernet, hypernet_no_shaping, gcbc, direct_map_scalar, direct_map_bias };

Variant parse_variant(const std::string& text);
std::string to_string(Variant variant);
bool uses_shaping(Variant variant);

/// Network sizes shared by every variant. gcbc_hidden = 0 picks the width
/// whose parameter count matches the hypernetwork.
struct ModelConfig {
  std::size_t latent_dim = 16;
  std::size_t encoder_hidden = 64;
  std::size_t policy_hidden = 32;
  std::size_t embed_dim = 32;
  std::size_t embed_hidden = 64;
  std::size_t block_hidden = 32;
  std::size_t num_blocks = 8;
  double max_step = 1.0;
  bool learned_init = true;
  double head_gain = 0.05;
  std::size_t dynamics_hidden = 64;
  std::size_t gcbc_hidden = 0;
  double direct_map_scale = 0.01;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr0 = 5e-4;
  AdamConfig adam;
  std::size_t encoder_freeze_epochs = 20;
  double grad_clip = 10.0;
  /// Samples per batch whose t..t' segment enters the distance loss.
  std::size_t dist_samples_per_batch = 64;
  ShapingConfig shaping;
  std::uint64_t seed = 0;
  ModelConfig model;
};

void validate(const TrainConfig& cfg);

/// Resolved sub-configurations for one variant on one environment.
struct Model {
  Variant variant = Variant::hypernet;
  EncoderConfig encoder;
  HypernetConfig hypernet;
  DirectMapConfig direct_map;
  GcbcConfig gcbc;
  DynamicsConfig dynamics;
  PolicyLayout layout;
};

Model resolve_model(const ModelConfig& cfg, const EnvConfig& env, Variant variant);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Variant variant = Variant::hypernet;
  TrainConfig config;
  EnvConfig env;
  Proprio proprio_mean{};
  Proprio proprio_std{};
  std::size_t epoch = 0;
  std::string rng_state;
  /// Group name ("encoder", "hypernet", "dynamics", "gcbc", "direct_map") -> parameters.
  std::map<std::string, ParamSet> groups;

  bool has_group(const std::string& name) const { return groups.count(name) > 0; }
  const ParamSet& group(const std::string& name) const;
};

/// Fresh parameters for every group the variant trains.
std::map<std::string, ParamSet> init_groups(const Model& model, Rng& rng);

/// 1-based frame indices: uniform over {t+1, ..., n}.
std::size_t sample_goal_index(std::size_t t, std::size_t n, Rng& rng);

/// One training sample, 0-based frame indices within trajectory `traj`.
struct SampleIndex {
  std::size_t traj;
  std::size_t t;
  std::size_t goal;
};

/// Batch tensors with every referenced frame encoded once. Row indices point
/// into `images`.
struct Batch {
  Tensor images;  // [U, pixels]
  std::vector<std::size_t> prev, cur, next, goal;
  Tensor proprio_prev;  // [B, 4], standardized
  Tensor proprio_cur;
  Tensor actions;  // [B, 2]
  std::vector<std::vector<std::size_t>> segments;
  std::vector<std::size_t> segment_refs;

  std::size_t size() const { return cur.size(); }
};

Batch assemble_batch(const Dataset& dataset, std::span<const SampleIndex> samples, std::size_t dist_samples,
                     DistReference reference);

struct LossNodes {
  NodeId total;
  NodeId policy;
  NodeId pred;
  NodeId dist;
};

/// mean over batch and action dims of (target - predicted)^2
NodeId bc_loss(Graph& graph, NodeId predicted, NodeId target);

/// L_policy + lambda_pred L_pred + lambda_dist L_dist. Without shaping the
/// two shaping nodes are constant zeros.
LossNodes total_loss(Binder& bind, const Model& model, const Batch& batch, const ShapingConfig& shaping,
                     bool shaping_on);

struct EpochLog {
  std::size_t epoch;  // 1-based
  double total;
  double policy;
  double pred;
  double dist;
  double lr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, Variant variant, const EpochCallback& on_epoch = {});

/// Small model for finite-difference checks: latent 4, two refinement blocks,
/// narrow hidden layers, encoder trainable from the start.
TrainConfig tiny_grad_config();

/// Checks d(total_loss)/d(every trainable group) against central differences
/// on one batch of `batch_size` samples drawn with `seed`.
FdReport check_total_loss_gradients(const Dataset& dataset, const TrainConfig& cfg, Variant variant,
                                    std::size_t batch_size, std::uint64_t seed);

void write_loss_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace hypergoal
