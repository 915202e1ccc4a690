#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hypergoal/encoder.hpp"
#include "hypergoal/params.hpp"

namespace hypergoal {

/// Layer widths of the target MLP, e.g. [in, h1, h2, out]. Layer l occupies a
/// contiguous block of the flat parameter vector: its weight [in_l, out_l]
/// row-major, then its bias [out_l].
class PolicyLayout {
 public:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t weight_offset;
    std::size_t bias_offset;
    std::size_t end;  // one past the last bias entry
  };

  PolicyLayout() = default;
  explicit PolicyLayout(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t param_count() const { return count_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  friend bool operator==(const PolicyLayout& a, const PolicyLayout& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
  std::size_t count_ = 0;
};

inline std::size_t param_count(const PolicyLayout& layout) { return layout.param_count(); }

struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

struct LayerParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [1, out]
};

std::vector<LayerParams> unpack(const ParamVector& theta, const PolicyLayout& layout);
ParamVector pack(const std::vector<LayerParams>& layers, const PolicyLayout& layout);

/// Iterative parameter generator. A conditioning embedding alpha = phi([z_c; z_g])
/// drives K refinement blocks; block k reads [alpha; per-layer mean and std of
/// theta_{k-1}] and emits per-layer step sizes in (0, max_step] and a
/// full-length update, theta_k = theta_{k-1} + step (.) update.
struct HypernetConfig {
  std::size_t latent_dim = 16;
  std::size_t embed_dim = 32;
  std::size_t embed_hidden = 64;
  std::size_t block_hidden = 32;
  std::size_t num_blocks = 8;
  double max_step = 1.0;
  bool learned_init = true;  // false: theta_0 is the zero vector
  double head_gain = 0.05;
  PolicyLayout layout;
};

inline constexpr const char* kHypernetPrefix = "hypernet";

ParamSet init_hypernet(const HypernetConfig& cfg, Rng& rng);
std::size_t hypernet_param_count(const HypernetConfig& cfg);

/// z_c, z_g: [B, latent_dim] -> alpha [B, embed_dim]
NodeId embed_pair(Binder& bind, const HypernetConfig& cfg, NodeId z_current, NodeId z_goal);
/// theta_0 broadcast to `rows` rows.
NodeId initial_params(Binder& bind, const HypernetConfig& cfg, std::size_t rows);
/// Per-layer [mean..., std...] of each row of theta: [B, 2 * num_layers].
NodeId layer_statistics(Graph& graph, const PolicyLayout& layout, NodeId theta);

struct RefineOutputs {
  NodeId theta;
  NodeId step_sizes;  // [B, num_layers]
  NodeId update;      // [B, param_count]
};

RefineOutputs refine_step(Binder& bind, const HypernetConfig& cfg, std::size_t block, NodeId theta,
                          NodeId alpha);
NodeId generate_params(Binder& bind, const HypernetConfig& cfg, NodeId z_current, NodeId z_goal);

ParamVector generate_params(const ParamSet& params, const HypernetConfig& cfg, const LatentVector& z_current,
                            const LatentVector& z_goal);
std::vector<double> embed_pair(const ParamSet& params, const HypernetConfig& cfg, const LatentVector& z_current,
                               const LatentVector& z_goal);

/// Single linear map [z_c; z_g] -> theta, the direct-mapping baseline.
/// scalar_init: theta = s * (W u + b) with learnable s starting at 0.01.
/// bias_init: W starts at zero so theta starts at the learnable bias.
enum class InitScheme { scalar_init, bias_init };

struct DirectMapConfig {
  std::size_t latent_dim = 16;
  InitScheme scheme = InitScheme::bias_init;
  double initial_scale = 0.01;
  PolicyLayout layout;
};

inline constexpr const char* kDirectMapPrefix = "direct_map";

ParamSet init_direct_map(const DirectMapConfig& cfg, Rng& rng);
NodeId direct_map_generate(Binder& bind, const DirectMapConfig& cfg, NodeId z_current, NodeId z_goal);
ParamVector direct_map_generate(const ParamSet& params, const DirectMapConfig& cfg, const LatentVector& z_current,
                                const LatentVector& z_goal);

/// Standard fan-in initialization of a target network, packed flat.
ParamVector init_policy_params(const PolicyLayout& layout, Rng& rng);

}  // namespace hypergoal
