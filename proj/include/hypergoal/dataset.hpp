#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hypergoal/toyenv.hpp"

namespace hypergoal {

/// One successful expert demonstration: frames o_1..o_N and actions
/// a_1..a_{N-1} (the action taken at frame t leads to frame t+1).
struct Trajectory {
  std::vector<Observation> observations;
  std::vector<Vec2> actions;

  std::size_t length() const { return observations.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Dataset {
  EnvConfig env;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;
  Proprio proprio_mean{};
  Proprio proprio_std{};

  std::size_t frame_count() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kDatasetVersion = 1;
inline constexpr double kStdFloor = 1e-6;

/// Rolls out the scripted expert from seeds seed, seed+1, ... keeping the
/// first `count` successful episodes. Stored values are rounded to binary32
/// so the in-memory dataset equals what `load_dataset` reads back.
Dataset generate_dataset(const EnvConfig& env, std::size_t count, std::uint64_t seed);

/// Per-dimension mean and population std over every stored frame, std
/// floored at kStdFloor.
void compute_proprio_stats(Dataset& dataset);

Proprio standardize(const Proprio& raw, const Proprio& mean, const Proprio& std);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hypergoal
