#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace hypergoal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitFailure = 2;

/// The full configuration tree with every default filled in.
nlohmann::json default_config();

/// Overlays `patch` onto `base`. Keys absent from `base` are rejected, as are
/// values whose JSON kind differs from the default's.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Applies one `key.path=value` override. The value is parsed as JSON when
/// possible and taken as a plain string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Converts every section to its typed form and runs the validators.
void validate_config(const nlohmann::json& config);

/// `<out>/<command>-<UTC timestamp>-<config hash>`, created on demand.
std::filesystem::path make_run_dir(const nlohmann::json& config, const std::string& command);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypergoal::cli
