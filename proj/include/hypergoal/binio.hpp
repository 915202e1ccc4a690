#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hypergoal::binio {

/// Appends values as little-endian IEEE-754 binary32.
void append_f32(std::vector<unsigned char>& out, std::span<const double> values);
/// Decodes little-endian binary32 values; `bytes.size()` must be a multiple of 4.
std::vector<double> decode_f32(std::span<const unsigned char> bytes);

double round_f32(double v);
void round_f32(std::span<double> values);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::string hex64(std::uint64_t v);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hypergoal::binio
