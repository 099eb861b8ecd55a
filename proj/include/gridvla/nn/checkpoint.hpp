#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "gridvla/nn/parameter_set.hpp"

namespace gridvla::nn {

inline constexpr int kCheckpointFormat = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'V', 'L', 'A', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  ParameterSet params;
  nlohmann::json metadata;  // caller-defined block, e.g. the policy config
};

// Layout: 8-byte magic, u64 little-endian header length, JSON header, then
// little-endian float64 arrays in header order. Offsets in the header count
// float64 elements from the start of the data section.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gridvla::nn
