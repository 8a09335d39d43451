#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ctview/mil/model.hpp"

namespace ctview::mil {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian layout:
//   "MILM" u32 version u32 D u32 L u32 input_side u32 input_pool
//   u32 n_blocks u32 channels[n_blocks] u64 n_params f64 params[n_params]
std::vector<std::uint8_t> save_checkpoint(const MilModel& model);

// Throws InvalidArgument on a bad magic, a version mismatch, or a parameter
// count that does not match the layer spec.
MilModel load_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint_file(const MilModel& model, const std::filesystem::path& path);
MilModel load_checkpoint_file(const std::filesystem::path& path);

}  // namespace ctview::mil
