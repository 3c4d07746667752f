#pragma once

#include <filesystem>

#include "ulb/nn.hpp"

namespace ulb {

// Binary checkpoint: magic "UNLM", u32 format version, u32 layer count, then
// per layer u32 out / u32 in, followed by the float32 weight matrix
// (row-major) and bias vector of each layer in order. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamsF& params, const std::filesystem::path& path);
ParamsF load_checkpoint(const std::filesystem::path& path);

}  // namespace ulb
