#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "teacar/nn/network.hpp"

namespace teacar::nn {

// Weight file, little-endian:
//   "TEAW" | u16 version = 1 | u8 arch id | u8 preprocessing id
//   then for each layer in order: kernel f32s, bias f32s.

inline constexpr std::uint16_t kWeightFileVersion = 1;

std::vector<std::uint8_t> encode_weights(const Weights& weights);
/// FormatError on bad magic/version/ids, truncation, trailing bytes, or when
/// the stored arch differs from `expected`.
Weights decode_weights(std::span<const std::uint8_t> bytes,
                       std::optional<ArchId> expected = std::nullopt);

void save_weights(const std::filesystem::path& path, const Weights& weights);
Weights load_weights(const std::filesystem::path& path,
                     std::optional<ArchId> expected = std::nullopt);

}  // namespace teacar::nn
