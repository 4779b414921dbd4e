#include "teacar/nn/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "teacar/error.hpp"

namespace teacar::nn {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'A', 'W'};
constexpr std::size_t kHeaderBytes = 8;

void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const Weights& weights) {
  if (!weights.arch.id) {
    throw ValidationError("only the small, medium and large architectures can be saved");
  }
  weights.check();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * static_cast<std::size_t>(weights.scalar_count()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(kWeightFileVersion & 0xFF));
  out.push_back(static_cast<std::uint8_t>(kWeightFileVersion >> 8));
  out.push_back(static_cast<std::uint8_t>(*weights.arch.id));
  out.push_back(static_cast<std::uint8_t>(weights.preprocessing));
  for (const auto& layer : weights.layers) {
    for (float v : layer.kernel) put_f32(out, v);
    for (float v : layer.bias) put_f32(out, v);
  }
  return out;
}

Weights decode_weights(std::span<const std::uint8_t> bytes, std::optional<ArchId> expected) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("weight file: bad magic");
  }
  const auto version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kWeightFileVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(version));
  }
  if (bytes[6] > static_cast<std::uint8_t>(ArchId::large)) {
    throw FormatError("weight file: unknown arch id " + std::to_string(bytes[6]));
  }
  const auto id = static_cast<ArchId>(bytes[6]);
  if (expected && *expected != id) {
    throw FormatError("weight file: arch mismatch (file holds '" + std::string(to_string(id)) +
                      "', expected '" + std::string(to_string(*expected)) + "')");
  }
  if (bytes[7] != static_cast<std::uint8_t>(Preprocessing::byte_over_255)) {
    throw FormatError("weight file: unknown preprocessing id " + std::to_string(bytes[7]));
  }
  Weights w = Weights::zeros(ModelArch::by_id(id));
  const std::size_t need = kHeaderBytes + 4 * static_cast<std::size_t>(w.scalar_count());
  if (bytes.size() < need) {
    throw FormatError("weight file: truncated (" + std::to_string(bytes.size()) + " of " +
                      std::to_string(need) + " bytes)");
  }
  if (bytes.size() > need) {
    throw FormatError("weight file: trailing bytes");
  }
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (auto& layer : w.layers) {
    for (float& v : layer.kernel) {
      v = get_f32(p);
      p += 4;
    }
    for (float& v : layer.bias) {
      v = get_f32(p);
      p += 4;
    }
  }
  return w;
}

void save_weights(const std::filesystem::path& path, const Weights& weights) {
  const auto bytes = encode_weights(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write weight file " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw ConfigError("failed writing weight file " + path.string());
  }
}

Weights load_weights(const std::filesystem::path& path, std::optional<ArchId> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open weight file " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes, expected);
}

}  // namespace teacar::nn
