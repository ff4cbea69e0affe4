#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mirage/common.hpp"
#include "mirage/tensor.hpp"

namespace mirage::io {

/// Bad magic, unknown version, truncation, checksum mismatch or an
/// impossible field value. The CLI maps it to exit code 4.
class CorruptArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;
using NamedTensors = std::vector<std::pair<std::string, ad::Tensor<float>>>;

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::uint16_t kDatasetVersion = 1;

// Checkpoint layout (little-endian):
//   "MIRG" | u16 version | u32 count
//   per tensor: u16 name_len | name | u8 dtype (0 = f32) | u8 rank | u32 dims[rank] | f32 data
//   u32 CRC-32 of every preceding byte
Bytes encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes);

// Dataset layout (little-endian):
//   "MIRD" | u16 version | u32 count | u16 H | u16 W | u8 C
//   per sample: u8 label | u8 generator | u16 pixels[H*W*C] (value * 65535, rounded)
Bytes encode_dataset(std::span<const ImageSample> samples);
std::vector<ImageSample> decode_dataset(std::span<const std::uint8_t> bytes);

/// Pixels snapped to the 1/65535 grid the dataset file stores.
ImageSample quantize_pixels(const ImageSample& sample);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);
void save_dataset(const std::string& path, std::span<const ImageSample> samples);
std::vector<ImageSample> load_dataset(const std::string& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace mirage::io
