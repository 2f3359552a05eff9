#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nus {

/// One named float32 tensor of a weight archive.
struct WeightTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> values;

    std::size_t element_count() const;
};

/// Contents of a ".vggw" weight archive.
///
/// Layout, all integers little-endian u32 and all values little-endian float32:
///
///     "VGGW" | version (=1) | input_size | class_count | tensor_count
///     tensor_count x { name_length | name bytes | rank | dims[rank] | values }
///     crc32 of every preceding byte
///
/// Tensors use PyTorch layout: convolution weights [out][in][3][3], dense
/// weights [out][in], biases [out].
struct WeightArchive {
    std::uint32_t input_size = 0;
    std::uint32_t class_count = 0;
    std::vector<WeightTensor> tensors;
    /// CRC-32 stored in (or computed for) the archive.
    std::uint32_t crc = 0;

    const WeightTensor* find(const std::string& name) const;
    std::string checksum_hex() const;
};

inline constexpr std::uint32_t kWeightArchiveVersion = 1;

std::vector<unsigned char> encode_weight_archive(WeightArchive& archive);
WeightArchive decode_weight_archive(std::span<const unsigned char> bytes);

/// Fills in archive.crc and writes the file atomically.
void write_weight_archive(WeightArchive& archive, const std::filesystem::path& path);
WeightArchive read_weight_archive(const std::filesystem::path& path);

}  // namespace nus
