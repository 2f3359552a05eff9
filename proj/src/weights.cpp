#include "nus/weights.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "nus/errors.hpp"
#include "nus/imagecore.hpp"

namespace nus {

std::size_t WeightTensor::element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
}

const WeightTensor* WeightArchive::find(const std::string& name) const {
    for (const WeightTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::string WeightArchive::checksum_hex() const {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc);
    return buf;
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t crc_of(std::span<const unsigned char> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        crc = crc32(crc, bytes.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void floats(std::vector<float>& out, std::size_t n) {
        if (n > (bytes_.size() - pos_) / 4) throw WeightFormatError("weight archive is truncated");
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(u32());
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw WeightFormatError("weight archive is truncated");
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_weight_archive(WeightArchive& archive) {
    std::vector<unsigned char> out;
    for (char ch : {'V', 'G', 'G', 'W'}) out.push_back(static_cast<unsigned char>(ch));
    put_u32(out, kWeightArchiveVersion);
    put_u32(out, archive.input_size);
    put_u32(out, archive.class_count);
    put_u32(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const WeightTensor& t : archive.tensors) {
        if (t.values.size() != t.element_count())
            throw ArgumentError("tensor " + t.name + " has " + std::to_string(t.values.size()) +
                                " values but shape implies " + std::to_string(t.element_count()));
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::uint32_t d : t.shape) put_u32(out, d);
        for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    archive.crc = crc_of(out);
    put_u32(out, archive.crc);
    return out;
}

WeightArchive decode_weight_archive(std::span<const unsigned char> bytes) {
    if (bytes.size() < 24 || std::memcmp(bytes.data(), "VGGW", 4) != 0)
        throw WeightFormatError("not a weight archive: bad magic bytes");
    Reader in(bytes.first(bytes.size() - 4));
    in.text(4);
    const std::uint32_t version = in.u32();
    if (version != kWeightArchiveVersion)
        throw WeightFormatError("unsupported weight archive version " + std::to_string(version));
    WeightArchive archive;
    archive.input_size = in.u32();
    archive.class_count = in.u32();
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightTensor t;
        t.name = in.text(in.u32());
        const std::uint32_t rank = in.u32();
        if (rank == 0 || rank > 8) throw WeightFormatError("tensor " + t.name + " has unsupported rank");
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.u32());
        in.floats(t.values, t.element_count());
        archive.tensors.push_back(std::move(t));
    }
    if (in.position() != bytes.size() - 4) throw WeightFormatError("weight archive has trailing bytes");
    const std::uint32_t stored = Reader(bytes.last(4)).u32();
    const std::uint32_t actual = crc_of(bytes.first(bytes.size() - 4));
    if (stored != actual) throw WeightFormatError("weight archive checksum mismatch");
    archive.crc = stored;
    return archive;
}

void write_weight_archive(WeightArchive& archive, const std::filesystem::path& path) {
    write_file_atomic(path, encode_weight_archive(archive));
}

WeightArchive read_weight_archive(const std::filesystem::path& path) {
    return decode_weight_archive(read_file_bytes(path));
}

}  // namespace nus
