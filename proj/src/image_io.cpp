#include "nus/imagecore.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <system_error>

#include <unistd.h>

namespace nus {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::span<const unsigned char> bytes) {
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError("cannot move output into place at " + path.string() + ": " + ec.message());
    }
}

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in || fs::is_directory(path)) throw IoError("cannot read " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error while reading " + path.string());
    return bytes;
}

namespace {

bool is_png(std::span<const unsigned char> b) {
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const unsigned char> b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

cv::Mat decode(const fs::path& path, int flags, bool png_only) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (!is_png(bytes) && (png_only || !is_jpeg(bytes)))
        throw FormatError(path.string() + (png_only ? " is not a PNG file" : " is not a PNG or JPEG file"));
    cv::Mat mat;
    try {
        mat = cv::imdecode(bytes, flags);
    } catch (const cv::Exception& e) {
        throw FormatError("cannot decode " + path.string() + ": " + e.what());
    }
    if (mat.empty()) throw FormatError("cannot decode " + path.string());
    return mat;
}

void encode_png(const cv::Mat& mat, const fs::path& path) {
    std::vector<unsigned char> buffer;
    if (!cv::imencode(".png", mat, buffer)) throw IoError("PNG encoding failed for " + path.string());
    write_file_atomic(path, buffer);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[offset + i]) << (8 * i);
    return v;
}

}  // namespace

template <typename Scalar>
Image<Scalar> load_image(const fs::path& path) {
    const cv::Mat bgr = decode(path, cv::IMREAD_COLOR, false);
    CV_Assert(bgr.type() == CV_8UC3);
    const int h = bgr.rows;
    const int w = bgr.cols;
    Planar<Scalar> data(3, Eigen::Index(h) * w);
    for (int y = 0; y < h; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            const Eigen::Index p = Eigen::Index(y) * w + x;
            for (int c = 0; c < 3; ++c) data(c, p) = static_cast<Scalar>(row[x][2 - c]) / Scalar(255);
        }
    }
    return Image<Scalar>(h, w, std::move(data));
}

template <typename Scalar>
void save_image(const Image<Scalar>& image, const fs::path& path) {
    cv::Mat bgr(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[x][2 - c] = static_cast<unsigned char>(std::lround(static_cast<double>(image(c, y, x)) * 255.0));
    }
    encode_png(bgr, path);
}

template <typename Scalar>
void save_mask_png(const AlphaMap<Scalar>& mask, const fs::path& path) {
    if (mask.size() == 0) throw ArgumentError("cannot visualize an empty mask");
    const double lo = static_cast<double>(mask.minCoeff());
    const double range = static_cast<double>(mask.maxCoeff()) - lo;
    cv::Mat gray(static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), CV_8UC1);
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x) {
            const double t = range > 0 ? (static_cast<double>(mask(y, x)) - lo) / range : 0.5;
            gray.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
        }
    encode_png(gray, path);
}

RegionPartition load_label_map(const fs::path& path) {
    const cv::Mat mat = decode(path, cv::IMREAD_UNCHANGED, true);
    if (mat.channels() != 1 || (mat.depth() != CV_8U && mat.depth() != CV_16U))
        throw FormatError(path.string() + " must be an 8- or 16-bit single-channel grayscale PNG");
    LabelMap raw(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y)
        for (int x = 0; x < mat.cols; ++x)
            raw(y, x) = mat.depth() == CV_8U ? mat.at<unsigned char>(y, x) : mat.at<unsigned short>(y, x);
    return RegionPartition::from_sparse_labels(raw);
}

std::vector<unsigned char> encode_alphamap(const AlphaMapf& mask) {
    if (mask.rows() < 1 || mask.cols() < 1) throw ArgumentError("alpha map must be at least 1x1");
    if (!mask.allFinite()) throw ArgumentError("alpha map contains non-finite values");
    std::vector<unsigned char> out;
    out.reserve(kAlphaMapHeaderBytes + 4 * static_cast<std::size_t>(mask.size()));
    for (char ch : {'A', 'L', 'P', 'H'}) out.push_back(static_cast<unsigned char>(ch));
    put_u32(out, kAlphaMapVersion);
    put_u32(out, static_cast<std::uint32_t>(mask.cols()));
    put_u32(out, static_cast<std::uint32_t>(mask.rows()));
    for (Eigen::Index i = 0; i < mask.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(mask.data()[i]));
    return out;
}

AlphaMapf decode_alphamap(std::span<const unsigned char> bytes) {
    if (bytes.size() < kAlphaMapHeaderBytes || std::memcmp(bytes.data(), "ALPH", 4) != 0)
        throw FormatError("not an alpha map: bad magic bytes");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kAlphaMapVersion) throw FormatError("unsupported alpha map version " + std::to_string(version));
    const std::uint32_t width = get_u32(bytes, 8);
    const std::uint32_t height = get_u32(bytes, 12);
    if (width == 0 || height == 0) throw FormatError("alpha map has zero dimension");
    const std::uint64_t expected = kAlphaMapHeaderBytes + 4ull * width * height;
    if (bytes.size() != expected)
        throw FormatError("alpha map payload size " + std::to_string(bytes.size()) + " does not match header (" +
                          std::to_string(expected) + " bytes expected)");
    AlphaMapf mask(height, width);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = std::bit_cast<float>(get_u32(bytes, kAlphaMapHeaderBytes + 4 * static_cast<std::size_t>(i)));
    if (!mask.allFinite()) throw FormatError("alpha map contains non-finite values");
    return mask;
}

void write_alphamap(const AlphaMapf& mask, const fs::path& path) {
    write_file_atomic(path, encode_alphamap(mask));
}

AlphaMapf read_alphamap(const fs::path& path) {
    return decode_alphamap(read_file_bytes(path));
}

template Image<float> load_image<float>(const fs::path&);
template Image<double> load_image<double>(const fs::path&);
template void save_image<float>(const Image<float>&, const fs::path&);
template void save_image<double>(const Image<double>&, const fs::path&);
template void save_mask_png<float>(const AlphaMap<float>&, const fs::path&);
template void save_mask_png<double>(const AlphaMap<double>&, const fs::path&);

}  // namespace nus
