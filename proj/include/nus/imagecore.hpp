#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nus/errors.hpp"

namespace nus {

/// Channels-by-pixels storage: row c holds channel c in row-major pixel order.
template <typename Scalar>
using Planar = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel content-preservation weights, H x W.
template <typename Scalar>
using AlphaMap = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using AlphaMapf = AlphaMap<float>;
using AlphaMapd = AlphaMap<double>;

using LabelMap = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB triple in [0,1].
using Rgb = Eigen::Vector3d;

/// An H x W RGB image with every value in [0,1].
template <typename Scalar>
class Image {
public:
    static constexpr int kChannels = 3;

    Image(int height, int width) : Image(height, width, Planar<Scalar>::Zero(kChannels, Eigen::Index(height) * width)) {}

    Image(int height, int width, Planar<Scalar> data) : height_(height), width_(width), data_(std::move(data)) {
        if (height < 1 || width < 1)
            throw ArgumentError("image dimensions must be at least 1x1");
        if (data_.rows() != kChannels || data_.cols() != Eigen::Index(height) * width)
            throw ArgumentError("image data shape does not match 3 x (height*width)");
        if (!data_.allFinite() || (data_.array() < Scalar(0)).any() || (data_.array() > Scalar(1)).any())
            throw ArgumentError("image values must lie in [0,1]");
    }

    static Image constant(int height, int width, const Rgb& color) {
        Planar<Scalar> data(kChannels, Eigen::Index(height) * width);
        for (int c = 0; c < kChannels; ++c) data.row(c).setConstant(static_cast<Scalar>(color[c]));
        return Image(height, width, std::move(data));
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    Eigen::Index pixels() const noexcept { return Eigen::Index(height_) * width_; }

    const Planar<Scalar>& data() const noexcept { return data_; }

    Scalar operator()(int c, int y, int x) const { return data_(c, Eigen::Index(y) * width_ + x); }

    /// H x W view of one channel.
    Eigen::Map<const AlphaMap<Scalar>> channel(int c) const {
        return Eigen::Map<const AlphaMap<Scalar>>(data_.row(c).data(), height_, width_);
    }

    Rgb mean_color() const { return data_.template cast<double>().rowwise().mean(); }

    template <typename Other>
    Image<Other> cast() const {
        return Image<Other>(height_, width_, data_.template cast<Other>());
    }

    bool operator==(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_ && data_ == other.data_;
    }

private:
    int height_;
    int width_;
    Planar<Scalar> data_;
};

using Imagef = Image<float>;
using Imaged = Image<double>;

/// Assignment of every pixel to exactly one of region_count regions, labels dense in [0, region_count).
class RegionPartition {
public:
    /// Labels must already be dense; throws ArgumentError otherwise.
    explicit RegionPartition(LabelMap labels);

    /// Relabels arbitrary integer labels to a dense range, ordered by original value.
    static RegionPartition from_sparse_labels(const LabelMap& labels);

    int height() const noexcept { return static_cast<int>(labels_.rows()); }
    int width() const noexcept { return static_cast<int>(labels_.cols()); }
    int region_count() const noexcept { return region_count_; }
    const LabelMap& labels() const noexcept { return labels_; }
    int operator()(int y, int x) const { return labels_(y, x); }

    std::vector<Eigen::Index> region_sizes() const;

private:
    LabelMap labels_;
    int region_count_ = 0;
};

/// Row-stochastic n_out x n_in matrix averaging input cells by overlap with each output cell.
template <typename Scalar>
Planar<Scalar> area_resample_matrix(int n_in, int n_out);

/// Linear interpolation matrix. Corner-aligned sampling maps the first and last
/// samples onto each other; otherwise pixel centers are aligned.
template <typename Scalar>
Planar<Scalar> bilinear_resample_matrix(int n_in, int n_out, bool corner_aligned);

/// Bilinear, corner-aligned resampling of a mask.
template <typename Scalar>
AlphaMap<Scalar> resample_alpha(const AlphaMap<Scalar>& mask, int target_height, int target_width);

/// Image resize: area averaging along axes that shrink, bilinear along axes that grow.
template <typename Scalar>
Image<Scalar> resize_image(const Image<Scalar>& image, int target_height, int target_width);

/// Nearest-neighbour resize of a label map followed by dense relabelling.
RegionPartition resize_partition(const RegionPartition& partition, int target_height, int target_width);

/// Sum of absolute differences between horizontally and vertically adjacent values.
template <typename Scalar>
Scalar total_variation(const AlphaMap<Scalar>& mask);

// --- files -------------------------------------------------------------------

/// Writes bytes to a temporary sibling and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

/// Reads a PNG or JPEG as RGB in [0,1]. Grayscale is replicated, alpha dropped.
template <typename Scalar>
Image<Scalar> load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG storing round(v * 255).
template <typename Scalar>
void save_image(const Image<Scalar>& image, const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG of the mask, min-max stretched to [0,255].
template <typename Scalar>
void save_mask_png(const AlphaMap<Scalar>& mask, const std::filesystem::path& path);

/// Reads an 8- or 16-bit grayscale PNG; each distinct gray level becomes one region.
RegionPartition load_label_map(const std::filesystem::path& path);

/// ".alphamap" container: "ALPH", u32 version = 1, u32 width, u32 height, then
/// height*width little-endian float32 values in row-major order.
inline constexpr std::uint32_t kAlphaMapVersion = 1;
inline constexpr std::size_t kAlphaMapHeaderBytes = 16;

std::vector<unsigned char> encode_alphamap(const AlphaMapf& mask);
AlphaMapf decode_alphamap(std::span<const unsigned char> bytes);

void write_alphamap(const AlphaMapf& mask, const std::filesystem::path& path);
AlphaMapf read_alphamap(const std::filesystem::path& path);

}  // namespace nus
