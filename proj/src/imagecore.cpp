#include "nus/imagecore.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nus {

RegionPartition::RegionPartition(LabelMap labels) : labels_(std::move(labels)) {
    if (labels_.rows() < 1 || labels_.cols() < 1)
        throw ArgumentError("partition must cover at least one pixel");
    if (labels_.minCoeff() < 0)
        throw ArgumentError("partition labels must be non-negative");
    region_count_ = labels_.maxCoeff() + 1;
    for (Eigen::Index size : region_sizes())
        if (size == 0)
            throw ArgumentError("partition labels are not dense");
}

RegionPartition RegionPartition::from_sparse_labels(const LabelMap& labels) {
    std::map<int, int> dense;
    for (Eigen::Index i = 0; i < labels.size(); ++i) dense.emplace(labels.data()[i], 0);
    int next = 0;
    for (auto& [value, label] : dense) label = next++;
    LabelMap out(labels.rows(), labels.cols());
    for (Eigen::Index i = 0; i < labels.size(); ++i) out.data()[i] = dense.at(labels.data()[i]);
    return RegionPartition(std::move(out));
}

std::vector<Eigen::Index> RegionPartition::region_sizes() const {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(region_count_), 0);
    for (Eigen::Index i = 0; i < labels_.size(); ++i) ++sizes[static_cast<std::size_t>(labels_.data()[i])];
    return sizes;
}

template <typename Scalar>
Planar<Scalar> area_resample_matrix(int n_in, int n_out) {
    if (n_in < 1 || n_out < 1) throw ArgumentError("resample sizes must be at least 1");
    Planar<Scalar> weights = Planar<Scalar>::Zero(n_out, n_in);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        for (int j = static_cast<int>(std::floor(lo)); j < n_in && j < hi; ++j) {
            const double overlap = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
            if (overlap > 0) weights(i, j) = static_cast<Scalar>(overlap / scale);
        }
    }
    return weights;
}

template <typename Scalar>
Planar<Scalar> bilinear_resample_matrix(int n_in, int n_out, bool corner_aligned) {
    if (n_in < 1 || n_out < 1) throw ArgumentError("resample sizes must be at least 1");
    Planar<Scalar> weights = Planar<Scalar>::Zero(n_out, n_in);
    for (int i = 0; i < n_out; ++i) {
        double pos;
        if (corner_aligned)
            pos = n_out == 1 ? (n_in - 1) / 2.0 : static_cast<double>(i) * (n_in - 1) / (n_out - 1);
        else
            pos = (i + 0.5) * n_in / n_out - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(n_in - 1));
        const int j0 = static_cast<int>(std::floor(pos));
        const double t = pos - j0;
        weights(i, j0) += static_cast<Scalar>(1.0 - t);
        if (t > 0) weights(i, j0 + 1) += static_cast<Scalar>(t);
    }
    return weights;
}

template <typename Scalar>
AlphaMap<Scalar> resample_alpha(const AlphaMap<Scalar>& mask, int target_height, int target_width) {
    if (target_height < 1 || target_width < 1) throw ArgumentError("target dimensions must be at least 1");
    if (mask.rows() == target_height && mask.cols() == target_width) return mask;
    const Planar<Scalar> ry = bilinear_resample_matrix<Scalar>(static_cast<int>(mask.rows()), target_height, true);
    const Planar<Scalar> rx = bilinear_resample_matrix<Scalar>(static_cast<int>(mask.cols()), target_width, true);
    AlphaMap<Scalar> out = (ry * mask.matrix() * rx.transpose()).array();
    // Convex weights; clamp away rounding so bounds are exact.
    return out.max(mask.minCoeff()).min(mask.maxCoeff());
}

namespace {

template <typename Scalar>
Planar<Scalar> axis_matrix(int n_in, int n_out) {
    if (n_out < n_in) return area_resample_matrix<Scalar>(n_in, n_out);
    if (n_out > n_in) return bilinear_resample_matrix<Scalar>(n_in, n_out, false);
    return Planar<Scalar>::Identity(n_in, n_in);
}

}  // namespace

template <typename Scalar>
Image<Scalar> resize_image(const Image<Scalar>& image, int target_height, int target_width) {
    if (target_height < 1 || target_width < 1) throw ArgumentError("target dimensions must be at least 1");
    if (image.height() == target_height && image.width() == target_width) return image;
    const Planar<Scalar> ry = axis_matrix<Scalar>(image.height(), target_height);
    const Planar<Scalar> rx = axis_matrix<Scalar>(image.width(), target_width);
    Planar<Scalar> out(Image<Scalar>::kChannels, Eigen::Index(target_height) * target_width);
    for (int c = 0; c < Image<Scalar>::kChannels; ++c) {
        Eigen::Map<Planar<Scalar>> dst(out.row(c).data(), target_height, target_width);
        dst.noalias() = ry * image.channel(c).matrix() * rx.transpose();
    }
    out = out.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    return Image<Scalar>(target_height, target_width, std::move(out));
}

RegionPartition resize_partition(const RegionPartition& partition, int target_height, int target_width) {
    if (target_height < 1 || target_width < 1) throw ArgumentError("target dimensions must be at least 1");
    if (partition.height() == target_height && partition.width() == target_width) return partition;
    LabelMap out(target_height, target_width);
    for (int y = 0; y < target_height; ++y) {
        const int sy = std::min(partition.height() - 1, static_cast<int>((y + 0.5) * partition.height() / target_height));
        for (int x = 0; x < target_width; ++x) {
            const int sx = std::min(partition.width() - 1, static_cast<int>((x + 0.5) * partition.width() / target_width));
            out(y, x) = partition(sy, sx);
        }
    }
    return RegionPartition::from_sparse_labels(out);
}

template <typename Scalar>
Scalar total_variation(const AlphaMap<Scalar>& mask) {
    Scalar tv = 0;
    if (mask.cols() > 1) tv += (mask.rightCols(mask.cols() - 1) - mask.leftCols(mask.cols() - 1)).abs().sum();
    if (mask.rows() > 1) tv += (mask.bottomRows(mask.rows() - 1) - mask.topRows(mask.rows() - 1)).abs().sum();
    return tv;
}

#define NUS_INSTANTIATE(Scalar)                                                                   \
    template Planar<Scalar> area_resample_matrix<Scalar>(int, int);                               \
    template Planar<Scalar> bilinear_resample_matrix<Scalar>(int, int, bool);                     \
    template AlphaMap<Scalar> resample_alpha<Scalar>(const AlphaMap<Scalar>&, int, int);          \
    template Image<Scalar> resize_image<Scalar>(const Image<Scalar>&, int, int);                  \
    template Scalar total_variation<Scalar>(const AlphaMap<Scalar>&);

NUS_INSTANTIATE(float)
NUS_INSTANTIATE(double)
#undef NUS_INSTANTIATE

}  // namespace nus
