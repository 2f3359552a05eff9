#include <algorithm>
#include <cmath>

#include "nus/saliency.hpp"

namespace nus {

MaskMethod parse_mask_method(const std::string& text) {
    if (text == "patch") return MaskMethod::patch;
    if (text == "patch-avg" || text == "patch-averaged") return MaskMethod::patch_averaged;
    if (text == "superpixel") return MaskMethod::superpixel;
    if (text == "segmentation") return MaskMethod::segmentation;
    throw ArgumentError("unknown mask method '" + text + "' (expected patch, patch-avg, superpixel or segmentation)");
}

std::string to_string(MaskMethod method) {
    switch (method) {
        case MaskMethod::patch: return "patch";
        case MaskMethod::patch_averaged: return "patch-avg";
        case MaskMethod::superpixel: return "superpixel";
        case MaskMethod::segmentation: return "segmentation";
    }
    return "?";
}

int MaskMethodConfig::resolved_patch_size(int height, int width) const {
    return patch_size.value_or(std::max(1, std::min(height, width) / 8));
}

std::vector<GridShift> MaskMethodConfig::resolved_shifts(int size) const {
    if (grid_shifts) return *grid_shifts;
    const int h = size / 2;
    std::vector<GridShift> shifts{{0, 0}};
    if (h > 0) shifts.insert(shifts.end(), {{h, 0}, {0, h}, {h, h}});
    return shifts;
}

void MaskMethodConfig::validate() const {
    if (patch_size && *patch_size < 1) throw ArgumentError("patch size must be at least 1");
    if (grid_shifts) {
        if (grid_shifts->empty()) throw ArgumentError("grid shift list is empty");
        for (const GridShift& s : *grid_shifts)
            if (s.dy < 0 || s.dx < 0) throw ArgumentError("grid shifts must be non-negative");
    }
    if ((method == MaskMethod::superpixel || method == MaskMethod::segmentation) && superpixel_params.empty())
        throw ArgumentError("superpixel parameter list is empty");
    for (const SuperpixelParams& p : superpixel_params) {
        if (p.segment_count < 2) throw ArgumentError("superpixel segment count must be at least 2");
        if (!(p.compactness > 0)) throw ArgumentError("superpixel compactness must be positive");
    }
    if (fill_color && ((fill_color->array() < 0).any() || (fill_color->array() > 1).any()))
        throw ArgumentError("fill color components must lie in [0,1]");
    if (!(alpha_min >= 0)) throw ArgumentError("alpha_min must be non-negative");
    if (!(alpha_max > alpha_min)) throw ArgumentError("alpha_max must exceed alpha_min");
}

namespace {

int floor_div(int a, int b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

int grid_cell(int pos, int offset, int size) {
    return floor_div(pos - offset, size) + (offset > 0 ? 1 : 0);
}

}  // namespace

RegionPartition patch_partition(int height, int width, int patch_size, GridShift shift) {
    if (height < 1 || width < 1) throw ArgumentError("image dimensions must be at least 1x1");
    if (patch_size < 1) throw ArgumentError("patch size must be at least 1");
    if (shift.dy < 0 || shift.dx < 0 || shift.dy >= patch_size || shift.dx >= patch_size)
        throw ArgumentError("grid shift must satisfy 0 <= dy, dx < patch_size");
    if (patch_size > height && patch_size > width)
        throw DegeneratePartitionError("patch size " + std::to_string(patch_size) + " exceeds both image dimensions");
    const int cols = grid_cell(width - 1, shift.dx, patch_size) + 1;
    LabelMap labels(height, width);
    for (int y = 0; y < height; ++y) {
        const int row = grid_cell(y, shift.dy, patch_size);
        for (int x = 0; x < width; ++x) labels(y, x) = row * cols + grid_cell(x, shift.dx, patch_size);
    }
    return RegionPartition(std::move(labels));
}

template <typename Scalar>
Image<Scalar> occlude(const Image<Scalar>& image, const RegionPartition& partition, int region_label, const Rgb& fill) {
    if (partition.height() != image.height() || partition.width() != image.width())
        throw ArgumentError("partition does not match image dimensions");
    if (region_label < 0 || region_label >= partition.region_count())
        throw ArgumentError("region label " + std::to_string(region_label) + " is not present in the partition");
    Planar<Scalar> data = image.data();
    const int* labels = partition.labels().data();
    for (Eigen::Index p = 0; p < image.pixels(); ++p)
        if (labels[p] == region_label)
            for (int c = 0; c < 3; ++c) data(c, p) = static_cast<Scalar>(fill[c]);
    return Image<Scalar>(image.height(), image.width(), std::move(data));
}

template <typename Scalar>
AlphaMap<Scalar> scores_to_mask(const RegionPartition& partition, std::span<const RegionScore<Scalar>> scores) {
    std::vector<Scalar> value(static_cast<std::size_t>(partition.region_count()));
    std::vector<bool> seen(value.size(), false);
    for (const RegionScore<Scalar>& s : scores) {
        if (s.region_label < 0 || s.region_label >= partition.region_count())
            throw ArgumentError("score for unknown region " + std::to_string(s.region_label));
        value[static_cast<std::size_t>(s.region_label)] = s.importance;
        seen[static_cast<std::size_t>(s.region_label)] = true;
    }
    for (std::size_t r = 0; r < seen.size(); ++r)
        if (!seen[r]) throw ArgumentError("no score for region " + std::to_string(r));
    AlphaMap<Scalar> mask(partition.height(), partition.width());
    for (Eigen::Index p = 0; p < mask.size(); ++p)
        mask.data()[p] = value[static_cast<std::size_t>(partition.labels().data()[p])];
    return mask;
}

template <typename Scalar>
AlphaMap<Scalar> average_masks(std::span<const AlphaMap<Scalar>> masks) {
    if (masks.empty()) throw ArgumentError("cannot average an empty list of masks");
    AlphaMap<Scalar> sum = masks.front();
    for (std::size_t i = 1; i < masks.size(); ++i) {
        if (masks[i].rows() != sum.rows() || masks[i].cols() != sum.cols())
            throw ArgumentError("masks to average differ in dimensions");
        sum += masks[i];
    }
    return sum / static_cast<Scalar>(masks.size());
}

template <typename Scalar>
AlphaMap<Scalar> normalize_mask(const AlphaMap<Scalar>& raw, double alpha_min, double alpha_max) {
    if (!(alpha_max > alpha_min)) throw ArgumentError("alpha_max must exceed alpha_min");
    if (raw.size() == 0) throw ArgumentError("cannot normalize an empty mask");
    const double lo = static_cast<double>(raw.minCoeff());
    const double range = static_cast<double>(raw.maxCoeff()) - lo;
    if (range < 1e-9) return AlphaMap<Scalar>::Constant(raw.rows(), raw.cols(), static_cast<Scalar>((alpha_min + alpha_max) / 2));
    const AlphaMap<double> out = alpha_min + (alpha_max - alpha_min) * (raw.template cast<double>() - lo) / range;
    return out.max(alpha_min).min(alpha_max).template cast<Scalar>();
}

template <typename Scalar>
AlphaMap<Scalar> segmentation_refine(const AlphaMap<Scalar>& raw, const RegionPartition& segmentation) {
    if (raw.rows() != segmentation.height() || raw.cols() != segmentation.width())
        throw ArgumentError("segmentation map does not match mask dimensions");
    std::vector<double> sum(static_cast<std::size_t>(segmentation.region_count()), 0.0);
    const std::vector<Eigen::Index> count = segmentation.region_sizes();
    const int* labels = segmentation.labels().data();
    for (Eigen::Index p = 0; p < raw.size(); ++p) sum[static_cast<std::size_t>(labels[p])] += raw.data()[p];
    AlphaMap<Scalar> out(raw.rows(), raw.cols());
    for (Eigen::Index p = 0; p < raw.size(); ++p) {
        const auto r = static_cast<std::size_t>(labels[p]);
        out.data()[p] = static_cast<Scalar>(sum[r] / static_cast<double>(count[r]));
    }
    return out;
}

#define NUS_INSTANTIATE(Scalar)                                                                                    \
    template Image<Scalar> occlude<Scalar>(const Image<Scalar>&, const RegionPartition&, int, const Rgb&);         \
    template AlphaMap<Scalar> scores_to_mask<Scalar>(const RegionPartition&, std::span<const RegionScore<Scalar>>); \
    template AlphaMap<Scalar> average_masks<Scalar>(std::span<const AlphaMap<Scalar>>);                            \
    template AlphaMap<Scalar> normalize_mask<Scalar>(const AlphaMap<Scalar>&, double, double);                     \
    template AlphaMap<Scalar> segmentation_refine<Scalar>(const AlphaMap<Scalar>&, const RegionPartition&);

NUS_INSTANTIATE(float)
NUS_INSTANTIATE(double)
#undef NUS_INSTANTIATE

}  // namespace nus
