#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nus/backend.hpp"
#include "nus/imagecore.hpp"

namespace nus {

/// Occlusion importance of one region: L2 distance between the class
/// distributions of the original and the occluded image. Lies in [0, sqrt 2].
template <typename Scalar>
struct RegionScore {
    int region_label;
    Scalar importance;
};

enum class MaskMethod { patch, patch_averaged, superpixel, segmentation };

MaskMethod parse_mask_method(const std::string& text);
std::string to_string(MaskMethod method);

struct GridShift {
    int dy = 0;
    int dx = 0;
};

struct SuperpixelParams {
    int segment_count = 100;
    double compactness = 10.0;
};

/// Mask generation settings. Unset optionals resolve per image:
/// patch_size to max(1, min(H, W) / 8), grid_shifts to the four half-stride
/// offsets of that patch size, fill_color to the image's mean color.
struct MaskMethodConfig {
    MaskMethod method = MaskMethod::patch_averaged;
    std::optional<int> patch_size;
    std::optional<std::vector<GridShift>> grid_shifts;
    std::vector<SuperpixelParams> superpixel_params = default_superpixel_sweep();
    std::optional<Rgb> fill_color;
    double alpha_min = 0.0;
    double alpha_max = 1.0;

    static std::vector<SuperpixelParams> default_superpixel_sweep() { return {{50, 10.0}, {100, 10.0}, {200, 20.0}}; }

    int resolved_patch_size(int height, int width) const;
    std::vector<GridShift> resolved_shifts(int patch_size) const;

    /// Throws ArgumentError on invalid fields.
    void validate() const;
};

// --- partitions ------------------------------------------------------------------

/// Grid of patch_size cells whose lines sit at dy + k*patch_size (rows) and
/// dx + k*patch_size (columns); edge cells are truncated. Labels are assigned
/// to cells in row-major order.
RegionPartition patch_partition(int height, int width, int patch_size, GridShift shift = {});

/// SLIC superpixels: k-means over (L, a, b, y, x) with distance
/// d_lab + (compactness / S) * d_xy, S = sqrt(H * W / segment_count), seeds on a
/// regular grid moved to the lowest-gradient pixel of their 3x3 neighbourhood,
/// 10 iterations, then orphan components are merged into their largest
/// neighbouring segment. The result is 4-connected per label and densely labelled.
template <typename Scalar>
RegionPartition slic_superpixels(const Image<Scalar>& image, int segment_count, double compactness);

/// sRGB in [0,1] to CIE L*a*b* (D65), one row per L, a, b.
template <typename Scalar>
Planar<double> rgb_to_lab(const Image<Scalar>& image);

// --- occlusion scoring -------------------------------------------------------------

template <typename Scalar>
Image<Scalar> occlude(const Image<Scalar>& image, const RegionPartition& partition, int region_label, const Rgb& fill);

/// One score per region, in label order. The reference distribution is computed
/// once; occluded variants go through classify_batch in fixed-size chunks.
template <typename Scalar>
std::vector<RegionScore<Scalar>> score_regions(const Image<Scalar>& image, const RegionPartition& partition,
                                               const Rgb& fill, const Backend<Scalar>& backend);

template <typename Scalar>
AlphaMap<Scalar> scores_to_mask(const RegionPartition& partition, std::span<const RegionScore<Scalar>> scores);

template <typename Scalar>
AlphaMap<Scalar> average_masks(std::span<const AlphaMap<Scalar>> masks);

/// Min-max rescale into [alpha_min, alpha_max]; a range below 1e-9 maps to the midpoint.
template <typename Scalar>
AlphaMap<Scalar> normalize_mask(const AlphaMap<Scalar>& raw, double alpha_min, double alpha_max);

/// Replaces every segment by its mean raw value.
template <typename Scalar>
AlphaMap<Scalar> segmentation_refine(const AlphaMap<Scalar>& raw, const RegionPartition& segmentation);

/// Summary of one partition scored during mask generation.
struct PassSummary {
    std::string description;
    int region_count = 0;
    double score_min = 0;
    double score_max = 0;
    int max_region = 0;
};

template <typename Scalar>
struct MaskResult {
    AlphaMap<Scalar> raw;
    AlphaMap<Scalar> mask;
    std::vector<PassSummary> passes;
};

/// Full pipeline: partition, score, average raw maps, optionally refine with a
/// segmentation map, normalize. segmentation is required iff method is segmentation.
template <typename Scalar>
MaskResult<Scalar> generate_mask_detailed(const Image<Scalar>& image, const MaskMethodConfig& config,
                                          const Backend<Scalar>& backend,
                                          const std::optional<RegionPartition>& segmentation = std::nullopt);

template <typename Scalar>
AlphaMap<Scalar> generate_mask(const Image<Scalar>& image, const MaskMethodConfig& config, const Backend<Scalar>& backend,
                               const std::optional<RegionPartition>& segmentation = std::nullopt) {
    return generate_mask_detailed(image, config, backend, segmentation).mask;
}

}  // namespace nus
