#include <algorithm>
#include <sstream>

#include "nus/saliency.hpp"

namespace nus {

namespace {

constexpr std::size_t kOcclusionChunk = 16;

template <typename Scalar>
PassSummary summarize(std::string description, const RegionPartition& partition,
                      const std::vector<RegionScore<Scalar>>& scores) {
    PassSummary s;
    s.description = std::move(description);
    s.region_count = partition.region_count();
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                              [](const auto& a, const auto& b) { return a.importance < b.importance; });
    s.score_min = static_cast<double>(lo->importance);
    s.score_max = static_cast<double>(hi->importance);
    s.max_region = hi->region_label;
    return s;
}

}  // namespace

template <typename Scalar>
std::vector<RegionScore<Scalar>> score_regions(const Image<Scalar>& image, const RegionPartition& partition,
                                               const Rgb& fill, const Backend<Scalar>& backend) {
    if (partition.height() != image.height() || partition.width() != image.width())
        throw ArgumentError("partition does not match image dimensions");
    const ClassDistribution<Scalar> reference = backend.classify(image);
    std::vector<RegionScore<Scalar>> scores;
    scores.reserve(static_cast<std::size_t>(partition.region_count()));
    std::vector<Image<Scalar>> batch;
    for (int first = 0; first < partition.region_count(); first += static_cast<int>(kOcclusionChunk)) {
        const int last = std::min(partition.region_count(), first + static_cast<int>(kOcclusionChunk));
        batch.clear();
        for (int r = first; r < last; ++r) batch.push_back(occlude(image, partition, r, fill));
        const std::vector<ClassDistribution<Scalar>> probs = backend.classify_batch(batch);
        for (int r = first; r < last; ++r)
            scores.push_back({r, (probs[static_cast<std::size_t>(r - first)] - reference).norm()});
    }
    return scores;
}

template <typename Scalar>
MaskResult<Scalar> generate_mask_detailed(const Image<Scalar>& image, const MaskMethodConfig& config,
                                          const Backend<Scalar>& backend,
                                          const std::optional<RegionPartition>& segmentation) {
    config.validate();
    const bool needs_segmentation = config.method == MaskMethod::segmentation;
    if (needs_segmentation && !segmentation) throw ArgumentError("segmentation method requires a segmentation map");
    if (!needs_segmentation && segmentation) throw ArgumentError("a segmentation map is only used by the segmentation method");
    if (segmentation && (segmentation->height() != image.height() || segmentation->width() != image.width()))
        throw ArgumentError("segmentation map does not match image dimensions");

    const Rgb fill = config.fill_color.value_or(image.mean_color());
    MaskResult<Scalar> result;
    std::vector<AlphaMap<Scalar>> raws;
    const auto run = [&](const RegionPartition& partition, std::string description) {
        const auto scores = score_regions(image, partition, fill, backend);
        raws.push_back(scores_to_mask<Scalar>(partition, scores));
        result.passes.push_back(summarize(std::move(description), partition, scores));
    };

    switch (config.method) {
        case MaskMethod::patch:
        case MaskMethod::patch_averaged: {
            const int size = config.resolved_patch_size(image.height(), image.width());
            std::vector<GridShift> shifts{{0, 0}};
            if (config.method == MaskMethod::patch_averaged) shifts = config.resolved_shifts(size);
            for (const GridShift& s : shifts) {
                std::ostringstream d;
                d << "patch " << size << " shift (" << s.dy << "," << s.dx << ")";
                run(patch_partition(image.height(), image.width(), size, s), d.str());
            }
            break;
        }
        case MaskMethod::superpixel:
        case MaskMethod::segmentation:
            for (const SuperpixelParams& p : config.superpixel_params) {
                std::ostringstream d;
                d << "superpixel n=" << p.segment_count << " compactness=" << p.compactness;
                run(slic_superpixels(image, p.segment_count, p.compactness), d.str());
            }
            break;
    }

    result.raw = average_masks<Scalar>(raws);
    if (needs_segmentation) result.raw = segmentation_refine(result.raw, *segmentation);
    result.mask = normalize_mask(result.raw, config.alpha_min, config.alpha_max);
    return result;
}

#define NUS_INSTANTIATE(Scalar)                                                                             \
    template std::vector<RegionScore<Scalar>> score_regions<Scalar>(const Image<Scalar>&, const RegionPartition&, \
                                                                    const Rgb&, const Backend<Scalar>&);    \
    template MaskResult<Scalar> generate_mask_detailed<Scalar>(const Image<Scalar>&, const MaskMethodConfig&, \
                                                               const Backend<Scalar>&,                    \
                                                               const std::optional<RegionPartition>&);

NUS_INSTANTIATE(float)
NUS_INSTANTIATE(double)
#undef NUS_INSTANTIATE

}  // namespace nus
