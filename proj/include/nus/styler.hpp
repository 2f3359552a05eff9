#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nus/backend.hpp"
#include "nus/imagecore.hpp"

namespace nus {

struct LayerWeight {
    std::string layer;
    double weight = 1.0;
};

enum class InitMode { content, random };

InitMode parse_init_mode(const std::string& text);

inline constexpr int kDefaultIterations = 500;
inline constexpr double kDefaultStepSize = 0.02;

struct StyleConfig {
    std::vector<LayerWeight> content_layers;
    std::vector<LayerWeight> style_layers;
    /// Global multiplier on the style term; the content term is weighted only by the alpha map.
    double style_weight = 1.0;
    int iterations = kDefaultIterations;
    /// Adam learning rate in [0,1] pixel units.
    double step_size = kDefaultStepSize;
    InitMode init_mode = InitMode::content;
    std::uint64_t random_seed = 0;

    /// Descriptor's default layers, each with weight 1.
    static StyleConfig for_backend(const BackendDescriptor& descriptor);

    void validate() const;
};

/// Feature correlations A * A^T / (C * H * W) for the C x (H*W) unrolling A.
template <typename Scalar>
struct GramMatrix {
    std::string layer;
    Planar<Scalar> matrix;
};

/// weight * sum over channels and positions of (F - P)^2.
template <typename Scalar>
Scalar content_loss(const FeatureMap<Scalar>& features, const FeatureMap<Scalar>& target, Scalar weight);

/// sum_{i,j} alpha_{i,j} * sum_c (F_{c,i,j} - P_{c,i,j})^2, alpha at feature resolution.
template <typename Scalar>
Scalar weighted_content_loss(const FeatureMap<Scalar>& features, const FeatureMap<Scalar>& target,
                             const AlphaMap<Scalar>& alpha);

template <typename Scalar>
GramMatrix<Scalar> gram(const FeatureMap<Scalar>& features);

template <typename Scalar>
using GramSet = std::map<std::string, GramMatrix<Scalar>>;

/// sum_l w_l * ||gram(F_l) - G_l||_F^2 over the weighted layers.
template <typename Scalar>
Scalar style_loss(const FeatureSet<Scalar>& features, const GramSet<Scalar>& targets, std::span<const LayerWeight> weights);

/// Content features of x_c and Gram matrices of x_s.
template <typename Scalar>
struct StyleTargets {
    int height = 0;
    int width = 0;
    FeatureSet<Scalar> content;
    GramSet<Scalar> style;
};

template <typename Scalar>
StyleTargets<Scalar> prepare_targets(const Image<Scalar>& content, const Image<Scalar>& style, const StyleConfig& config,
                                     const Backend<Scalar>& backend);

template <typename Scalar>
struct LossBreakdown {
    Scalar content = 0;  // alpha-weighted content term
    Scalar style = 0;    // unscaled style loss
    Scalar total = 0;    // content + style_weight * style
};

/// Objective at x. When gradient is non-null it receives d(total)/dx as
/// 3 x (H*W). alpha is at image resolution and is resampled bilinearly to each
/// content layer.
template <typename Scalar>
LossBreakdown<Scalar> evaluate_loss(const Image<Scalar>& x, const StyleTargets<Scalar>& targets,
                                    const AlphaMap<Scalar>& alpha, const StyleConfig& config,
                                    const Backend<Scalar>& backend, Planar<Scalar>* gradient = nullptr);

template <typename Scalar>
Scalar total_loss(const Image<Scalar>& x, const StyleTargets<Scalar>& targets, const AlphaMap<Scalar>& alpha,
                  const StyleConfig& config, const Backend<Scalar>& backend) {
    return evaluate_loss(x, targets, alpha, config, backend).total;
}

/// Unweighted content loss (weight 1, no alpha) summed over content layers.
template <typename Scalar>
Scalar content_distance(const Image<Scalar>& x, const StyleTargets<Scalar>& targets, const StyleConfig& config,
                        const Backend<Scalar>& backend);

struct TraceRow {
    int iteration;
    double content_loss;
    double style_loss;
    double total_loss;
};

template <typename Scalar>
struct StylizeResult {
    Image<Scalar> image;
    /// Row k holds the losses after k optimizer steps; iterations + 1 rows.
    std::vector<TraceRow> trace;
};

using IterationCallback = std::function<void(const TraceRow&)>;

/// Adam descent on pixel values with clamping to [0,1] after every step.
/// Throws DivergenceError if the loss becomes non-finite.
template <typename Scalar>
StylizeResult<Scalar> stylize(const Image<Scalar>& content, const Image<Scalar>& style, const AlphaMap<Scalar>& alpha,
                              const StyleConfig& config, const Backend<Scalar>& backend,
                              const IterationCallback& on_iteration = {});

/// "iteration,content_loss,style_loss,total_loss" header plus one row per entry.
std::string trace_to_csv(std::span<const TraceRow> trace);
void write_trace_csv(std::span<const TraceRow> trace, const std::filesystem::path& path);

/// Adam with bias correction; beta1 0.9, beta2 0.999, epsilon 1e-8.
template <typename Scalar>
class AdamOptimizer {
public:
    explicit AdamOptimizer(double step_size) : step_size_(step_size) {}

    void step(Planar<Scalar>& x, const Planar<Scalar>& gradient);

private:
    double step_size_;
    int t_ = 0;
    Planar<Scalar> m_;
    Planar<Scalar> v_;
};

}  // namespace nus
