#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nus/backend.hpp"

namespace nus {

/// Sequential convolutional trunk with named taps. Supports forward evaluation
/// and propagation of tap gradients back to the input; parameters are fixed.
template <typename Scalar>
class Network {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    enum class Op { normalize, conv3x3, relu, tanh, max_pool2, avg_pool2 };

    /// 3x3 convolution, stride 1, zero padding 1. weight is in [out][in][ky][kx] order.
    void add_conv3x3(int in_channels, int out_channels, std::span<const Scalar> weight, std::span<const Scalar> bias);
    void add_normalize(const Eigen::Vector3d& mean, const Eigen::Vector3d& stddev);
    void add(Op op);

    /// Publishes the output of the most recently added layer under name.
    void tap(const std::string& name);

    bool has_tap(const std::string& name) const;
    std::vector<std::string> taps() const;

    /// Runs the trunk through the deepest requested tap (the whole trunk when
    /// layers is empty and run_all is set).
    struct Pass {
        FeatureSet<Scalar> features;
        FeatureMap<Scalar> output;
        std::vector<FeatureMap<Scalar>> saved;  // per-layer state needed for backward
        int last_layer = -1;
        int input_height = 0;
        int input_width = 0;
    };

    Pass forward(const FeatureMap<Scalar>& input, std::span<const std::string> layers, bool record,
                 bool run_all = false) const;

    /// d(loss)/d(input) given d(loss)/d(tap) for any subset of the pass's taps.
    Planar<Scalar> backward(const Pass& pass, const FeatureSet<Scalar>& gradients) const;

    std::size_t size() const noexcept { return layers_.size(); }

private:
    struct Layer {
        Op op;
        std::optional<std::string> tap;
        int in_channels = 0;
        int out_channels = 0;
        std::array<Planar<Scalar>, 9> taps_weight;  // out x in per kernel offset
        Vector bias;
        Vector scale;   // normalize: 1/std
        Vector offset;  // normalize: -mean/std
    };

    FeatureMap<Scalar> apply(const Layer& layer, const FeatureMap<Scalar>& in) const;
    Planar<Scalar> apply_backward(const Layer& layer, const FeatureMap<Scalar>& saved, const FeatureMap<Scalar>& out_shape,
                                  const Planar<Scalar>& grad) const;

    std::vector<Layer> layers_;
};

/// Fully connected head: alternating affine maps and ReLU, ending in an affine map.
template <typename Scalar>
class DenseHead {
public:
    void add_linear(int in_features, int out_features, std::span<const Scalar> weight, std::span<const Scalar> bias);

    /// Logits for a flattened C x H x W activation (channel-major).
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits(const FeatureMap<Scalar>& trunk_output) const;

    int in_features() const;
    int out_features() const;

private:
    std::vector<Planar<Scalar>> weights_;
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> biases_;
};

/// Zero-padded spatial shift: out(c, y, x) = in(c, y + dy, x + dx), 0 outside.
template <typename Scalar>
Planar<Scalar> shift_planes(const Planar<Scalar>& in, int height, int width, int dy, int dx);

}  // namespace nus
