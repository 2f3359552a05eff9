#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nus/imagecore.hpp"

namespace nus {

/// Activations of one layer: channels x (height*width), row-major pixels.
template <typename Scalar>
struct FeatureMap {
    std::string layer;
    int height = 0;
    int width = 0;
    Planar<Scalar> data;

    int channels() const noexcept { return static_cast<int>(data.rows()); }
    bool same_shape(const FeatureMap& other) const {
        return height == other.height && width == other.width && data.rows() == other.data.rows();
    }
};

template <typename Scalar>
using FeatureSet = std::map<std::string, FeatureMap<Scalar>>;

/// Probability vector over the backend's classes.
template <typename Scalar>
using ClassDistribution = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
bool is_valid_distribution(const ClassDistribution<Scalar>& p, double tolerance = 1e-5) {
    return p.size() > 0 && p.allFinite() && (p.array() >= Scalar(0)).all() &&
           std::abs(static_cast<double>(p.sum()) - 1.0) <= tolerance;
}

/// Numerically stable softmax.
template <typename Scalar>
ClassDistribution<Scalar> softmax(const ClassDistribution<Scalar>& logits) {
    ClassDistribution<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

enum class InputSizePolicy { fixed, flexible };

struct BackendDescriptor {
    std::string name;
    int class_count = 0;
    /// Every layer identifier extract_features accepts, in network order.
    std::vector<std::string> layers;
    std::vector<std::string> content_layers;
    std::vector<std::string> style_layers;
    /// Policy for extract_features; classify always runs at classification_size.
    InputSizePolicy input_size_policy = InputSizePolicy::flexible;
    int classification_size = 0;
    /// Optional; empty when the backend only knows class indices.
    std::vector<std::string> class_names;

    bool publishes(const std::string& layer) const;
    /// Throws ConfigurationError unless content/style lists are non-empty subsets of layers.
    void validate() const;
};

/// Features from one forward pass plus the means to push feature gradients
/// back to the input pixels.
template <typename Scalar>
class FeatureTape {
public:
    using Backward = std::function<Planar<Scalar>(const FeatureSet<Scalar>&)>;

    FeatureTape(FeatureSet<Scalar> features, Backward backward)
        : features(std::move(features)), backward_(std::move(backward)) {}

    FeatureSet<Scalar> features;

    /// Gradient of a scalar loss w.r.t. the 3 x (H*W) input, given the loss
    /// gradient for any subset of the traced layers.
    Planar<Scalar> backward(const FeatureSet<Scalar>& gradients) const { return backward_(gradients); }

private:
    Backward backward_;
};

/// Classification network used for occlusion scoring and feature extraction.
/// Instances are immutable after construction; concurrent calls are safe.
/// classify_batch is the only internally parallel entry point.
template <typename Scalar>
class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    virtual ClassDistribution<Scalar> classify(const Image<Scalar>& image) const = 0;

    /// Same results as mapping classify; images must share dimensions.
    virtual std::vector<ClassDistribution<Scalar>> classify_batch(std::span<const Image<Scalar>> images) const;

    /// Forward pass that retains what is needed for backward().
    virtual FeatureTape<Scalar> trace(const Image<Scalar>& image, std::span<const std::string> layers) const = 0;

    FeatureSet<Scalar> extract_features(const Image<Scalar>& image, std::span<const std::string> layers) const {
        return trace(image, layers).features;
    }

    /// Identifies loaded weights; empty for built-in networks.
    virtual std::string weights_checksum() const { return {}; }

protected:
    void check_layers(std::span<const std::string> layers) const;
};

// --- toy backend ---------------------------------------------------------------
//
// Classification: the image is area-averaged to 16x16 and converted to gray as the
// plain mean of R, G and B. Logit k is 10 x the mean gray level of quadrant k
// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right); softmax over 4 classes.
//
// Features, at the working resolution with zero padding:
//   conv1   3x3 conv 3->8 + bias, tanh
//   pool1   2x2 average pool (floor)
//   conv2   3x3 conv 8->8 + bias, tanh
//   quadrants  the 16x16 gray classification input, one 8x8 quadrant per channel
// No input normalization. Content layer conv2, style layers conv1 and conv2.

inline constexpr int kToyClassificationSize = 16;
inline constexpr int kToyChannels = 8;
inline constexpr double kToyLogitScale = 10.0;

/// Fixed parameters of the toy network in [out][in][ky][kx] order.
struct ToyParameters {
    int in_channels;
    int out_channels;
    std::vector<double> weight;
    std::vector<double> bias;
};

ToyParameters toy_conv1_parameters();
ToyParameters toy_conv2_parameters();

BackendDescriptor toy_descriptor();

template <typename Scalar>
std::unique_ptr<Backend<Scalar>> make_toy_backend();

// --- VGG-19 ----------------------------------------------------------------------
//
// Input normalization: (x - mean) / std per channel with the ImageNet statistics
// mean (0.485, 0.456, 0.406), std (0.229, 0.224, 0.225). Layer convB_I names the
// post-ReLU activation of that convolution. classify resizes to the archive's
// native input size and runs fc6/fc7/fc8 with ReLU between and softmax at the end.

inline constexpr const char* kWeightsEnvVar = "NUSTYLE_WEIGHTS";
inline constexpr const char* kDefaultWeightsFile = "vgg19.vggw";

/// Published layers conv1_1 ... conv5_4; content conv4_2; style conv1_1 ... conv5_1.
BackendDescriptor vgg19_descriptor();

/// Loads a weight archive (see weights.hpp) into a VGG-19 backend.
/// Throws IoError for unreadable files and WeightFormatError for layout mismatches.
template <typename Scalar>
std::unique_ptr<Backend<Scalar>> load_pretrained(const std::filesystem::path& weights_path,
                                                 const BackendDescriptor& descriptor = vgg19_descriptor());

/// Resolves a weights location: explicit path (file or directory) first, then
/// the NUSTYLE_WEIGHTS environment variable. Directories resolve to vgg19.vggw.
/// Throws ConfigurationError when nothing is configured or the file is absent.
std::filesystem::path resolve_weights_path(const std::string& explicit_path);

}  // namespace nus
