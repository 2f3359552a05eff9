#include <cmath>
#include <memory>

#include "nus/backend.hpp"
#include "nus/network.hpp"

namespace nus {

ToyParameters toy_conv1_parameters() {
    ToyParameters p{3, kToyChannels, {}, {}};
    for (int o = 0; o < p.out_channels; ++o) {
        for (int i = 0; i < p.in_channels; ++i)
            for (int k = 0; k < 9; ++k) p.weight.push_back(0.25 * std::sin(0.7 * o + 1.3 * i + 0.45 * k + 0.2));
        p.bias.push_back(0.15 * std::cos(1.1 * o));
    }
    return p;
}

ToyParameters toy_conv2_parameters() {
    ToyParameters p{kToyChannels, kToyChannels, {}, {}};
    for (int o = 0; o < p.out_channels; ++o) {
        for (int i = 0; i < p.in_channels; ++i)
            for (int k = 0; k < 9; ++k) p.weight.push_back(0.15 * std::cos(0.9 * o - 0.6 * i + 0.8 * k + 0.5));
        p.bias.push_back(0.1 * std::sin(0.8 * o + 0.3));
    }
    return p;
}

BackendDescriptor toy_descriptor() {
    BackendDescriptor d;
    d.name = "toy";
    d.class_count = 4;
    d.layers = {"conv1", "pool1", "conv2", "quadrants"};
    d.content_layers = {"conv2"};
    d.style_layers = {"conv1", "conv2"};
    d.input_size_policy = InputSizePolicy::flexible;
    d.classification_size = kToyClassificationSize;
    d.class_names = {"top_left", "top_right", "bottom_left", "bottom_right"};
    return d;
}

namespace {

template <typename Scalar>
std::vector<Scalar> to_scalar(const std::vector<double>& v) {
    return std::vector<Scalar>(v.begin(), v.end());
}

template <typename Scalar>
class ToyBackend final : public Backend<Scalar> {
public:
    ToyBackend() : descriptor_(toy_descriptor()) {
        const ToyParameters c1 = toy_conv1_parameters();
        const ToyParameters c2 = toy_conv2_parameters();
        trunk_.add_conv3x3(c1.in_channels, c1.out_channels, to_scalar<Scalar>(c1.weight), to_scalar<Scalar>(c1.bias));
        trunk_.add(Network<Scalar>::Op::tanh);
        trunk_.tap("conv1");
        trunk_.add(Network<Scalar>::Op::avg_pool2);
        trunk_.tap("pool1");
        trunk_.add_conv3x3(c2.in_channels, c2.out_channels, to_scalar<Scalar>(c2.weight), to_scalar<Scalar>(c2.bias));
        trunk_.add(Network<Scalar>::Op::tanh);
        trunk_.tap("conv2");
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    ClassDistribution<Scalar> classify(const Image<Scalar>& image) const override {
        const Planar<Scalar> gray = gray16(image);
        constexpr int half = kToyClassificationSize / 2;
        ClassDistribution<Scalar> logits(4);
        for (int q = 0; q < 4; ++q)
            logits(q) = Scalar(kToyLogitScale) * gray.block((q / 2) * half, (q % 2) * half, half, half).mean();
        return softmax<Scalar>(logits);
    }

    FeatureTape<Scalar> trace(const Image<Scalar>& image, std::span<const std::string> layers) const override {
        this->check_layers(layers);
        std::vector<std::string> trunk_layers;
        bool want_quadrants = false;
        for (const std::string& l : layers) {
            if (l == "quadrants")
                want_quadrants = true;
            else
                trunk_layers.push_back(l);
        }

        FeatureMap<Scalar> input{"input", image.height(), image.width(), image.data()};
        auto pass = std::make_shared<typename Network<Scalar>::Pass>(trunk_.forward(input, trunk_layers, true));
        FeatureSet<Scalar> features = pass->features;
        if (want_quadrants) features["quadrants"] = quadrants(image);

        const int h = image.height();
        const int w = image.width();
        auto backward = [this, pass, h, w](const FeatureSet<Scalar>& gradients) {
            Planar<Scalar> grad = trunk_.backward(*pass, gradients);
            if (auto it = gradients.find("quadrants"); it != gradients.end()) grad += quadrants_backward(it->second, h, w);
            return grad;
        };
        return FeatureTape<Scalar>(std::move(features), std::move(backward));
    }

private:
    static Planar<Scalar> gray16(const Image<Scalar>& image) {
        const Planar<Scalar> ry = area_resample_matrix<Scalar>(image.height(), kToyClassificationSize);
        const Planar<Scalar> rx = area_resample_matrix<Scalar>(image.width(), kToyClassificationSize);
        Planar<Scalar> gray = Planar<Scalar>::Zero(kToyClassificationSize, kToyClassificationSize);
        for (int c = 0; c < 3; ++c) gray += ry * image.channel(c).matrix() * rx.transpose();
        return gray / Scalar(3);
    }

    static FeatureMap<Scalar> quadrants(const Image<Scalar>& image) {
        constexpr int half = kToyClassificationSize / 2;
        const Planar<Scalar> gray = gray16(image);
        FeatureMap<Scalar> f{"quadrants", half, half, Planar<Scalar>(4, half * half)};
        for (int q = 0; q < 4; ++q) {
            Eigen::Map<Planar<Scalar>> dst(f.data.row(q).data(), half, half);
            dst = gray.block((q / 2) * half, (q % 2) * half, half, half);
        }
        return f;
    }

    static Planar<Scalar> quadrants_backward(const FeatureMap<Scalar>& grad, int height, int width) {
        constexpr int half = kToyClassificationSize / 2;
        Planar<Scalar> g16(kToyClassificationSize, kToyClassificationSize);
        for (int q = 0; q < 4; ++q)
            g16.block((q / 2) * half, (q % 2) * half, half, half) =
                Eigen::Map<const Planar<Scalar>>(grad.data.row(q).data(), half, half);
        const Planar<Scalar> ry = area_resample_matrix<Scalar>(height, kToyClassificationSize);
        const Planar<Scalar> rx = area_resample_matrix<Scalar>(width, kToyClassificationSize);
        const Planar<Scalar> per_channel = ry.transpose() * g16 * rx / Scalar(3);
        Planar<Scalar> out(3, Eigen::Index(height) * width);
        for (int c = 0; c < 3; ++c) out.row(c) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(per_channel.data(), per_channel.size());
        return out;
    }

    BackendDescriptor descriptor_;
    Network<Scalar> trunk_;
};

}  // namespace

template <typename Scalar>
std::unique_ptr<Backend<Scalar>> make_toy_backend() {
    return std::make_unique<ToyBackend<Scalar>>();
}

template std::unique_ptr<Backend<float>> make_toy_backend<float>();
template std::unique_ptr<Backend<double>> make_toy_backend<double>();

}  // namespace nus
