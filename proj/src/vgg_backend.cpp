#include <array>
#include <memory>

#include "nus/backend.hpp"
#include "nus/network.hpp"
#include "nus/weights.hpp"

namespace nus {

namespace {

constexpr std::array<int, 5> kConvsPerBlock = {2, 2, 4, 4, 4};

std::vector<std::string> vgg19_layers() {
    std::vector<std::string> layers;
    for (int b = 0; b < 5; ++b)
        for (int i = 0; i < kConvsPerBlock[static_cast<std::size_t>(b)]; ++i)
            layers.push_back("conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1));
    return layers;
}

const WeightTensor& require(const WeightArchive& archive, const std::string& name, std::size_t rank) {
    const WeightTensor* t = archive.find(name);
    if (t == nullptr) throw WeightFormatError("weight archive is missing tensor " + name);
    if (t->shape.size() != rank) throw WeightFormatError("tensor " + name + " has rank " + std::to_string(t->shape.size()));
    return *t;
}

template <typename Scalar>
std::vector<Scalar> values_as(const WeightTensor& t) {
    return std::vector<Scalar>(t.values.begin(), t.values.end());
}

template <typename Scalar>
class VggBackend final : public Backend<Scalar> {
public:
    VggBackend(const WeightArchive& archive, BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
        if (archive.input_size < 32 || archive.input_size % 32 != 0)
            throw WeightFormatError("native input size must be a positive multiple of 32");
        if (archive.class_count < 1) throw WeightFormatError("class count must be positive");
        input_size_ = static_cast<int>(archive.input_size);
        descriptor_.class_count = static_cast<int>(archive.class_count);
        descriptor_.classification_size = input_size_;
        checksum_ = archive.checksum_hex();

        std::size_t used = 0;
        trunk_.add_normalize(Eigen::Vector3d(0.485, 0.456, 0.406), Eigen::Vector3d(0.229, 0.224, 0.225));
        int channels = 3;
        for (int b = 0; b < 5; ++b) {
            for (int i = 0; i < kConvsPerBlock[static_cast<std::size_t>(b)]; ++i) {
                const std::string name = "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
                const WeightTensor& w = require(archive, name + ".weight", 4);
                const WeightTensor& bias = require(archive, name + ".bias", 1);
                const int out = static_cast<int>(w.shape[0]);
                if (out < 1 || w.shape[1] != static_cast<std::uint32_t>(channels) || w.shape[2] != 3 || w.shape[3] != 3)
                    throw WeightFormatError("tensor " + name + ".weight has shape incompatible with a 3x3 convolution from " +
                                            std::to_string(channels) + " channels");
                if (bias.shape[0] != static_cast<std::uint32_t>(out))
                    throw WeightFormatError("tensor " + name + ".bias does not match output channels");
                trunk_.add_conv3x3(channels, out, values_as<Scalar>(w), values_as<Scalar>(bias));
                trunk_.add(Network<Scalar>::Op::relu);
                trunk_.tap(name);
                channels = out;
                used += 2;
            }
            trunk_.add(Network<Scalar>::Op::max_pool2);
        }

        const int spatial = input_size_ / 32;
        int features = channels * spatial * spatial;
        for (const char* name : {"fc6", "fc7", "fc8"}) {
            const WeightTensor& w = require(archive, std::string(name) + ".weight", 2);
            const WeightTensor& bias = require(archive, std::string(name) + ".bias", 1);
            if (w.shape[1] != static_cast<std::uint32_t>(features) || bias.shape[0] != w.shape[0])
                throw WeightFormatError(std::string("tensor ") + name + " has incompatible shape");
            head_.add_linear(features, static_cast<int>(w.shape[0]), values_as<Scalar>(w), values_as<Scalar>(bias));
            features = static_cast<int>(w.shape[0]);
            used += 2;
        }
        if (features != descriptor_.class_count) throw WeightFormatError("fc8 output does not match class count");
        if (used != archive.tensors.size()) throw WeightFormatError("weight archive contains unexpected tensors");
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    ClassDistribution<Scalar> classify(const Image<Scalar>& image) const override {
        const Image<Scalar> resized = resize_image(image, input_size_, input_size_);
        const FeatureMap<Scalar> input{"input", input_size_, input_size_, resized.data()};
        const auto pass = trunk_.forward(input, {}, false, true);
        return softmax<Scalar>(head_.logits(pass.output));
    }

    FeatureTape<Scalar> trace(const Image<Scalar>& image, std::span<const std::string> layers) const override {
        this->check_layers(layers);
        const FeatureMap<Scalar> input{"input", image.height(), image.width(), image.data()};
        auto pass = std::make_shared<typename Network<Scalar>::Pass>(trunk_.forward(input, layers, true));
        FeatureSet<Scalar> features = pass->features;
        return FeatureTape<Scalar>(std::move(features),
                                   [this, pass](const FeatureSet<Scalar>& g) { return trunk_.backward(*pass, g); });
    }

    std::string weights_checksum() const override { return checksum_; }

private:
    BackendDescriptor descriptor_;
    Network<Scalar> trunk_;
    DenseHead<Scalar> head_;
    int input_size_ = 0;
    std::string checksum_;
};

}  // namespace

BackendDescriptor vgg19_descriptor() {
    BackendDescriptor d;
    d.name = "vgg19";
    d.class_count = 1000;
    d.layers = vgg19_layers();
    d.content_layers = {"conv4_2"};
    d.style_layers = {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
    d.input_size_policy = InputSizePolicy::flexible;
    d.classification_size = 224;
    return d;
}

template <typename Scalar>
std::unique_ptr<Backend<Scalar>> load_pretrained(const std::filesystem::path& weights_path,
                                                 const BackendDescriptor& descriptor) {
    BackendDescriptor d = descriptor;
    d.layers = vgg19_layers();
    d.validate();
    const WeightArchive archive = read_weight_archive(weights_path);
    return std::make_unique<VggBackend<Scalar>>(archive, std::move(d));
}

template std::unique_ptr<Backend<float>> load_pretrained<float>(const std::filesystem::path&, const BackendDescriptor&);
template std::unique_ptr<Backend<double>> load_pretrained<double>(const std::filesystem::path&, const BackendDescriptor&);

}  // namespace nus
