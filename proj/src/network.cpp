#include "nus/network.hpp"

#include <algorithm>
#include <set>

namespace nus {

template <typename Scalar>
Planar<Scalar> shift_planes(const Planar<Scalar>& in, int height, int width, int dy, int dx) {
    Planar<Scalar> out = Planar<Scalar>::Zero(in.rows(), in.cols());
    const int x0 = std::max(0, -dx);
    const int x1 = std::min(width, width - dx);
    if (x1 <= x0) return out;
    for (Eigen::Index c = 0; c < in.rows(); ++c)
        for (int y = 0; y < height; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= height) continue;
            out.row(c).segment(Eigen::Index(y) * width + x0, x1 - x0) =
                in.row(c).segment(Eigen::Index(sy) * width + x0 + dx, x1 - x0);
        }
    return out;
}

template <typename Scalar>
void Network<Scalar>::add_conv3x3(int in_channels, int out_channels, std::span<const Scalar> weight,
                                  std::span<const Scalar> bias) {
    if (in_channels < 1 || out_channels < 1) throw ArgumentError("convolution channel counts must be positive");
    if (weight.size() != static_cast<std::size_t>(out_channels) * in_channels * 9 ||
        bias.size() != static_cast<std::size_t>(out_channels))
        throw ArgumentError("convolution parameter sizes do not match channel counts");
    Layer layer;
    layer.op = Op::conv3x3;
    layer.in_channels = in_channels;
    layer.out_channels = out_channels;
    for (int k = 0; k < 9; ++k) {
        layer.taps_weight[k].resize(out_channels, in_channels);
        for (int o = 0; o < out_channels; ++o)
            for (int i = 0; i < in_channels; ++i)
                layer.taps_weight[k](o, i) = weight[(static_cast<std::size_t>(o) * in_channels + i) * 9 + k];
    }
    layer.bias = Eigen::Map<const Vector>(bias.data(), out_channels);
    layers_.push_back(std::move(layer));
}

template <typename Scalar>
void Network<Scalar>::add_normalize(const Eigen::Vector3d& mean, const Eigen::Vector3d& stddev) {
    Layer layer;
    layer.op = Op::normalize;
    layer.in_channels = layer.out_channels = 3;
    layer.scale = stddev.cwiseInverse().template cast<Scalar>();
    layer.offset = (-mean.cwiseQuotient(stddev)).template cast<Scalar>();
    layers_.push_back(std::move(layer));
}

template <typename Scalar>
void Network<Scalar>::add(Op op) {
    if (op == Op::conv3x3 || op == Op::normalize) throw ArgumentError("use the dedicated add_* call for parametric layers");
    Layer layer;
    layer.op = op;
    layers_.push_back(std::move(layer));
}

template <typename Scalar>
void Network<Scalar>::tap(const std::string& name) {
    if (layers_.empty()) throw ArgumentError("cannot tap an empty network");
    if (has_tap(name)) throw ArgumentError("duplicate tap " + name);
    layers_.back().tap = name;
}

template <typename Scalar>
bool Network<Scalar>::has_tap(const std::string& name) const {
    return std::any_of(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.tap == name; });
}

template <typename Scalar>
std::vector<std::string> Network<Scalar>::taps() const {
    std::vector<std::string> out;
    for (const Layer& l : layers_)
        if (l.tap) out.push_back(*l.tap);
    return out;
}

template <typename Scalar>
FeatureMap<Scalar> Network<Scalar>::apply(const Layer& layer, const FeatureMap<Scalar>& in) const {
    FeatureMap<Scalar> out;
    out.height = in.height;
    out.width = in.width;
    switch (layer.op) {
        case Op::normalize:
            out.data = (in.data.array().colwise() * layer.scale.array()).colwise() + layer.offset.array();
            break;
        case Op::conv3x3: {
            if (in.channels() != layer.in_channels) throw ArgumentError("convolution input channel mismatch");
            out.data.resize(layer.out_channels, in.data.cols());
            out.data.colwise() = layer.bias;
            for (int k = 0; k < 9; ++k) {
                const int dy = k / 3 - 1;
                const int dx = k % 3 - 1;
                if (dy == 0 && dx == 0)
                    out.data.noalias() += layer.taps_weight[k] * in.data;
                else
                    out.data.noalias() += layer.taps_weight[k] * shift_planes(in.data, in.height, in.width, dy, dx);
            }
            break;
        }
        case Op::relu:
            out.data = in.data.cwiseMax(Scalar(0));
            break;
        case Op::tanh:
            out.data = in.data.array().tanh();
            break;
        case Op::max_pool2:
        case Op::avg_pool2: {
            out.height = in.height / 2;
            out.width = in.width / 2;
            if (out.height == 0 || out.width == 0) throw ArgumentError("input too small for pooling layer");
            out.data.resize(in.data.rows(), Eigen::Index(out.height) * out.width);
            for (Eigen::Index c = 0; c < in.data.rows(); ++c)
                for (int y = 0; y < out.height; ++y)
                    for (int x = 0; x < out.width; ++x) {
                        const Eigen::Index base = Eigen::Index(2 * y) * in.width + 2 * x;
                        const Scalar a = in.data(c, base), b = in.data(c, base + 1);
                        const Scalar d = in.data(c, base + in.width), e = in.data(c, base + in.width + 1);
                        out.data(c, Eigen::Index(y) * out.width + x) =
                            layer.op == Op::max_pool2 ? std::max({a, b, d, e}) : (a + b + d + e) / Scalar(4);
                    }
            break;
        }
    }
    return out;
}

template <typename Scalar>
Planar<Scalar> Network<Scalar>::apply_backward(const Layer& layer, const FeatureMap<Scalar>& saved,
                                               const FeatureMap<Scalar>& in_shape, const Planar<Scalar>& grad) const {
    switch (layer.op) {
        case Op::normalize:
            return grad.array().colwise() * layer.scale.array();
        case Op::conv3x3: {
            Planar<Scalar> out = Planar<Scalar>::Zero(layer.in_channels, grad.cols());
            for (int k = 0; k < 9; ++k) {
                const int dy = k / 3 - 1;
                const int dx = k % 3 - 1;
                Planar<Scalar> back = layer.taps_weight[k].transpose() * grad;
                if (dy == 0 && dx == 0)
                    out += back;
                else
                    out += shift_planes(back, in_shape.height, in_shape.width, -dy, -dx);
            }
            return out;
        }
        case Op::relu:
            return (saved.data.array() > Scalar(0)).select(grad, Scalar(0));
        case Op::tanh:
            return grad.array() * (Scalar(1) - saved.data.array().square());
        case Op::max_pool2:
        case Op::avg_pool2: {
            const int ow = in_shape.width / 2;
            const int oh = in_shape.height / 2;
            Planar<Scalar> out = Planar<Scalar>::Zero(grad.rows(), Eigen::Index(in_shape.height) * in_shape.width);
            for (Eigen::Index c = 0; c < grad.rows(); ++c)
                for (int y = 0; y < oh; ++y)
                    for (int x = 0; x < ow; ++x) {
                        const Scalar g = grad(c, Eigen::Index(y) * ow + x);
                        const Eigen::Index base = Eigen::Index(2 * y) * in_shape.width + 2 * x;
                        const Eigen::Index idx[4] = {base, base + 1, base + in_shape.width, base + in_shape.width + 1};
                        if (layer.op == Op::avg_pool2) {
                            for (Eigen::Index i : idx) out(c, i) += g / Scalar(4);
                        } else {
                            Eigen::Index best = idx[0];
                            for (int j = 1; j < 4; ++j)
                                if (saved.data(c, idx[j]) > saved.data(c, best)) best = idx[j];
                            out(c, best) += g;
                        }
                    }
            return out;
        }
    }
    return grad;
}

template <typename Scalar>
typename Network<Scalar>::Pass Network<Scalar>::forward(const FeatureMap<Scalar>& input, std::span<const std::string> layers,
                                                        bool record, bool run_all) const {
    std::set<std::string> wanted(layers.begin(), layers.end());
    int last = run_all ? static_cast<int>(layers_.size()) - 1 : -1;
    for (const std::string& name : wanted) {
        auto it = std::find_if(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.tap == name; });
        if (it == layers_.end()) throw ConfigurationError("unknown layer '" + name + "'");
        last = std::max(last, static_cast<int>(it - layers_.begin()));
    }

    Pass pass;
    pass.last_layer = last;
    pass.input_height = input.height;
    pass.input_width = input.width;
    if (record) pass.saved.resize(static_cast<std::size_t>(std::max(last + 1, 0)));
    FeatureMap<Scalar> cur = input;
    for (int i = 0; i <= last; ++i) {
        const Layer& layer = layers_[static_cast<std::size_t>(i)];
        FeatureMap<Scalar> out = apply(layer, cur);
        if (record) {
            FeatureMap<Scalar>& s = pass.saved[static_cast<std::size_t>(i)];
            s.height = cur.height;
            s.width = cur.width;
            if (layer.op == Op::relu || layer.op == Op::tanh)
                s.data = out.data;
            else if (layer.op == Op::max_pool2)
                s.data = cur.data;
        }
        if (layer.tap && wanted.count(*layer.tap)) {
            FeatureMap<Scalar>& f = pass.features[*layer.tap];
            f = out;
            f.layer = *layer.tap;
        }
        cur = std::move(out);
    }
    pass.output = std::move(cur);
    return pass;
}

template <typename Scalar>
Planar<Scalar> Network<Scalar>::backward(const Pass& pass, const FeatureSet<Scalar>& gradients) const {
    if (pass.saved.size() != static_cast<std::size_t>(std::max(pass.last_layer + 1, 0)))
        throw ArgumentError("backward requires a recorded forward pass");
    std::optional<Planar<Scalar>> grad;
    for (int i = pass.last_layer; i >= 0; --i) {
        const Layer& layer = layers_[static_cast<std::size_t>(i)];
        if (layer.tap) {
            auto it = gradients.find(*layer.tap);
            if (it != gradients.end()) {
                const auto feature = pass.features.find(*layer.tap);
                if (feature == pass.features.end() || !feature->second.same_shape(it->second))
                    throw ArgumentError("gradient for layer " + *layer.tap + " does not match the traced features");
                if (grad)
                    *grad += it->second.data;
                else
                    grad = it->second.data;
            }
        }
        if (grad) {
            const FeatureMap<Scalar>& saved = pass.saved[static_cast<std::size_t>(i)];
            grad = apply_backward(layer, saved, saved, *grad);
        }
    }
    if (!grad) return Planar<Scalar>::Zero(3, Eigen::Index(pass.input_height) * pass.input_width);
    return std::move(*grad);
}

template <typename Scalar>
void DenseHead<Scalar>::add_linear(int in_features, int out_features, std::span<const Scalar> weight,
                                   std::span<const Scalar> bias) {
    if (weight.size() != static_cast<std::size_t>(in_features) * out_features ||
        bias.size() != static_cast<std::size_t>(out_features))
        throw ArgumentError("dense layer parameter sizes do not match");
    if (!weights_.empty() && weights_.back().rows() != in_features)
        throw ArgumentError("dense layer input does not match previous output");
    weights_.emplace_back(Eigen::Map<const Planar<Scalar>>(weight.data(), out_features, in_features));
    biases_.emplace_back(Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), out_features));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> DenseHead<Scalar>::logits(const FeatureMap<Scalar>& trunk_output) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(trunk_output.data.data(), trunk_output.data.size());
    if (x.size() != in_features()) throw ArgumentError("flattened features do not match the dense head");
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        x = weights_[i] * x + biases_[i];
        if (i + 1 < weights_.size()) x = x.cwiseMax(Scalar(0));
    }
    return x;
}

template <typename Scalar>
int DenseHead<Scalar>::in_features() const {
    return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols());
}

template <typename Scalar>
int DenseHead<Scalar>::out_features() const {
    return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows());
}

template Planar<float> shift_planes<float>(const Planar<float>&, int, int, int, int);
template Planar<double> shift_planes<double>(const Planar<double>&, int, int, int, int);
template class Network<float>;
template class Network<double>;
template class DenseHead<float>;
template class DenseHead<double>;

}  // namespace nus
