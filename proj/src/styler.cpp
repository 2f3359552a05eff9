#include "nus/styler.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace nus {

InitMode parse_init_mode(const std::string& text) {
    if (text == "content") return InitMode::content;
    if (text == "random") return InitMode::random;
    throw ArgumentError("unknown init mode '" + text + "' (expected content or random)");
}

StyleConfig StyleConfig::for_backend(const BackendDescriptor& descriptor) {
    StyleConfig config;
    for (const std::string& l : descriptor.content_layers) config.content_layers.push_back({l, 1.0});
    for (const std::string& l : descriptor.style_layers) config.style_layers.push_back({l, 1.0});
    return config;
}

void StyleConfig::validate() const {
    if (content_layers.empty() && style_layers.empty()) throw ArgumentError("no content or style layers configured");
    for (const auto* list : {&content_layers, &style_layers})
        for (const LayerWeight& lw : *list)
            if (!(lw.weight > 0)) throw ArgumentError("layer weight for " + lw.layer + " must be positive");
    if (!(style_weight > 0)) throw ArgumentError("style weight must be positive");
    if (iterations < 0) throw ArgumentError("iterations must be non-negative");
    if (!(step_size > 0)) throw ArgumentError("step size must be positive");
}

namespace {

template <typename Scalar>
void require_same_shape(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
    if (!a.same_shape(b))
        throw ArgumentError("feature maps for layer " + a.layer + " differ in dimensions");
}

std::vector<std::string> layer_names(const StyleConfig& config) {
    std::vector<std::string> names;
    for (const auto* list : {&config.content_layers, &config.style_layers})
        for (const LayerWeight& lw : *list)
            if (std::find(names.begin(), names.end(), lw.layer) == names.end()) names.push_back(lw.layer);
    return names;
}

template <typename Scalar>
const FeatureMap<Scalar>& find_layer(const FeatureSet<Scalar>& set, const std::string& layer) {
    auto it = set.find(layer);
    if (it == set.end()) throw ArgumentError("missing features for layer " + layer);
    return it->second;
}

}  // namespace

template <typename Scalar>
Scalar content_loss(const FeatureMap<Scalar>& features, const FeatureMap<Scalar>& target, Scalar weight) {
    require_same_shape(features, target);
    return weight * (features.data - target.data).squaredNorm();
}

template <typename Scalar>
Scalar weighted_content_loss(const FeatureMap<Scalar>& features, const FeatureMap<Scalar>& target,
                             const AlphaMap<Scalar>& alpha) {
    require_same_shape(features, target);
    if (alpha.rows() != features.height || alpha.cols() != features.width)
        throw ArgumentError("alpha map does not match feature resolution of layer " + features.layer);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> per_position = (features.data - target.data).colwise().squaredNorm();
    return (per_position.array() * Eigen::Map<const Eigen::Array<Scalar, 1, Eigen::Dynamic>>(alpha.data(), alpha.size())).sum();
}

template <typename Scalar>
GramMatrix<Scalar> gram(const FeatureMap<Scalar>& features) {
    const auto n = static_cast<Scalar>(features.data.size());
    GramMatrix<Scalar> g{features.layer, Planar<Scalar>::Zero(features.channels(), features.channels())};
    if (features.data.size() == 0) return g;
    g.matrix.template selfadjointView<Eigen::Lower>().rankUpdate(features.data);
    g.matrix = g.matrix.template selfadjointView<Eigen::Lower>();
    g.matrix /= n;
    return g;
}

template <typename Scalar>
Scalar style_loss(const FeatureSet<Scalar>& features, const GramSet<Scalar>& targets, std::span<const LayerWeight> weights) {
    Scalar loss = 0;
    for (const LayerWeight& lw : weights) {
        const FeatureMap<Scalar>& f = find_layer(features, lw.layer);
        auto it = targets.find(lw.layer);
        if (it == targets.end()) throw ArgumentError("missing style target for layer " + lw.layer);
        if (it->second.matrix.rows() != f.channels()) throw ArgumentError("style target size mismatch for layer " + lw.layer);
        loss += static_cast<Scalar>(lw.weight) * (gram(f).matrix - it->second.matrix).squaredNorm();
    }
    return loss;
}

template <typename Scalar>
StyleTargets<Scalar> prepare_targets(const Image<Scalar>& content, const Image<Scalar>& style, const StyleConfig& config,
                                     const Backend<Scalar>& backend) {
    config.validate();
    StyleTargets<Scalar> targets;
    targets.height = content.height();
    targets.width = content.width();
    std::vector<std::string> content_names, style_names;
    for (const LayerWeight& lw : config.content_layers) content_names.push_back(lw.layer);
    for (const LayerWeight& lw : config.style_layers) style_names.push_back(lw.layer);
    targets.content = backend.extract_features(content, content_names);
    for (auto& [name, f] : backend.extract_features(style, style_names)) targets.style.emplace(name, gram(f));
    return targets;
}

template <typename Scalar>
LossBreakdown<Scalar> evaluate_loss(const Image<Scalar>& x, const StyleTargets<Scalar>& targets,
                                    const AlphaMap<Scalar>& alpha, const StyleConfig& config,
                                    const Backend<Scalar>& backend, Planar<Scalar>* gradient) {
    if (x.height() != targets.height || x.width() != targets.width)
        throw ArgumentError("candidate image does not match the content image dimensions");
    if (alpha.rows() != x.height() || alpha.cols() != x.width())
        throw ArgumentError("alpha map does not match the image dimensions");

    const FeatureTape<Scalar> tape = backend.trace(x, layer_names(config));
    FeatureSet<Scalar> grads;
    LossBreakdown<Scalar> loss;
    const auto grad_for = [&](const FeatureMap<Scalar>& f) -> Planar<Scalar>& {
        auto [it, inserted] = grads.try_emplace(f.layer);
        if (inserted) it->second = FeatureMap<Scalar>{f.layer, f.height, f.width, Planar<Scalar>::Zero(f.data.rows(), f.data.cols())};
        return it->second.data;
    };

    for (const LayerWeight& lw : config.content_layers) {
        const FeatureMap<Scalar>& f = find_layer(tape.features, lw.layer);
        const FeatureMap<Scalar>& p = find_layer(targets.content, lw.layer);
        const AlphaMap<Scalar> a = resample_alpha(alpha, f.height, f.width);
        const auto w = static_cast<Scalar>(lw.weight);
        loss.content += w * weighted_content_loss(f, p, a);
        if (gradient) {
            const Eigen::Map<const Eigen::Array<Scalar, 1, Eigen::Dynamic>> a_row(a.data(), a.size());
            grad_for(f).array() += (Scalar(2) * w) * ((f.data - p.data).array().rowwise() * a_row);
        }
    }

    const auto style_scale = static_cast<Scalar>(config.style_weight);
    for (const LayerWeight& lw : config.style_layers) {
        const FeatureMap<Scalar>& f = find_layer(tape.features, lw.layer);
        auto it = targets.style.find(lw.layer);
        if (it == targets.style.end()) throw ArgumentError("missing style target for layer " + lw.layer);
        const Planar<Scalar> diff = gram(f).matrix - it->second.matrix;
        const auto w = static_cast<Scalar>(lw.weight);
        loss.style += w * diff.squaredNorm();
        if (gradient) {
            const auto n = static_cast<Scalar>(f.data.size());
            grad_for(f).noalias() += (style_scale * w * Scalar(4) / n) * (diff * f.data);
        }
    }
    loss.total = loss.content + style_scale * loss.style;
    if (gradient) *gradient = tape.backward(grads);
    return loss;
}

template <typename Scalar>
Scalar content_distance(const Image<Scalar>& x, const StyleTargets<Scalar>& targets, const StyleConfig& config,
                        const Backend<Scalar>& backend) {
    std::vector<std::string> names;
    for (const LayerWeight& lw : config.content_layers) names.push_back(lw.layer);
    const FeatureSet<Scalar> features = backend.extract_features(x, names);
    Scalar total = 0;
    for (const std::string& name : names)
        total += content_loss(find_layer(features, name), find_layer(targets.content, name), Scalar(1));
    return total;
}

template <typename Scalar>
void AdamOptimizer<Scalar>::step(Planar<Scalar>& x, const Planar<Scalar>& gradient) {
    constexpr double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    if (t_ == 0) {
        m_ = Planar<Scalar>::Zero(x.rows(), x.cols());
        v_ = Planar<Scalar>::Zero(x.rows(), x.cols());
    }
    ++t_;
    m_ = Scalar(beta1) * m_ + Scalar(1 - beta1) * gradient;
    v_ = Scalar(beta2) * v_ + Scalar(1 - beta2) * gradient.cwiseAbs2();
    const auto m_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(beta1, t_)));
    const auto v_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(beta2, t_)));
    x.array() -= Scalar(step_size_) * (m_.array() * m_scale) / ((v_.array() * v_scale).sqrt() + Scalar(epsilon));
}

template <typename Scalar>
StylizeResult<Scalar> stylize(const Image<Scalar>& content, const Image<Scalar>& style, const AlphaMap<Scalar>& alpha,
                              const StyleConfig& config, const Backend<Scalar>& backend,
                              const IterationCallback& on_iteration) {
    config.validate();
    if (alpha.rows() != content.height() || alpha.cols() != content.width())
        throw ArgumentError("alpha map is " + std::to_string(alpha.cols()) + "x" + std::to_string(alpha.rows()) +
                            " but the content image is " + std::to_string(content.width()) + "x" +
                            std::to_string(content.height()));
    if (!alpha.allFinite() || (alpha < Scalar(0)).any()) throw ArgumentError("alpha map must be finite and non-negative");

    const StyleTargets<Scalar> targets = prepare_targets(content, style, config, backend);
    Planar<Scalar> x = content.data();
    if (config.init_mode == InitMode::random) {
        std::mt19937_64 rng(config.random_seed);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<Scalar>(uniform(rng));
    }

    AdamOptimizer<Scalar> adam(config.step_size);
    std::vector<TraceRow> trace;
    trace.reserve(static_cast<std::size_t>(config.iterations) + 1);
    Planar<Scalar> grad;
    for (int it = 0;; ++it) {
        const Image<Scalar> current(content.height(), content.width(), x);
        const bool last = it == config.iterations;
        const LossBreakdown<Scalar> l = evaluate_loss(current, targets, alpha, config, backend, last ? nullptr : &grad);
        if (!std::isfinite(static_cast<double>(l.total)) || (!last && !grad.allFinite()))
            throw DivergenceError(it, "loss became non-finite at iteration " + std::to_string(it));
        trace.push_back({it, static_cast<double>(l.content), static_cast<double>(l.style), static_cast<double>(l.total)});
        if (on_iteration) on_iteration(trace.back());
        if (last) break;
        adam.step(x, grad);
        x = x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    }
    return {Image<Scalar>(content.height(), content.width(), std::move(x)), std::move(trace)};
}

std::string trace_to_csv(std::span<const TraceRow> trace) {
    std::string out = "iteration,content_loss,style_loss,total_loss\n";
    char line[128];
    for (const TraceRow& r : trace) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g\n", r.iteration, r.content_loss, r.style_loss, r.total_loss);
        out += line;
    }
    return out;
}

void write_trace_csv(std::span<const TraceRow> trace, const std::filesystem::path& path) {
    const std::string csv = trace_to_csv(trace);
    write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(csv.data()), csv.size()));
}

#define NUS_INSTANTIATE(Scalar)                                                                                        \
    template Scalar content_loss<Scalar>(const FeatureMap<Scalar>&, const FeatureMap<Scalar>&, Scalar);               \
    template Scalar weighted_content_loss<Scalar>(const FeatureMap<Scalar>&, const FeatureMap<Scalar>&,               \
                                                  const AlphaMap<Scalar>&);                                            \
    template GramMatrix<Scalar> gram<Scalar>(const FeatureMap<Scalar>&);                                               \
    template Scalar style_loss<Scalar>(const FeatureSet<Scalar>&, const GramSet<Scalar>&, std::span<const LayerWeight>); \
    template StyleTargets<Scalar> prepare_targets<Scalar>(const Image<Scalar>&, const Image<Scalar>&, const StyleConfig&, \
                                                          const Backend<Scalar>&);                                     \
    template LossBreakdown<Scalar> evaluate_loss<Scalar>(const Image<Scalar>&, const StyleTargets<Scalar>&,            \
                                                         const AlphaMap<Scalar>&, const StyleConfig&,                  \
                                                         const Backend<Scalar>&, Planar<Scalar>*);                     \
    template Scalar content_distance<Scalar>(const Image<Scalar>&, const StyleTargets<Scalar>&, const StyleConfig&,    \
                                             const Backend<Scalar>&);                                                  \
    template class AdamOptimizer<Scalar>;                                                                              \
    template StylizeResult<Scalar> stylize<Scalar>(const Image<Scalar>&, const Image<Scalar>&, const AlphaMap<Scalar>&, \
                                                   const StyleConfig&, const Backend<Scalar>&,                \
                                                   const IterationCallback&);

NUS_INSTANTIATE(float)
NUS_INSTANTIATE(double)
#undef NUS_INSTANTIATE

}  // namespace nus
