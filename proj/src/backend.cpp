#include "nus/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>

namespace nus {

bool BackendDescriptor::publishes(const std::string& layer) const {
    return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

void BackendDescriptor::validate() const {
    if (content_layers.empty()) throw ConfigurationError(name + ": content layer list is empty");
    if (style_layers.empty()) throw ConfigurationError(name + ": style layer list is empty");
    for (const auto* list : {&content_layers, &style_layers})
        for (const std::string& l : *list)
            if (!publishes(l)) throw ConfigurationError(name + ": layer '" + l + "' is not published by the backend");
}

template <typename Scalar>
std::vector<ClassDistribution<Scalar>> Backend<Scalar>::classify_batch(std::span<const Image<Scalar>> images) const {
    if (images.empty()) throw ArgumentError("classify_batch needs at least one image");
    for (const Image<Scalar>& img : images)
        if (img.height() != images.front().height() || img.width() != images.front().width())
            throw ArgumentError("classify_batch images must share dimensions");
    std::vector<ClassDistribution<Scalar>> out(images.size());
    std::exception_ptr failure;
    const auto n = static_cast<long>(images.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = classify(images[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

template <typename Scalar>
void Backend<Scalar>::check_layers(std::span<const std::string> layers) const {
    for (const std::string& l : layers)
        if (!descriptor().publishes(l)) throw ConfigurationError("unknown layer '" + l + "' for backend " + descriptor().name);
}

std::filesystem::path resolve_weights_path(const std::string& explicit_path) {
    std::filesystem::path path = explicit_path;
    if (path.empty()) {
        const char* env = std::getenv(kWeightsEnvVar);
        if (env == nullptr || *env == '\0')
            throw ConfigurationError(std::string("VGG weights not configured: pass --weights or set ") + kWeightsEnvVar);
        path = env;
    }
    if (std::filesystem::is_directory(path)) path /= kDefaultWeightsFile;
    if (!std::filesystem::exists(path)) throw ConfigurationError("VGG weights not found at " + path.string());
    return path;
}

template class Backend<float>;
template class Backend<double>;

}  // namespace nus
