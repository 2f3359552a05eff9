#pragma once

// Fixtures and independent reference computations shared by the test suites.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "nus/backend.hpp"
#include "nus/imagecore.hpp"
#include "nus/weights.hpp"

namespace nus::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("nus-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ignored;
        std::filesystem::remove_all(path_, ignored);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

template <typename Scalar>
Image<Scalar> random_image(int height, int width, unsigned seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Planar<Scalar> data(3, Eigen::Index(height) * width);
    for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = static_cast<Scalar>(u(rng));
    return Image<Scalar>(height, width, std::move(data));
}

// Planted-object fixture: 64x64 gray background with a white square inside the
// top-right quadrant.
inline constexpr int kPlantedSize = 64;
inline constexpr double kPlantedBackground = 0.2;
inline constexpr int kPlantedTop = 6, kPlantedLeft = 38, kPlantedSide = 20;

template <typename Scalar>
Image<Scalar> planted_image() {
    Planar<Scalar> data = Planar<Scalar>::Constant(3, kPlantedSize * kPlantedSize, static_cast<Scalar>(kPlantedBackground));
    for (int y = kPlantedTop; y < kPlantedTop + kPlantedSide; ++y)
        for (int x = kPlantedLeft; x < kPlantedLeft + kPlantedSide; ++x) data.col(y * kPlantedSize + x).setOnes();
    return Image<Scalar>(kPlantedSize, kPlantedSize, std::move(data));
}

/// Mean gray level of each 32x32 quadrant of the planted fixture, from its geometry.
inline std::vector<double> planted_quadrant_means() {
    const double quadrant = 32.0 * 32.0;
    const double square = kPlantedSide * kPlantedSide;
    std::vector<double> means(4, kPlantedBackground);
    means[1] = (square * 1.0 + (quadrant - square) * kPlantedBackground) / quadrant;
    return means;
}

inline std::vector<double> softmax_by_hand(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    std::vector<double> e;
    double sum = 0;
    for (double l : logits) {
        e.push_back(std::exp(l - mx));
        sum += e.back();
    }
    for (double& v : e) v /= sum;
    return e;
}

/// Occlusion scores of the four quadrants of the planted fixture under the toy
/// classifier when each quadrant is filled with black.
inline std::vector<double> planted_quadrant_scores_by_hand() {
    const std::vector<double> means = planted_quadrant_means();
    std::vector<double> logits;
    for (double m : means) logits.push_back(10.0 * m);
    const std::vector<double> reference = softmax_by_hand(logits);
    std::vector<double> scores;
    for (int q = 0; q < 4; ++q) {
        std::vector<double> occluded_logits = logits;
        occluded_logits[static_cast<std::size_t>(q)] = 0.0;
        const std::vector<double> p = softmax_by_hand(occluded_logits);
        double sq = 0;
        for (int k = 0; k < 4; ++k) sq += (p[static_cast<std::size_t>(k)] - reference[static_cast<std::size_t>(k)]) *
                                          (p[static_cast<std::size_t>(k)] - reference[static_cast<std::size_t>(k)]);
        scores.push_back(std::sqrt(sq));
    }
    return scores;
}

/// Content fixture: smooth color ramps with a few solid shapes.
template <typename Scalar>
Image<Scalar> content_fixture(int size) {
    Planar<Scalar> data(3, Eigen::Index(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = static_cast<double>(x) / (size - 1), v = static_cast<double>(y) / (size - 1);
            double r = 0.25 + 0.5 * u, g = 0.3 + 0.4 * v, b = 0.6 - 0.3 * u * v;
            const double dx = x - 0.5 * size, dy = y - 0.5 * size;
            if (dx * dx + dy * dy < 0.06 * size * size) {
                r = 0.9;
                g = 0.8;
                b = 0.2;
            }
            if (x > size * 0.1 && x < size * 0.3 && y > size * 0.65 && y < size * 0.9) {
                r = 0.1;
                g = 0.2;
                b = 0.7;
            }
            const Eigen::Index p = Eigen::Index(y) * size + x;
            data(0, p) = static_cast<Scalar>(r);
            data(1, p) = static_cast<Scalar>(g);
            data(2, p) = static_cast<Scalar>(b);
        }
    return Image<Scalar>(size, size, std::move(data));
}

/// Style fixture: high-contrast diagonal stripes with a checker modulation.
template <typename Scalar>
Image<Scalar> style_fixture(int size) {
    Planar<Scalar> data(3, Eigen::Index(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double s = 0.5 + 0.5 * std::sin(0.7 * (x + y));
            const double c = ((x / 4 + y / 4) % 2) ? 1.0 : 0.0;
            const Eigen::Index p = Eigen::Index(y) * size + x;
            data(0, p) = static_cast<Scalar>(0.9 * s);
            data(1, p) = static_cast<Scalar>(0.2 + 0.6 * c * (1 - s));
            data(2, p) = static_cast<Scalar>(1.0 - 0.8 * s);
        }
    return Image<Scalar>(size, size, std::move(data));
}

/// Small network with the VGG-19 topology (block widths given) and random weights.
inline WeightArchive tiny_vgg_archive(std::vector<int> widths = {4, 4, 6, 6, 8}, std::uint32_t input_size = 32,
                                      std::uint32_t classes = 10, unsigned seed = 5) {
    const int per_block[5] = {2, 2, 4, 4, 4};
    std::mt19937 rng(seed);
    WeightArchive a;
    a.input_size = input_size;
    a.class_count = classes;
    const auto tensor = [&](std::string name, std::vector<std::uint32_t> shape, double scale) {
        WeightTensor t{std::move(name), std::move(shape), {}};
        std::normal_distribution<double> n(0.0, scale);
        t.values.resize(t.element_count());
        for (float& v : t.values) v = static_cast<float>(n(rng));
        a.tensors.push_back(std::move(t));
    };
    std::uint32_t in = 3;
    for (int b = 0; b < 5; ++b)
        for (int i = 0; i < per_block[b]; ++i) {
            const auto out = static_cast<std::uint32_t>(widths[static_cast<std::size_t>(b)]);
            const std::string name = "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
            tensor(name + ".weight", {out, in, 3, 3}, std::sqrt(2.0 / (9.0 * in)));
            tensor(name + ".bias", {out}, 0.05);
            in = out;
        }
    const std::uint32_t spatial = input_size / 32;
    std::uint32_t features = in * spatial * spatial;
    for (auto [name, out] : {std::pair<const char*, std::uint32_t>{"fc6", 16}, {"fc7", 16}, {"fc8", classes}}) {
        tensor(std::string(name) + ".weight", {out, features}, std::sqrt(2.0 / features));
        tensor(std::string(name) + ".bias", {out}, 0.05);
        features = out;
    }
    return a;
}

/// Direct 3x3 zero-padded convolution in [out][in][ky][kx] weight order.
inline std::vector<double> naive_conv3x3(const std::vector<double>& input, int channels, int height, int width,
                                         const ToyParameters& p) {
    std::vector<double> out(static_cast<std::size_t>(p.out_channels) * height * width);
    for (int o = 0; o < p.out_channels; ++o)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double acc = p.bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < channels; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                            acc += p.weight[((static_cast<std::size_t>(o) * channels + i) * 3 + ky) * 3 + kx] *
                                   input[(static_cast<std::size_t>(i) * height + sy) * width + sx];
                        }
                out[(static_cast<std::size_t>(o) * height + y) * width + x] = acc;
            }
    return out;
}

}  // namespace nus::testing
