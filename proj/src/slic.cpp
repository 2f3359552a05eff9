#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "nus/saliency.hpp"

namespace nus {

namespace {

constexpr int kSlicIterations = 10;

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

struct Center {
    double l, a, b, y, x;
};

/// Keeps the largest 4-connected component of every label and merges each
/// remaining component into the largest adjacent kept segment.
LabelMap enforce_connectivity(const LabelMap& labels) {
    const int h = static_cast<int>(labels.rows());
    const int w = static_cast<int>(labels.cols());
    LabelMap comp = LabelMap::Constant(h, w, -1);
    std::vector<int> comp_label;
    std::vector<long> comp_size;
    std::vector<std::pair<int, int>> stack;
    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0) {
            if (comp(y0, x0) >= 0) continue;
            const int id = static_cast<int>(comp_label.size());
            const int label = labels(y0, x0);
            long size = 0;
            comp(y0, x0) = id;
            stack.assign(1, {y0, x0});
            while (!stack.empty()) {
                const auto [y, x] = stack.back();
                stack.pop_back();
                ++size;
                const int ny[4] = {y - 1, y + 1, y, y};
                const int nx[4] = {x, x, x - 1, x + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                    if (comp(ny[k], nx[k]) >= 0 || labels(ny[k], nx[k]) != label) continue;
                    comp(ny[k], nx[k]) = id;
                    stack.emplace_back(ny[k], nx[k]);
                }
            }
            comp_label.push_back(label);
            comp_size.push_back(size);
        }

    const std::size_t n = comp_label.size();
    std::vector<std::set<int>> neighbours(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int c = comp(y, x);
            if (x + 1 < w && comp(y, x + 1) != c) {
                neighbours[static_cast<std::size_t>(c)].insert(comp(y, x + 1));
                neighbours[static_cast<std::size_t>(comp(y, x + 1))].insert(c);
            }
            if (y + 1 < h && comp(y + 1, x) != c) {
                neighbours[static_cast<std::size_t>(c)].insert(comp(y + 1, x));
                neighbours[static_cast<std::size_t>(comp(y + 1, x))].insert(c);
            }
        }

    // owner[c]: kept component that c belongs to, -1 while unresolved.
    std::vector<int> owner(n, -1);
    std::vector<int> best_of_label;
    {
        std::vector<std::pair<long, int>> best;  // per label: (size, comp)
        for (std::size_t c = 0; c < n; ++c) {
            const auto label = static_cast<std::size_t>(comp_label[c]);
            if (best.size() <= label) best.resize(label + 1, {-1, -1});
            if (comp_size[c] > best[label].first) best[label] = {comp_size[c], static_cast<int>(c)};
        }
        for (const auto& [size, c] : best)
            if (c >= 0) owner[static_cast<std::size_t>(c)] = c;
    }
    std::vector<long> segment_size(comp_size);
    bool pending = true;
    while (pending) {
        pending = false;
        for (std::size_t c = 0; c < n; ++c) {
            if (owner[c] >= 0) continue;
            int target = -1;
            for (int nb : neighbours[c]) {
                const int o = owner[static_cast<std::size_t>(nb)];
                if (o < 0) continue;
                if (target < 0 || segment_size[static_cast<std::size_t>(o)] > segment_size[static_cast<std::size_t>(target)])
                    target = o;
            }
            if (target < 0) {
                pending = true;
                continue;
            }
            owner[c] = target;
            segment_size[static_cast<std::size_t>(target)] += comp_size[c];
        }
    }

    LabelMap out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out(y, x) = comp_label[static_cast<std::size_t>(owner[static_cast<std::size_t>(comp(y, x))])];
    return out;
}

}  // namespace

template <typename Scalar>
Planar<double> rgb_to_lab(const Image<Scalar>& image) {
    Planar<double> lab(3, image.pixels());
    for (Eigen::Index p = 0; p < image.pixels(); ++p) {
        const double r = srgb_to_linear(static_cast<double>(image.data()(0, p)));
        const double g = srgb_to_linear(static_cast<double>(image.data()(1, p)));
        const double b = srgb_to_linear(static_cast<double>(image.data()(2, p)));
        const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
        const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
        lab(0, p) = 116.0 * fy - 16.0;
        lab(1, p) = 500.0 * (fx - fy);
        lab(2, p) = 200.0 * (fy - fz);
    }
    return lab;
}

template <typename Scalar>
RegionPartition slic_superpixels(const Image<Scalar>& image, int segment_count, double compactness) {
    if (segment_count < 2) throw ArgumentError("superpixel segment count must be at least 2");
    if (!(compactness > 0)) throw ArgumentError("superpixel compactness must be positive");
    const int h = image.height();
    const int w = image.width();
    if (static_cast<Eigen::Index>(segment_count) > image.pixels())
        throw DegeneratePartitionError("segment count " + std::to_string(segment_count) + " exceeds the pixel count");

    const Planar<double> lab = rgb_to_lab(image);
    const auto at = [&](int c, int y, int x) { return lab(c, Eigen::Index(y) * w + x); };
    const double step = std::sqrt(static_cast<double>(h) * w / segment_count);
    const double spatial_weight = compactness / step;

    // Seed grid with nx * ny close to segment_count and cells close to square.
    const int nx = std::clamp(static_cast<int>(std::lround(std::sqrt(static_cast<double>(segment_count) * w / h))), 1, w);
    const int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(segment_count) / nx)), 1, h);

    const auto gradient = [&](int y, int x) {
        const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        double g = 0;
        for (int c = 0; c < 3; ++c) {
            const double dx = at(c, y, xr) - at(c, y, xl);
            const double dy = at(c, yd, x) - at(c, yu, x);
            g += dx * dx + dy * dy;
        }
        return g;
    };

    std::vector<Center> centers;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            int cy = std::min(h - 1, static_cast<int>((j + 0.5) * h / ny));
            int cx = std::min(w - 1, static_cast<int>((i + 0.5) * w / nx));
            double best = gradient(cy, cx);
            const int oy = cy, ox = cx;
            for (int y = std::max(oy - 1, 0); y <= std::min(oy + 1, h - 1); ++y)
                for (int x = std::max(ox - 1, 0); x <= std::min(ox + 1, w - 1); ++x) {
                    const double g = gradient(y, x);
                    if (g < best) {
                        best = g;
                        cy = y;
                        cx = x;
                    }
                }
            centers.push_back({at(0, cy, cx), at(1, cy, cx), at(2, cy, cx), static_cast<double>(cy), static_cast<double>(cx)});
        }

    const auto distance = [&](const Center& c, int y, int x) {
        const double dl = at(0, y, x) - c.l, da = at(1, y, x) - c.a, db = at(2, y, x) - c.b;
        const double dy = y - c.y, dx = x - c.x;
        return std::sqrt(dl * dl + da * da + db * db) + spatial_weight * std::sqrt(dy * dy + dx * dx);
    };

    LabelMap labels = LabelMap::Constant(h, w, -1);
    AlphaMap<double> best(h, w);
    const int reach = static_cast<int>(std::ceil(step));
    for (int iter = 0; iter < kSlicIterations; ++iter) {
        best.setConstant(std::numeric_limits<double>::infinity());
        labels.setConstant(-1);
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const Center& c = centers[k];
            const int y0 = std::max(0, static_cast<int>(std::floor(c.y)) - reach);
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y)) + reach);
            const int x0 = std::max(0, static_cast<int>(std::floor(c.x)) - reach);
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x)) + reach);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double d = distance(c, y, x);
                    if (d < best(y, x)) {
                        best(y, x) = d;
                        labels(y, x) = static_cast<int>(k);
                    }
                }
        }
        // Pixels outside every search window fall back to the globally nearest center.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (labels(y, x) >= 0) continue;
                for (std::size_t k = 0; k < centers.size(); ++k) {
                    const double d = distance(centers[k], y, x);
                    if (d < best(y, x)) {
                        best(y, x) = d;
                        labels(y, x) = static_cast<int>(k);
                    }
                }
            }

        std::vector<Center> sum(centers.size(), Center{0, 0, 0, 0, 0});
        std::vector<long> count(centers.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto k = static_cast<std::size_t>(labels(y, x));
                sum[k].l += at(0, y, x);
                sum[k].a += at(1, y, x);
                sum[k].b += at(2, y, x);
                sum[k].y += y;
                sum[k].x += x;
                ++count[k];
            }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (count[k] == 0) continue;
            const double n = static_cast<double>(count[k]);
            centers[k] = {sum[k].l / n, sum[k].a / n, sum[k].b / n, sum[k].y / n, sum[k].x / n};
        }
    }

    return RegionPartition::from_sparse_labels(enforce_connectivity(labels));
}

template Planar<double> rgb_to_lab<float>(const Image<float>&);
template Planar<double> rgb_to_lab<double>(const Image<double>&);
template RegionPartition slic_superpixels<float>(const Image<float>&, int, double);
template RegionPartition slic_superpixels<double>(const Image<double>&, int, double);

}  // namespace nus
