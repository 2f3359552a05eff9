#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "nus/errors.hpp"
#include "nus/saliency.hpp"
#include "support.hpp"

using namespace nus;

namespace {

RegionPartition labels(int h, int w, std::initializer_list<int> values) {
    LabelMap m(h, w);
    std::copy(values.begin(), values.end(), m.data());
    return RegionPartition(m);
}

}  // namespace

TEST_CASE("patch partitions") {
    SUBCASE("4x4 with size 2 gives four quadrants") {
        const RegionPartition p = patch_partition(4, 4, 2);
        CHECK(p.region_count() == 4);
        CHECK((p.labels() == labels(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3}).labels()).all());
    }
    SUBCASE("5x5 with size 2 truncates the edge cells") {
        const RegionPartition p = patch_partition(5, 5, 2);
        CHECK(p.region_count() == 9);
        const auto sizes = p.region_sizes();
        CHECK(std::count(sizes.begin(), sizes.end(), 4) == 4);
        CHECK(std::count(sizes.begin(), sizes.end(), 2) == 4);
        CHECK(std::count(sizes.begin(), sizes.end(), 1) == 1);
    }
    SUBCASE("shifted grid") {
        const RegionPartition p = patch_partition(4, 4, 2, {1, 1});
        CHECK(p.region_count() == 9);
        CHECK((p.labels() == labels(4, 4, {0, 1, 1, 2, 3, 4, 4, 5, 3, 4, 4, 5, 6, 7, 7, 8}).labels()).all());
    }
    SUBCASE("patch larger than the image in one dimension") {
        CHECK(patch_partition(3, 10, 5).region_count() == 2);
    }
    CHECK_THROWS_AS(patch_partition(4, 4, 5), DegeneratePartitionError);
    CHECK_THROWS_AS(patch_partition(4, 4, 0), ArgumentError);
    SUBCASE("property: every pixel covered, labels dense") {
        std::mt19937 rng(2);
        for (int trial = 0; trial < 30; ++trial) {
            const int h = 1 + static_cast<int>(rng() % 40), w = 1 + static_cast<int>(rng() % 40);
            const int s = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::max(h, w)));
            const GridShift shift{static_cast<int>(rng() % static_cast<unsigned>(s)), static_cast<int>(rng() % static_cast<unsigned>(s))};
            const RegionPartition p = patch_partition(h, w, s, shift);
            std::set<int> seen(p.labels().data(), p.labels().data() + p.labels().size());
            CHECK(static_cast<int>(seen.size()) == p.region_count());
            CHECK(*seen.begin() == 0);
        }
    }
}

TEST_CASE("mask config resolution") {
    MaskMethodConfig c;
    CHECK(c.resolved_patch_size(64, 100) == 8);
    CHECK(c.resolved_patch_size(5, 5) == 1);
    const auto shifts = c.resolved_shifts(8);
    REQUIRE(shifts.size() == 4);
    CHECK(shifts[3].dy == 4);
    CHECK(shifts[3].dx == 4);
    CHECK(c.resolved_shifts(1).size() == 1);
    c.alpha_min = 2;
    c.alpha_max = 1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    CHECK(parse_mask_method("patch-avg") == MaskMethod::patch_averaged);
    CHECK(parse_mask_method("superpixel") == MaskMethod::superpixel);
    CHECK_THROWS_AS(parse_mask_method("foo"), ArgumentError);
}

TEST_CASE("occlusion fills one region only") {
    const Imaged img = nus::testing::random_image<double>(4, 4, 1);
    const RegionPartition p = patch_partition(4, 4, 2);
    const Imaged o = occlude(img, p, 3, Rgb(0.1, 0.2, 0.3));
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) {
                if (y >= 2 && x >= 2)
                    CHECK(o(c, y, x) == doctest::Approx(0.1 * (c + 1)));
                else
                    CHECK(o(c, y, x) == img(c, y, x));
            }
    CHECK_THROWS_AS(occlude(img, p, 4, Rgb::Zero()), ArgumentError);
}

TEST_CASE("region scores on the planted fixture") {
    const auto backend = make_toy_backend<double>();
    const Imaged img = nus::testing::planted_image<double>();
    const RegionPartition p = patch_partition(64, 64, 32);
    const auto scores = score_regions(img, p, Rgb::Zero(), *backend);
    const auto expected = nus::testing::planted_quadrant_scores_by_hand();
    REQUIRE(scores.size() == 4);
    for (int q = 0; q < 4; ++q) {
        CHECK(scores[static_cast<std::size_t>(q)].region_label == q);
        CHECK(std::abs(scores[static_cast<std::size_t>(q)].importance - expected[static_cast<std::size_t>(q)]) < 1e-6);
        CHECK(scores[static_cast<std::size_t>(q)].importance >= 0.0);
        CHECK(scores[static_cast<std::size_t>(q)].importance <= std::sqrt(2.0));
    }
    CHECK(scores[1].importance > 2 * scores[0].importance);

    SUBCASE("the whole image as one region") {
        const RegionPartition whole(LabelMap::Zero(64, 64));
        const auto s = score_regions(img, whole, Rgb::Constant(0.5), *backend);
        REQUIRE(s.size() == 1);
        CHECK(s[0].importance > 0.0);
    }
    SUBCASE("scoring many regions uses several batches") {
        const RegionPartition fine = patch_partition(64, 64, 8);
        const auto s = score_regions(img, fine, Rgb::Zero(), *backend);
        REQUIRE(s.size() == 64);
        const auto direct = backend->classify(occlude(img, fine, 40, Rgb::Zero()));
        const auto reference = backend->classify(img);
        CHECK(s[40].importance == doctest::Approx((direct - reference).norm()).epsilon(1e-12));
    }
}

TEST_CASE("scores to masks") {
    const RegionPartition p = patch_partition(4, 4, 2);
    const std::vector<RegionScore<double>> s = {{0, 0.1}, {1, 0.4}, {2, 0.0}, {3, 0.2}};
    const AlphaMapd m = scores_to_mask<double>(p, s);
    CHECK(m(0, 0) == 0.1);
    CHECK(m(1, 3) == 0.4);
    CHECK(m(3, 0) == 0.0);
    CHECK(m(2, 2) == 0.2);
    const std::vector<RegionScore<double>> short_list = {{0, 0.1}};
    CHECK_THROWS_AS(scores_to_mask<double>(p, short_list), ArgumentError);
}

TEST_CASE("average_masks") {
    AlphaMapd a(1, 2), b(1, 2), c(1, 2);
    a << 0, 3;
    b << 1, 1;
    c << 2, 2;
    std::vector<AlphaMapd> masks = {a, b, c};
    const AlphaMapd mean = average_masks<double>(masks);
    CHECK(mean(0, 0) == doctest::Approx(1.0));
    CHECK(mean(0, 1) == doctest::Approx(2.0));
    std::vector<AlphaMapd> permuted = {c, a, b};
    CHECK((average_masks<double>(permuted) - mean).abs().maxCoeff() < 1e-15);
    std::vector<AlphaMapd> single = {a};
    CHECK((average_masks<double>(single) == a).all());
    CHECK_THROWS_AS(average_masks<double>(std::vector<AlphaMapd>{}), ArgumentError);
    std::vector<AlphaMapd> mismatched = {a, AlphaMapd::Zero(2, 1)};
    CHECK_THROWS_AS(average_masks<double>(mismatched), ArgumentError);
}

TEST_CASE("normalize_mask") {
    AlphaMapd raw(1, 3);
    raw << 0, 1, 3;
    const AlphaMapd n = normalize_mask(raw, 0.0, 10.0);
    CHECK(n(0, 0) == 0.0);
    CHECK(n(0, 1) == doctest::Approx(10.0 / 3.0));
    CHECK(n(0, 2) == doctest::Approx(10.0));
    CHECK((normalize_mask(AlphaMapd(AlphaMapd::Constant(2, 2, 0.7)), 1.0, 3.0) == 2.0).all());
    SUBCASE("property: bounds hit exactly, order preserved") {
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> u(-5, 5);
        for (int trial = 0; trial < 20; ++trial) {
            AlphaMapd r(3, 5);
            for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = u(rng);
            const AlphaMapd m = normalize_mask(r, 0.5, 4.0);
            CHECK(m.minCoeff() == doctest::Approx(0.5));
            CHECK(m.maxCoeff() == doctest::Approx(4.0));
            for (Eigen::Index i = 1; i < r.size(); ++i)
                CHECK((r.data()[i] < r.data()[0]) == (m.data()[i] < m.data()[0]));
        }
    }
}

TEST_CASE("segmentation_refine") {
    AlphaMapd raw(2, 2);
    raw << 1, 3, 5, 7;
    const RegionPartition seg = labels(2, 2, {0, 0, 1, 1});
    const AlphaMapd r = segmentation_refine(raw, seg);
    CHECK(r(0, 0) == 2.0);
    CHECK(r(0, 1) == 2.0);
    CHECK(r(1, 0) == 6.0);
    SUBCASE("property: piecewise constant and mean preserving") {
        const Imaged img = nus::testing::random_image<double>(20, 24, 5);
        const RegionPartition s = slic_superpixels(img, 12, 10.0);
        AlphaMapd m = AlphaMapd::Random(20, 24);
        const AlphaMapd out = segmentation_refine(m, s);
        CHECK(out.mean() == doctest::Approx(m.mean()).epsilon(1e-12));
        std::vector<double> first(static_cast<std::size_t>(s.region_count()), std::nan(""));
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 24; ++x) {
                double& v = first[static_cast<std::size_t>(s(y, x))];
                if (std::isnan(v)) v = out(y, x);
                CHECK(out(y, x) == v);
            }
    }
    CHECK_THROWS_AS(segmentation_refine(raw, labels(1, 2, {0, 1})), ArgumentError);
}

TEST_CASE("generate_mask") {
    const auto backend = make_toy_backend<double>();
    const Imaged img = nus::testing::planted_image<double>();

    SUBCASE("patch method puts the maximum on the planted quadrant") {
        MaskMethodConfig c;
        c.method = MaskMethod::patch;
        c.patch_size = 32;
        c.fill_color = Rgb::Zero();
        const MaskResult<double> r = generate_mask_detailed(img, c, *backend);
        CHECK(r.mask.rows() == 64);
        CHECK(r.mask(10, 50) == doctest::Approx(1.0));
        CHECK(r.mask.minCoeff() == doctest::Approx(0.0));
        REQUIRE(r.passes.size() == 1);
        CHECK(r.passes[0].region_count == 4);
        CHECK(r.passes[0].max_region == 1);
    }
    SUBCASE("every method yields values within bounds") {
        for (MaskMethod method : {MaskMethod::patch, MaskMethod::patch_averaged, MaskMethod::superpixel}) {
            MaskMethodConfig c;
            c.method = method;
            c.alpha_min = 0.2;
            c.alpha_max = 5.0;
            c.superpixel_params = {{16, 10.0}, {30, 20.0}};
            const AlphaMapd m = generate_mask(img, c, *backend);
            CHECK(m.minCoeff() >= 0.2 - 1e-12);
            CHECK(m.maxCoeff() <= 5.0 + 1e-12);
            CHECK(m(10, 48) > m(50, 10));
        }
    }
    SUBCASE("averaged passes") {
        MaskMethodConfig c;
        c.patch_size = 16;
        const MaskResult<double> r = generate_mask_detailed(img, c, *backend);
        CHECK(r.passes.size() == 4);
    }
    SUBCASE("segmentation method") {
        MaskMethodConfig c;
        c.method = MaskMethod::segmentation;
        CHECK_THROWS_AS(generate_mask(img, c, *backend), ArgumentError);
        LabelMap seg = LabelMap::Zero(64, 64);
        seg.block(nus::testing::kPlantedTop, 38, 20, 20).setOnes();
        const AlphaMapd m = generate_mask(img, c, *backend, RegionPartition(seg));
        CHECK(m(10, 45) == doctest::Approx(1.0));
        CHECK(m(60, 5) == doctest::Approx(0.0));
        c.method = MaskMethod::patch;
        CHECK_THROWS_AS(generate_mask(img, c, *backend, RegionPartition(seg)), ArgumentError);
    }
    SUBCASE("degenerate patch size") {
        MaskMethodConfig c;
        c.method = MaskMethod::patch;
        c.patch_size = 65;
        CHECK_THROWS_AS(generate_mask(img, c, *backend), DegeneratePartitionError);
    }
}
