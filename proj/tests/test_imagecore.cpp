#include <doctest.h>

#include <png.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <random>

#include "nus/imagecore.hpp"
#include "support.hpp"

using namespace nus;
using nus::testing::TempDir;

namespace {

void write_raw_png(const std::filesystem::path& path, const cv::Mat& mat) {
    REQUIRE(cv::imwrite(path.string(), mat));
}

}  // namespace

TEST_CASE("image invariants are enforced on construction") {
    CHECK_THROWS_AS(Imagef(0, 3), ArgumentError);
    Planar<float> bad = Planar<float>::Constant(3, 4, 0.5f);
    bad(1, 2) = 1.5f;
    CHECK_THROWS_AS(Imagef(2, 2, bad), ArgumentError);
    bad(1, 2) = std::nanf("");
    CHECK_THROWS_AS(Imagef(2, 2, bad), ArgumentError);
    CHECK_THROWS_AS(Imagef(2, 3, Planar<float>::Zero(3, 4)), ArgumentError);
}

TEST_CASE("load_image scales, orders channels and promotes gray") {
    TempDir dir("load");
    SUBCASE("single red pixel") {
        cv::Mat bgr(1, 1, CV_8UC3, cv::Scalar(0, 0, 255));
        write_raw_png(dir / "red.png", bgr);
        const Imagef img = load_image<float>(dir / "red.png");
        CHECK(img.height() == 1);
        CHECK(img(0, 0, 0) == 1.0f);
        CHECK(img(1, 0, 0) == 0.0f);
        CHECK(img(2, 0, 0) == 0.0f);
    }
    SUBCASE("all black") {
        write_raw_png(dir / "black.png", cv::Mat(2, 2, CV_8UC3, cv::Scalar(0, 0, 0)));
        CHECK(load_image<double>(dir / "black.png").data().isZero());
    }
    SUBCASE("alpha channel is dropped") {
        write_raw_png(dir / "rgba.png", cv::Mat(3, 2, CV_8UC4, cv::Scalar(10, 20, 30, 7)));
        const Imaged img = load_image<double>(dir / "rgba.png");
        CHECK(img(0, 2, 1) == doctest::Approx(30 / 255.0));
        CHECK(img(2, 2, 1) == doctest::Approx(10 / 255.0));
    }
    SUBCASE("jpeg is accepted") {
        write_raw_png(dir / "flat.jpg", cv::Mat(8, 8, CV_8UC3, cv::Scalar(128, 128, 128)));
        const Imagef img = load_image<float>(dir / "flat.jpg");
        CHECK(img.width() == 8);
        CHECK(std::abs(img(1, 4, 4) - 128 / 255.0f) < 3 / 255.0f);
    }
}

TEST_CASE("grayscale PNG matches an independent libpng decode") {
    TempDir dir("gray");
    cv::Mat gray(5, 7, CV_8UC1);
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x) gray.at<unsigned char>(y, x) = static_cast<unsigned char>(128 + 9 * y - 5 * x);
    gray.at<unsigned char>(0, 0) = 128;
    write_raw_png(dir / "gray.png", gray);

    png_image reference{};
    reference.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_file(&reference, (dir / "gray.png").c_str()) != 0);
    reference.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(reference));
    REQUIRE(png_image_finish_read(&reference, nullptr, pixels.data(), 0, nullptr) != 0);

    const Imaged img = load_image<double>(dir / "gray.png");
    REQUIRE(img.height() == static_cast<int>(reference.height));
    REQUIRE(img.width() == static_cast<int>(reference.width));
    CHECK(img(0, 0, 0) == doctest::Approx(128 / 255.0));
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) CHECK(img(c, y, x) == pixels[static_cast<std::size_t>(y * img.width() + x)] / 255.0);
}

TEST_CASE("load_image error paths") {
    TempDir dir("loaderr");
    CHECK_THROWS_AS(load_image<float>(dir / "missing.png"), IoError);
    {
        std::ofstream f(dir / "text.png");
        f << "not an image";
    }
    CHECK_THROWS_AS(load_image<float>(dir / "text.png"), FormatError);
    write_raw_png(dir / "image.bmp", cv::Mat(2, 2, CV_8UC3, cv::Scalar(1, 2, 3)));
    CHECK_THROWS_AS(load_image<float>(dir / "image.bmp"), FormatError);
}

TEST_CASE("save_image rounding and round trip") {
    TempDir dir("save");
    SUBCASE("byte values") {
        Planar<double> data(3, 3);
        data << 0.0, 0.5, 1.0, 0.5, 1.0, 0.0, 1.0, 0.0, 0.5;
        save_image(Imaged(1, 3, data), dir / "v.png");
        const cv::Mat m = cv::imread((dir / "v.png").string(), cv::IMREAD_COLOR);
        CHECK(m.at<cv::Vec3b>(0, 0) == cv::Vec3b(255, 128, 0));
        CHECK(m.at<cv::Vec3b>(0, 1) == cv::Vec3b(0, 255, 128));
        CHECK(m.at<cv::Vec3b>(0, 2) == cv::Vec3b(128, 0, 255));
    }
    SUBCASE("zero tensor gives black") {
        save_image(Imagef(4, 4), dir / "z.png");
        CHECK(cv::countNonZero(cv::imread((dir / "z.png").string(), cv::IMREAD_GRAYSCALE)) == 0);
    }
    SUBCASE("property: round trip deviates by at most 1/255") {
        for (unsigned seed = 0; seed < 5; ++seed) {
            const Imaged img = nus::testing::random_image<double>(9 + seed, 13 - seed, seed);
            save_image(img, dir / "r.png");
            const Imaged back = load_image<double>(dir / "r.png");
            CHECK((back.data() - img.data()).cwiseAbs().maxCoeff() <= 1.0 / 255.0 + 1e-12);
        }
    }
    CHECK_THROWS_AS(save_image(Imagef(2, 2), dir / "no" / "such" / "dir.png"), IoError);
}

TEST_CASE("resample_alpha") {
    SUBCASE("identity at own size") {
        AlphaMapd m = AlphaMapd::Random(5, 7);
        CHECK((resample_alpha(m, 5, 7) == m).all());
    }
    SUBCASE("constants stay constant") {
        const AlphaMapd m = AlphaMapd::Constant(4, 6, 0.3);
        const AlphaMapd r = resample_alpha(m, 9, 2);
        CHECK((r - 0.3).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("bilinear midpoint") {
        AlphaMapd m(2, 2);
        m << 0, 0, 1, 1;
        const AlphaMapd r = resample_alpha(m, 3, 3);
        for (int x = 0; x < 3; ++x) {
            CHECK(r(0, x) == 0.0);
            CHECK(r(1, x) == doctest::Approx(0.5));
            CHECK(r(2, x) == 1.0);
        }
    }
    SUBCASE("property: output within input bounds") {
        std::mt19937 rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            const int h = 1 + static_cast<int>(rng() % 9), w = 1 + static_cast<int>(rng() % 9);
            const AlphaMapf m = AlphaMapf::Random(h, w) * 5.0f;
            const AlphaMapf r = resample_alpha(m, 1 + static_cast<int>(rng() % 17), 1 + static_cast<int>(rng() % 17));
            CHECK(r.minCoeff() >= m.minCoeff());
            CHECK(r.maxCoeff() <= m.maxCoeff());
        }
    }
    CHECK_THROWS_AS(resample_alpha(AlphaMapd(AlphaMapd::Zero(2, 2)), 0, 3), ArgumentError);
}

TEST_CASE("area resampling averages blocks") {
    const Planar<double> r = area_resample_matrix<double>(8, 2);
    CHECK(r(0, 0) == doctest::Approx(0.25));
    CHECK(r(0, 4) == 0.0);
    CHECK(r.rowwise().sum().isOnes(1e-12));
    const Planar<double> odd = area_resample_matrix<double>(5, 2);
    CHECK(odd(0, 2) == doctest::Approx(0.2));
    CHECK(odd.rowwise().sum().isOnes(1e-12));
}

TEST_CASE("resize_image keeps values in range and preserves constants") {
    const Imaged img = Imaged::constant(40, 30, Rgb(0.1, 0.5, 0.9));
    const Imaged down = resize_image(img, 7, 11);
    const Imaged up = resize_image(img, 80, 77);
    CHECK((down.data().row(1).array() - 0.5).abs().maxCoeff() < 1e-12);
    CHECK((up.data().row(2).array() - 0.9).abs().maxCoeff() < 1e-12);
}

TEST_CASE("alphamap file format") {
    TempDir dir("alphamap");
    SUBCASE("1x1 layout is bit exact") {
        const std::vector<unsigned char> bytes = encode_alphamap(AlphaMapf::Zero(1, 1));
        const std::vector<unsigned char> expected = {'A', 'L', 'P', 'H', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
        CHECK(bytes == expected);
    }
    SUBCASE("width precedes height and payload is row-major little-endian") {
        AlphaMapf m(2, 3);
        m << 1.0f, 2.0f, 3.0f, 4.0f, 5.0f, -0.5f;
        const auto bytes = encode_alphamap(m);
        REQUIRE(bytes.size() == 16 + 4 * 6);
        CHECK(bytes[8] == 3);
        CHECK(bytes[12] == 2);
        // 1.0f == 0x3F800000
        CHECK(bytes[16] == 0x00);
        CHECK(bytes[19] == 0x3F);
        // -0.5f == 0xBF000000, last value
        CHECK(bytes[39] == 0xBF);
    }
    SUBCASE("property: file round trip is bit exact") {
        std::mt19937 rng(11);
        std::uniform_real_distribution<float> u(-1e6f, 1e6f);
        for (int trial = 0; trial < 10; ++trial) {
            AlphaMapf m(1 + trial, 2 + 3 * trial);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng) * std::pow(10.0f, -static_cast<float>(i % 30));
            write_alphamap(m, dir / "m.alphamap");
            const AlphaMapf back = read_alphamap(dir / "m.alphamap");
            REQUIRE(back.rows() == m.rows());
            REQUIRE(back.cols() == m.cols());
            CHECK(std::memcmp(back.data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0);
            CHECK(std::filesystem::file_size(dir / "m.alphamap") == 16 + 4 * static_cast<std::uintmax_t>(m.size()));
        }
    }
    SUBCASE("malformed files") {
        auto bytes = encode_alphamap(AlphaMapf::Ones(2, 2));
        auto wrong_magic = bytes;
        wrong_magic[0] = 'X';
        CHECK_THROWS_AS(decode_alphamap(wrong_magic), FormatError);
        auto truncated = bytes;
        truncated.pop_back();
        CHECK_THROWS_AS(decode_alphamap(truncated), FormatError);
        auto version = bytes;
        version[4] = 2;
        CHECK_THROWS_AS(decode_alphamap(version), FormatError);
        CHECK_THROWS_AS(read_alphamap(dir / "absent.alphamap"), IoError);
    }
}

TEST_CASE("atomic writes leave no temporary files") {
    TempDir dir("atomic");
    write_alphamap(AlphaMapf::Ones(3, 3), dir / "a.alphamap");
    save_image(Imagef(2, 2), dir / "b.png");
    int entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 2);
}

TEST_CASE("label maps") {
    TempDir dir("labels");
    SUBCASE("8-bit gray levels become dense regions") {
        cv::Mat m(2, 3, CV_8UC1);
        m.at<unsigned char>(0, 0) = 200;
        m.at<unsigned char>(0, 1) = 200;
        m.at<unsigned char>(0, 2) = 7;
        m.at<unsigned char>(1, 0) = 7;
        m.at<unsigned char>(1, 1) = 90;
        m.at<unsigned char>(1, 2) = 90;
        write_raw_png(dir / "seg.png", m);
        const RegionPartition p = load_label_map(dir / "seg.png");
        CHECK(p.region_count() == 3);
        CHECK(p(0, 0) == 2);
        CHECK(p(0, 2) == 0);
        CHECK(p(1, 1) == 1);
    }
    SUBCASE("16-bit levels") {
        cv::Mat m(2, 2, CV_16UC1, cv::Scalar(1000));
        m.at<unsigned short>(1, 1) = 60000;
        write_raw_png(dir / "seg16.png", m);
        const RegionPartition p = load_label_map(dir / "seg16.png");
        CHECK(p.region_count() == 2);
        CHECK(p(1, 1) == 1);
    }
    SUBCASE("color images are rejected") {
        write_raw_png(dir / "color.png", cv::Mat(2, 2, CV_8UC3, cv::Scalar(1, 2, 3)));
        CHECK_THROWS_AS(load_label_map(dir / "color.png"), FormatError);
    }
}

TEST_CASE("region partition validation") {
    LabelMap gap(1, 3);
    gap << 0, 2, 2;
    CHECK_THROWS_AS(RegionPartition{gap}, ArgumentError);
    const RegionPartition dense = RegionPartition::from_sparse_labels(gap);
    CHECK(dense.region_count() == 2);
    CHECK(dense.region_sizes() == std::vector<Eigen::Index>{1, 2});
    const RegionPartition big = resize_partition(dense, 2, 6);
    CHECK(big.region_count() == 2);
    CHECK(big(1, 5) == 1);
}

TEST_CASE("total variation") {
    AlphaMapd m(2, 2);
    m << 0, 1, 0, 1;
    CHECK(total_variation(m) == 2.0);
    CHECK(total_variation(AlphaMapd(AlphaMapd::Constant(3, 3, 4.0))) == 0.0);
}
