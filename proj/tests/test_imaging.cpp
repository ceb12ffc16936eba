#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lhsr/image.hpp"
#include "oracles.hpp"

using namespace lhsr;

namespace {

std::filesystem::path temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "lhsr_imaging_test";
    std::filesystem::create_directories(d);
    return d;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Direct 1-D antialiased bicubic decimation, same grid convention:
// LR i samples HR coordinate i*s + (s-1)/2, kernel stretched by s,
// weights normalized, clamp-to-border.
Plane decimate_ref(const Plane& hr, int s) {
    auto pass = [&](const Plane& src) {
        const Eigen::Index on = src.rows() / s;
        Plane out(on, src.cols());
        const double off = (s - 1) / 2.0;
        for (Eigen::Index i = 0; i < on; ++i) {
            const double u = i * s + off;
            const int first = static_cast<int>(std::ceil(u - 2.0 * s));
            const int last = static_cast<int>(std::floor(u + 2.0 * s));
            for (Eigen::Index c = 0; c < src.cols(); ++c) {
                double acc = 0.0, wsum = 0.0;
                for (int j = first; j <= last; ++j) {
                    const double w = cubic_weight((j - u) / s);
                    const Eigen::Index jc =
                        std::clamp<Eigen::Index>(j, 0, src.rows() - 1);
                    acc += w * src(jc, c);
                    wsum += w;
                }
                out(i, c) = acc / wsum;
            }
        }
        return out;
    };
    return pass(pass(hr).transpose()).transpose();
}

} // namespace

TEST_CASE("rgb/ycbcr conversion") {
    auto gray = rgb_to_ycbcr(128.0 / 255, 128.0 / 255, 128.0 / 255);
    CHECK(gray[0] == doctest::Approx(128.0 / 255).epsilon(1e-12));
    CHECK(gray[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gray[2] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK(rgb_to_ycbcr(1.0, 1.0, 1.0)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rgb_to_ycbcr(1.0, 0.0, 0.0)[0] == doctest::Approx(0.299).epsilon(1e-12));

    auto black = rgb_to_ycbcr(0.0, 0.0, 0.0);
    CHECK(black[0] == 0.0);
    CHECK(black[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(black[2] == doctest::Approx(0.5).epsilon(1e-12));

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double r = d(rng), g = d(rng), b = d(rng);
        auto ycc = rgb_to_ycbcr(r, g, b);
        auto rgb = ycbcr_to_rgb(ycc[0], ycc[1], ycc[2]);
        CHECK(std::abs(rgb[0] - r) < 1e-12);
        CHECK(std::abs(rgb[1] - g) < 1e-12);
        CHECK(std::abs(rgb[2] - b) < 1e-12);
    }
}

TEST_CASE("quantize8") {
    CHECK(quantize8(0.0) == 0);
    CHECK(quantize8(1.0) == 255);
    CHECK(quantize8(-0.5) == 0);
    CHECK(quantize8(2.0) == 255);
    CHECK(quantize8(128.0 / 255.0) == 128);
}

TEST_CASE("pgm round trip is byte-identical") {
    std::mt19937_64 rng(22);
    Plane p = quantize_plane(oracle::random_plane(17, 23, rng));
    const auto d = temp_dir();
    save_image_gray(d / "a.pgm", p);
    LoadedImage li = load_image(d / "a.pgm");
    CHECK(oracle::max_abs_diff(li.y, p) == 0.0);
    CHECK(!li.cb);
    save_image_gray(d / "b.pgm", li.y);
    CHECK(slurp(d / "a.pgm") == slurp(d / "b.pgm"));
}

TEST_CASE("png gray round trip is byte-identical") {
    std::mt19937_64 rng(23);
    Plane p = quantize_plane(oracle::random_plane(20, 31, rng));
    const auto d = temp_dir();
    save_image_gray(d / "a.png", p);
    LoadedImage li = load_image(d / "a.png");
    CHECK(oracle::max_abs_diff(li.y, p) == 0.0);
    save_image_gray(d / "b.png", li.y);
    CHECK(slurp(d / "a.png") == slurp(d / "b.png"));
}

TEST_CASE("png color round trip is byte-identical") {
    std::mt19937_64 rng(24);
    // Start from an actual 8-bit RGB image (synthesized through one save).
    Plane y0 = oracle::random_plane(15, 19, rng, 0.2, 0.8);
    Plane cb0 = oracle::random_plane(15, 19, rng, 0.4, 0.6);
    Plane cr0 = oracle::random_plane(15, 19, rng, 0.4, 0.6);
    const auto d = temp_dir();
    save_image_color(d / "c0.png", y0, cb0, cr0);
    LoadedImage a = load_image(d / "c0.png");
    REQUIRE(a.cb);
    REQUIRE(a.cr);
    save_image_color(d / "c1.png", a.y, *a.cb, *a.cr);
    CHECK(slurp(d / "c0.png") == slurp(d / "c1.png"));
}

TEST_CASE("load_image rejects missing files") {
    CHECK_THROWS(load_image(temp_dir() / "nope.png"));
}

TEST_CASE("crop_to_multiple") {
    Plane p(7, 9);
    p.setZero();
    Plane c = crop_to_multiple(p, 3);
    CHECK(c.rows() == 6);
    CHECK(c.cols() == 9);
    Plane tiny(1, 1);
    CHECK_THROWS_AS(crop_to_multiple(tiny, 2), std::invalid_argument);
}

TEST_CASE("degrade preserves constants") {
    for (int s : {2, 3, 4}) {
        Plane hr(4 * s, 5 * s);
        hr.setConstant(0.37);
        DegradeSpec spec;
        spec.scale = s;
        Plane lr = degrade(hr, spec);
        CHECK(lr.rows() == 4);
        CHECK(lr.cols() == 5);
        CHECK((lr - 0.37).abs().maxCoeff() < 1e-12);

        spec.blurSigma = 0.8;
        Plane lrb = degrade(hr, spec);
        CHECK((lrb - 0.37).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("degrade matches the direct decimation oracle") {
    Plane hr = Plane::Zero(16, 16);
    hr(8, 8) = 1.0;  // impulse
    DegradeSpec spec;
    spec.scale = 2;
    CHECK(oracle::max_abs_diff(degrade(hr, spec), decimate_ref(hr, 2)) < 1e-10);

    Plane nat = oracle::smooth_plane(24, 24, 77);
    CHECK(oracle::max_abs_diff(degrade(nat, spec), decimate_ref(nat, 2)) < 1e-10);
}

TEST_CASE("degrade composes: x2 twice equals x4") {
    Plane hr = oracle::smooth_plane(64, 64, 5);
    DegradeSpec s2;
    s2.scale = 2;
    DegradeSpec s4;
    s4.scale = 4;
    Plane twice = degrade(degrade(hr, s2), s2);
    Plane once = degrade(hr, s4);
    CHECK(oracle::max_abs_diff(twice, once) < 1e-3);
}

TEST_CASE("classical_upscale preserves constants") {
    for (int s : {2, 3, 4})
        for (auto m : {ResampleMethod::Bilinear, ResampleMethod::Bicubic}) {
            Plane lr(6, 7);
            lr.setConstant(0.61);
            Plane up = classical_upscale(lr, s, m);
            CHECK(up.rows() == 6 * s);
            CHECK(up.cols() == 7 * s);
            CHECK((up - 0.61).abs().maxCoeff() < 1e-12);
        }
}

TEST_CASE("bilinear upscale reproduces linear ramps") {
    Plane lr(4, 8);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c) lr(r, c) = 0.1 * c;
    Plane up = classical_upscale(lr, 2, ResampleMethod::Bilinear);
    // Interior columns must be an exact arithmetic progression of slope 0.05.
    for (int r = 0; r < up.rows(); ++r)
        for (int c = 2; c < up.cols() - 2; ++c)
            CHECK(up(r, c + 1) - up(r, c) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("gaussian_blur") {
    std::mt19937_64 rng(25);
    Plane p = oracle::random_plane(9, 9, rng);
    CHECK(oracle::max_abs_diff(gaussian_blur(p, 0.0), p) == 0.0);

    Plane c(8, 8);
    c.setConstant(0.42);
    CHECK((gaussian_blur(c, 1.3) - 0.42).abs().maxCoeff() < 1e-12);

    Plane imp = Plane::Zero(21, 21);
    imp(10, 10) = 1.0;
    const double sigma = 1.0;
    Plane resp = gaussian_blur(imp, sigma);
    CHECK(std::abs(resp.sum() - 1.0) < 1e-12);
    // Response matches the normalized separable Gaussian samples.
    const int radius = 3;
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            CHECK(std::abs(resp(10 + dy, 10 + dx) - k[dy + radius] * k[dx + radius]) <
                  1e-12);
}

TEST_CASE("sobel_gradients") {
    Plane c(8, 8);
    c.setConstant(0.3);
    SobelResult flat = sobel_gradients(c);
    CHECK(flat.gx.abs().maxCoeff() < 1e-14);
    CHECK(flat.gy.abs().maxCoeff() < 1e-14);

    // Vertical step edge: gx peaks at the transition, gy stays zero.
    Plane step = Plane::Zero(9, 10);
    for (int r = 0; r < 9; ++r)
        for (int cc = 5; cc < 10; ++cc) step(r, cc) = 1.0;
    SobelResult e = sobel_gradients(step);
    CHECK(e.gy.abs().maxCoeff() < 1e-14);
    for (int r = 1; r < 8; ++r) {
        CHECK(e.gx(r, 4) > 0.0);
        CHECK(e.gx(r, 5) > 0.0);
        CHECK(e.gx(r, 1) == 0.0);
        CHECK(e.gx(r, 8) == 0.0);
    }

    // Affine image v = x + 2y: interior response is the exact derivative.
    Plane ramp(10, 10);
    for (int r = 0; r < 10; ++r)
        for (int cc = 0; cc < 10; ++cc) ramp(r, cc) = 0.01 * (cc + 2 * r);
    SobelResult a = sobel_gradients(ramp);
    for (int r = 1; r < 9; ++r)
        for (int cc = 1; cc < 9; ++cc) {
            CHECK(a.gx(r, cc) == doctest::Approx(0.01).epsilon(1e-9));
            CHECK(a.gy(r, cc) == doctest::Approx(0.02).epsilon(1e-9));
        }
}

TEST_CASE("plane/tensor round trip") {
    std::mt19937_64 rng(26);
    Plane p = oracle::random_plane(5, 7, rng);
    CHECK(oracle::max_abs_diff(tensor_to_plane(plane_to_tensor(p)), p) == 0.0);
}
