#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "lhsr/dataset.hpp"
#include "lhsr/metrics.hpp"
#include "oracles.hpp"

using namespace lhsr;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Small synthetic corpus of smooth images on disk.
std::filesystem::path make_corpus(const std::string& name, int images, int side) {
    const auto dir = std::filesystem::temp_directory_path() / "lhsr_dataset_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "hr");
    for (int i = 0; i < images; ++i) {
        Plane img = quantize_plane(oracle::smooth_plane(side, side, 500 + i));
        char buf[32];
        std::snprintf(buf, sizeof buf, "img%02d.png", i);
        save_image_gray(dir / "hr" / buf, img);
    }
    return dir;
}

} // namespace

TEST_CASE("extract_patches counts") {
    Plane a(32, 32);
    a.setZero();
    CHECK(extract_patches(a, 32, 12).size() == 1);
    Plane b(44, 44);
    b.setZero();
    auto patches = extract_patches(b, 32, 12);
    CHECK(patches.size() == 4);
    CHECK(patches[3].second == std::make_pair(12, 12));
    Plane small(16, 16);
    small.setZero();
    CHECK(extract_patches(small, 32, 12).empty());
    CHECK_THROWS_AS(extract_patches(a, 0, 12), std::invalid_argument);
}

TEST_CASE("make_boundary_map fallback") {
    Plane flat(16, 16);
    flat.setConstant(0.5);
    Plane b = make_boundary_map(flat, std::nullopt);
    CHECK(b.abs().maxCoeff() == 0.0);

    Plane step = Plane::Zero(16, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 8; c < 16; ++c) step(r, c) = 1.0;
    Plane eb = make_boundary_map(step, std::nullopt);
    CHECK(eb.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eb(8, 2) == 0.0);
    CHECK(eb(8, 13) == 0.0);
    CHECK(eb(8, 7) > 0.5);
}

TEST_CASE("make_boundary_map annotation path") {
    std::mt19937_64 rng(51);
    Plane hr = oracle::random_plane(20, 20, rng);
    Plane ann = quantize_plane(oracle::random_plane(20, 20, rng));
    Plane b = make_boundary_map(hr, ann);
    CHECK(oracle::max_abs_diff(b, ann) == 0.0);

    // Quantization round trip through an image file stays within 1/255.
    const auto dir = std::filesystem::temp_directory_path() / "lhsr_dataset_test";
    std::filesystem::create_directories(dir);
    save_image_gray(dir / "ann.png", ann);
    Plane rt = load_image(dir / "ann.png").y;
    CHECK(oracle::max_abs_diff(rt, ann) <= 1.0 / 255.0 + 1e-12);

    Plane wrong(10, 10);
    wrong.setZero();
    CHECK_THROWS_AS(make_boundary_map(hr, wrong), std::invalid_argument);
}

TEST_CASE("build_dataset is deterministic and self-consistent") {
    const auto corpus = make_corpus("det", 2, 56);
    const auto out = corpus.parent_path() / "det.lhsrds";
    DatasetManifest req;
    req.scale = 2;
    req.patchSize = 32;
    req.stride = 12;
    req.seed = 7;
    DatasetManifest m1 = build_dataset(corpus, out, req);
    const std::string bytes1 = slurp(out);
    DatasetManifest m2 = build_dataset(corpus, out, req);
    CHECK(bytes1 == slurp(out));
    CHECK(m1.totalCount == m2.totalCount);
    // 56x56, patch 32, stride 12 -> 3x3 patches per image.
    CHECK(m1.totalCount == 18);
    CHECK(m1.baseCount == 18);
    CHECK(m1.effectivePatchSize == 32);

    Dataset ds = load_dataset(out);
    REQUIRE(ds.triplets.size() == 18);
    std::mt19937_64 rng(52);
    for (int t = 0; t < 10; ++t) {
        std::uniform_int_distribution<std::size_t> pick(0, ds.triplets.size() - 1);
        const TrainingTriplet& tr = ds.triplets[pick(rng)];
        CHECK(tr.lr.rows() == 16);
        CHECK(tr.lr.cols() == 16);
        CHECK(tr.hr.rows() == 32);
        DegradeSpec spec;
        spec.scale = 2;
        CHECK(oracle::max_abs_diff(tr.lr, degrade(tr.hr, spec)) == 0.0);
        CHECK(tr.boundary.minCoeff() >= 0.0);
        CHECK(tr.boundary.maxCoeff() <= 1.0);
        // Alignment: classical upscale of lr must sit close to hr.
        Plane up = classical_upscale(tr.lr, 2, ResampleMethod::Bicubic);
        CHECK(psnr(up, tr.hr, 2) > 20.0);
    }
    CHECK(std::filesystem::exists(out.string() + ".manifest.json"));
    const std::string json = slurp(out.string() + ".manifest.json");
    CHECK(json.find("\"stride\": 12") != std::string::npos);
    CHECK(json.find("\"total_count\": 18") != std::string::npos);
}

TEST_CASE("build_dataset blur augmentation doubles the record count") {
    const auto corpus = make_corpus("blur", 1, 44);
    const auto out = corpus.parent_path() / "blur.lhsrds";
    DatasetManifest req;
    req.scale = 2;
    req.patchSize = 32;
    req.stride = 12;
    req.blurSigma = 0.8;
    DatasetManifest m = build_dataset(corpus, out, req);
    CHECK(m.baseCount == 4);
    CHECK(m.totalCount == 8);
    Dataset ds = load_dataset(out);
    REQUIRE(ds.triplets.size() == 8);
    // Clean and blurred duplicates share hr but differ in lr.
    CHECK(oracle::max_abs_diff(ds.triplets[0].hr, ds.triplets[1].hr) == 0.0);
    CHECK(oracle::max_abs_diff(ds.triplets[0].lr, ds.triplets[1].lr) > 0.0);
}

TEST_CASE("build_dataset rounds the patch size down to a scale multiple") {
    const auto corpus = make_corpus("rnd", 1, 45);
    const auto out = corpus.parent_path() / "rnd.lhsrds";
    DatasetManifest req;
    req.scale = 3;
    req.patchSize = 32;
    req.stride = 12;
    DatasetManifest m = build_dataset(corpus, out, req);
    CHECK(m.effectivePatchSize == 30);
    Dataset ds = load_dataset(out);
    CHECK(ds.triplets.front().lr.rows() == 10);
    CHECK(ds.triplets.front().hr.rows() == 30);
}

TEST_CASE("build_dataset rejects an empty corpus") {
    const auto dir = std::filesystem::temp_directory_path() / "lhsr_dataset_test" / "none";
    std::filesystem::create_directories(dir / "hr");
    DatasetManifest req;
    CHECK_THROWS(build_dataset(dir, dir / "x.lhsrds", req));
}

TEST_CASE("BatchStream batching, determinism, and epoch coverage") {
    Dataset ds;
    ds.manifest.scale = 2;
    for (int i = 0; i < 100; ++i) {
        TrainingTriplet t;
        t.lr = Plane::Constant(2, 2, i);
        t.hr = Plane::Constant(4, 4, i);
        t.boundary = Plane::Zero(4, 4);
        t.sourceId = i;
        ds.triplets.push_back(std::move(t));
    }

    BatchStream a(ds, 32, 9);
    std::vector<std::size_t> sizes;
    std::multiset<const TrainingTriplet*> seen;
    for (int i = 0; i < 4; ++i) {
        auto batch = a.next();
        sizes.push_back(batch.size());
        for (auto* p : batch) seen.insert(p);
    }
    CHECK(sizes == std::vector<std::size_t>{32, 32, 32, 4});
    CHECK(seen.size() == 100);
    for (const auto& t : ds.triplets) CHECK(seen.count(&t) == 1);
    CHECK(a.epoch() == 0);
    a.next();
    CHECK(a.epoch() == 1);

    BatchStream b1(ds, 32, 9), b2(ds, 32, 9);
    for (int i = 0; i < 7; ++i) {
        auto x = b1.next(), y = b2.next();
        REQUIRE(x.size() == y.size());
        for (std::size_t j = 0; j < x.size(); ++j) CHECK(x[j] == y[j]);
    }

    BatchStream c(ds, 32, 10);
    auto first9 = BatchStream(ds, 32, 9).next();
    auto first10 = c.next();
    bool same = true;
    for (std::size_t j = 0; j < first9.size(); ++j)
        if (first9[j] != first10[j]) same = false;
    CHECK(!same);
}
