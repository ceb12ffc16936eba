#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lhsr/tensor.hpp"
#include "oracles.hpp"

using namespace lhsr;

namespace {

ConvSpec make_spec(Tensor kernel, int stride, int padding, bool transposed) {
    ConvSpec s;
    const int outCh = transposed ? kernel.c() : kernel.n();
    s.bias = Tensor({outCh});
    s.kernel = std::move(kernel);
    s.stride = stride;
    s.padding = padding;
    s.transposed = transposed;
    return s;
}

} // namespace

TEST_CASE("conv2d identity kernel") {
    Tensor in({1, 1, 3, 3}, 5.0);
    ConvSpec spec = make_spec(Tensor({1, 1, 1, 1}, 1.0), 1, 0, false);
    Tensor out = conv2d(in, spec);
    REQUIRE(out.h() == 3);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 5.0);
}

TEST_CASE("conv2d full-support summation") {
    Tensor in({1, 1, 2, 2});
    in.at(0, 0, 0, 0) = 1.0;
    in.at(0, 0, 0, 1) = 2.0;
    in.at(0, 0, 1, 0) = 3.0;
    in.at(0, 0, 1, 1) = 4.0;
    ConvSpec spec = make_spec(Tensor({1, 1, 2, 2}, 1.0), 1, 0, false);
    Tensor out = conv2d(in, spec);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("conv2d matches the naive-loop oracle") {
    std::mt19937_64 rng(11);
    for (int stride : {1, 2})
        for (int pad : {0, 1, 2}) {
            Tensor in({1, 2, 8, 8});
            oracle::fill_random(in, rng);
            ConvSpec spec = make_spec(Tensor({3, 2, 3, 3}), stride, pad, false);
            oracle::fill_random(spec.kernel, rng);
            oracle::fill_random(spec.bias, rng);
            CHECK(oracle::max_abs_diff(conv2d(in, spec),
                                       oracle::conv2d_ref(in, spec)) < 1e-12);
        }
}

TEST_CASE("transposed_conv2d single-pixel scatter") {
    Tensor in({1, 1, 1, 1});
    in.at(0, 0, 0, 0) = 3.0;
    ConvSpec spec = make_spec(Tensor({1, 1, 2, 2}), 2, 0, true);
    spec.kernel.at(0, 0, 0, 0) = 1.0;
    spec.kernel.at(0, 0, 0, 1) = 2.0;
    spec.kernel.at(0, 0, 1, 0) = 3.0;
    spec.kernel.at(0, 0, 1, 1) = 4.0;
    Tensor out = transposed_conv2d(in, spec);
    REQUIRE(out.h() == 2);
    REQUIRE(out.w() == 2);
    CHECK(out.at(0, 0, 0, 0) == 3.0);
    CHECK(out.at(0, 0, 0, 1) == 6.0);
    CHECK(out.at(0, 0, 1, 0) == 9.0);
    CHECK(out.at(0, 0, 1, 1) == 12.0);
}

TEST_CASE("transposed_conv2d partition of unity for the bilinear kernel") {
    // Separable triangle kernel for stride 2; interior outputs stay constant.
    const double t[3] = {0.25, 0.5, 0.25};
    ConvSpec spec = make_spec(Tensor({1, 1, 3, 3}), 2, 1, true);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) spec.kernel.at(0, 0, y, x) = 4.0 * t[y] * t[x];
    Tensor in({1, 1, 5, 5}, 0.7);
    Tensor out = transposed_conv2d(in, spec);
    Tensor ref = oracle::tconv2d_ref(in, spec);
    CHECK(oracle::max_abs_diff(out, ref) < 1e-12);
    for (int y = 1; y < out.h() - 1; ++y)
        for (int x = 1; x < out.w() - 1; ++x)
            CHECK(out.at(0, 0, y, x) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("transposed_conv2d matches the scatter oracle") {
    std::mt19937_64 rng(12);
    for (int stride : {1, 2, 3}) {
        Tensor in({1, 3, 5, 6});
        oracle::fill_random(in, rng);
        ConvSpec spec = make_spec(Tensor({3, 2, 3, 3}), stride, 1, true);
        oracle::fill_random(spec.kernel, rng);
        oracle::fill_random(spec.bias, rng);
        CHECK(oracle::max_abs_diff(transposed_conv2d(in, spec),
                                   oracle::tconv2d_ref(in, spec)) < 1e-12);
    }
}

TEST_CASE("conv and transposed conv are adjoint") {
    std::mt19937_64 rng(13);
    for (int stride : {1, 2}) {
        ConvSpec fwd = make_spec(Tensor({3, 2, 3, 3}), stride, 1, false);
        oracle::fill_random(fwd.kernel, rng);
        ConvSpec adj = fwd;
        adj.transposed = true;
        adj.bias = Tensor({2});

        // (H + 2p - k) must be divisible by the stride, else the transposed
        // output shape cannot round-trip.
        const int n = (stride == 2) ? 9 : 8;
        Tensor u({1, 2, n, n});
        oracle::fill_random(u, rng);
        Tensor cu = conv2d(u, fwd);
        Tensor v = Tensor::zeros_like(cu);
        oracle::fill_random(v, rng);
        const double lhs = dot(cu, v);
        const double rhs = dot(u, transposed_conv2d(v, adj));
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("conv2d_backward bias gradient is the upstream channel sum") {
    std::mt19937_64 rng(14);
    Tensor in({1, 2, 6, 6});
    oracle::fill_random(in, rng);
    ConvSpec spec = make_spec(Tensor({3, 2, 3, 3}), 1, 1, false);
    oracle::fill_random(spec.kernel, rng);
    Tensor up = Tensor::zeros_like(conv2d(in, spec));
    oracle::fill_random(up, rng);
    ConvGrads g = conv2d_backward(in, spec, up);
    for (int o = 0; o < 3; ++o) {
        double want = 0.0;
        for (int y = 0; y < up.h(); ++y)
            for (int x = 0; x < up.w(); ++x) want += up.at(0, o, y, x);
        CHECK(g.bias[o] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_backward matches finite differences") {
    std::mt19937_64 rng(15);
    Tensor in({1, 2, 6, 6});
    oracle::fill_random(in, rng);
    ConvSpec spec = make_spec(Tensor({2, 2, 3, 3}), 2, 1, false);
    oracle::fill_random(spec.kernel, rng);
    oracle::fill_random(spec.bias, rng);

    auto loss = [&] {
        double s = 0.0;
        Tensor out = conv2d(in, spec);
        for (std::int64_t i = 0; i < out.size(); ++i) s += out[i];
        return s;
    };
    Tensor up = Tensor::zeros_like(conv2d(in, spec));
    for (double& v : up.flat()) v = 1.0;
    ConvGrads g = conv2d_backward(in, spec, up);

    std::uniform_int_distribution<std::int64_t> pickIn(0, in.size() - 1);
    std::uniform_int_distribution<std::int64_t> pickK(0, spec.kernel.size() - 1);
    for (int t = 0; t < 20; ++t) {
        const std::int64_t i = pickIn(rng);
        CHECK(oracle::rel_err(g.input[i], oracle::central_diff(loss, in[i])) < 1e-6);
        const std::int64_t k = pickK(rng);
        CHECK(oracle::rel_err(g.kernel[k],
                              oracle::central_diff(loss, spec.kernel[k])) < 1e-6);
    }
    for (std::int64_t b = 0; b < spec.bias.size(); ++b)
        CHECK(oracle::rel_err(g.bias[b], oracle::central_diff(loss, spec.bias[b])) < 1e-6);
}

TEST_CASE("transposed_conv2d_backward matches finite differences") {
    std::mt19937_64 rng(16);
    Tensor in({1, 2, 5, 5});
    oracle::fill_random(in, rng);
    ConvSpec spec = make_spec(Tensor({2, 1, 3, 3}), 2, 1, true);
    oracle::fill_random(spec.kernel, rng);
    oracle::fill_random(spec.bias, rng);

    Tensor w = Tensor::zeros_like(transposed_conv2d(in, spec));
    oracle::fill_random(w, rng);
    auto loss = [&] { return dot(transposed_conv2d(in, spec), w); };
    ConvGrads g = transposed_conv2d_backward(in, spec, w);

    std::uniform_int_distribution<std::int64_t> pickIn(0, in.size() - 1);
    std::uniform_int_distribution<std::int64_t> pickK(0, spec.kernel.size() - 1);
    for (int t = 0; t < 20; ++t) {
        const std::int64_t i = pickIn(rng);
        CHECK(oracle::rel_err(g.input[i], oracle::central_diff(loss, in[i])) < 1e-6);
        const std::int64_t k = pickK(rng);
        CHECK(oracle::rel_err(g.kernel[k],
                              oracle::central_diff(loss, spec.kernel[k])) < 1e-6);
    }
}

TEST_CASE("backward with zero upstream returns zero gradients") {
    std::mt19937_64 rng(17);
    Tensor in({1, 1, 4, 4});
    oracle::fill_random(in, rng);
    ConvSpec spec = make_spec(Tensor({1, 1, 3, 3}), 1, 1, false);
    oracle::fill_random(spec.kernel, rng);
    Tensor zero = Tensor::zeros_like(conv2d(in, spec));
    ConvGrads g = conv2d_backward(in, spec, zero);
    for (std::int64_t i = 0; i < g.input.size(); ++i) CHECK(g.input[i] == 0.0);
    for (std::int64_t i = 0; i < g.kernel.size(); ++i) CHECK(g.kernel[i] == 0.0);
    for (std::int64_t i = 0; i < g.bias.size(); ++i) CHECK(g.bias[i] == 0.0);
}

TEST_CASE("conv rejects mismatched shapes") {
    Tensor in({1, 2, 4, 4});
    ConvSpec spec = make_spec(Tensor({1, 1, 3, 3}), 1, 0, false);
    CHECK_THROWS_AS(conv2d(in, spec), std::invalid_argument);
    ConvSpec big = make_spec(Tensor({1, 2, 9, 9}), 1, 0, false);
    CHECK_THROWS_AS(conv2d(in, big), std::invalid_argument);
}

TEST_CASE("relu") {
    Tensor x({3});
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.0;
    Tensor y = relu(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);

    Tensor pos({4}, 0.5);
    Tensor same = relu(pos);
    for (std::int64_t i = 0; i < pos.size(); ++i) CHECK(same[i] == pos[i]);

    // Finite differences away from the kink.
    std::mt19937_64 rng(18);
    Tensor z({10});
    for (double& v : z.flat()) {
        std::uniform_real_distribution<double> d(0.1, 1.0);
        v = d(rng) * (rng() % 2 ? 1.0 : -1.0);
    }
    Tensor w({10});
    oracle::fill_random(w, rng);
    auto loss = [&] { return dot(relu(z), w); };
    Tensor g = relu_backward(z, w);
    for (std::int64_t i = 0; i < z.size(); ++i)
        CHECK(oracle::rel_err(g[i], oracle::central_diff(loss, z[i])) < 1e-6);
}

TEST_CASE("elementwise_div") {
    Tensor num({1});
    Tensor den({1});
    num[0] = 4.0;
    den[0] = 2.0;
    CHECK(elementwise_div(num, den, 1e-12)[0] == doctest::Approx(2.0).epsilon(1e-9));

    Tensor zden({1});
    Tensor out = elementwise_div(num, zden, 1e-8);
    CHECK(std::isfinite(out[0]));

    CHECK_THROWS_AS(elementwise_div(num, den, 0.0), std::invalid_argument);

    std::mt19937_64 rng(19);
    Tensor n({8}), d({8}), w({8});
    oracle::fill_random(n, rng);
    oracle::fill_random(d, rng, 0.5, 2.0);
    oracle::fill_random(w, rng);
    const double eps = 1e-3;
    auto loss = [&] { return dot(elementwise_div(n, d, eps), w); };
    auto [gn, gd] = elementwise_div_backward(n, d, eps, w);
    for (std::int64_t i = 0; i < n.size(); ++i) {
        CHECK(oracle::rel_err(gn[i], oracle::central_diff(loss, n[i])) < 1e-6);
        CHECK(oracle::rel_err(gd[i], oracle::central_diff(loss, d[i])) < 1e-6);
    }
}

TEST_CASE("sgd_step") {
    Tensor p({1}, 1.0);
    Tensor g({1}, 0.5);
    sgd_step(p, g, 0.1);
    CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));

    Tensor q({3}, 2.0);
    sgd_step(q, Tensor({3}), 0.1);
    for (std::int64_t i = 0; i < q.size(); ++i) CHECK(q[i] == 2.0);

    // Gradient descent on f(p) = p^2 shrinks |p| monotonically.
    Tensor r({1}, 3.0);
    double prev = std::abs(r[0]);
    for (int it = 0; it < 30; ++it) {
        Tensor grad({1});
        grad[0] = 2.0 * r[0];
        sgd_step(r, grad, 0.1);
        CHECK(std::abs(r[0]) < prev);
        prev = std::abs(r[0]);
    }
}
