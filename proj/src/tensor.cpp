#include "lhsr/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lhsr {

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4)
        throw std::invalid_argument("Tensor rank must be 1..4");
    std::int64_t n = 1;
    for (int d : shape_) {
        if (d < 0) throw std::invalid_argument("negative tensor extent");
        n *= d;
    }
    data_.assign(static_cast<std::size_t>(n), fill);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i)
        os << shape_[i] << (i + 1 < shape_.size() ? "x" : "");
    os << ')';
    return os.str();
}

void ConvSpec::validate() const {
    if (kernel.rank() != 4)
        throw std::invalid_argument("ConvSpec kernel must be rank 4, got " +
                                    kernel.shape_str());
    if (kernel.h() < 1 || kernel.w() < 1)
        throw std::invalid_argument("ConvSpec kernel extent < 1");
    if (stride < 1) throw std::invalid_argument("ConvSpec stride < 1");
    if (padding < 0) throw std::invalid_argument("ConvSpec padding < 0");
    if (bias.size() != out_channels())
        throw std::invalid_argument("ConvSpec bias length " +
                                    std::to_string(bias.size()) +
                                    " != output channels " +
                                    std::to_string(out_channels()));
}

namespace {

void check_conv_input(const Tensor& input, const ConvSpec& spec, int wantC,
                      const char* op) {
    spec.validate();
    if (input.rank() != 4)
        throw std::invalid_argument(std::string(op) + ": input must be rank 4, got " +
                                    input.shape_str());
    if (input.c() != wantC)
        throw std::invalid_argument(std::string(op) + ": input channels " +
                                    std::to_string(input.c()) + " != kernel expects " +
                                    std::to_string(wantC) + " (kernel " +
                                    spec.kernel.shape_str() + ")");
}

} // namespace

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
    check_conv_input(input, spec, spec.kernel.c(), "conv2d");
    const Tensor& K = spec.kernel;
    const int N = input.n(), I = input.c(), H = input.h(), W = input.w();
    const int O = K.n(), kH = K.h(), kW = K.w();
    const int s = spec.stride, p = spec.padding;
    const int oH = (H + 2 * p - kH) / s + 1;
    const int oW = (W + 2 * p - kW) / s + 1;
    if (H + 2 * p < kH || W + 2 * p < kW || oH <= 0 || oW <= 0)
        throw std::invalid_argument("conv2d: zero-sized output for input " +
                                    input.shape_str() + " kernel " + K.shape_str());
    Tensor out({N, O, oH, oW});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < oH; ++oy)
                for (int ox = 0; ox < oW; ++ox) {
                    double acc = spec.bias[o];
                    for (int i = 0; i < I; ++i)
                        for (int ky = 0; ky < kH; ++ky) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kW; ++kx) {
                                const int ix = ox * s - p + kx;
                                if (ix < 0 || ix >= W) continue;
                                acc += K.at(o, i, ky, kx) * input.at(n, i, iy, ix);
                            }
                        }
                    out.at(n, o, oy, ox) = acc;
                }
    return out;
}

Tensor transposed_conv2d(const Tensor& input, const ConvSpec& spec) {
    check_conv_input(input, spec, spec.kernel.n(), "transposed_conv2d");
    const Tensor& K = spec.kernel;
    const int N = input.n(), O = input.c(), H = input.h(), W = input.w();
    const int I = K.c(), kH = K.h(), kW = K.w();
    const int s = spec.stride, p = spec.padding;
    const int oH = (H - 1) * s - 2 * p + kH;
    const int oW = (W - 1) * s - 2 * p + kW;
    if (oH <= 0 || oW <= 0)
        throw std::invalid_argument("transposed_conv2d: zero-sized output for input " +
                                    input.shape_str() + " kernel " + K.shape_str());
    Tensor out({N, I, oH, oW});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const double v = input.at(n, o, y, x);
                    if (v == 0.0) continue;
                    for (int i = 0; i < I; ++i)
                        for (int ky = 0; ky < kH; ++ky) {
                            const int oy = y * s - p + ky;
                            if (oy < 0 || oy >= oH) continue;
                            for (int kx = 0; kx < kW; ++kx) {
                                const int ox = x * s - p + kx;
                                if (ox < 0 || ox >= oW) continue;
                                out.at(n, i, oy, ox) += v * K.at(o, i, ky, kx);
                            }
                        }
                }
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < I; ++i)
            for (int y = 0; y < oH; ++y)
                for (int x = 0; x < oW; ++x) out.at(n, i, y, x) += spec.bias[i];
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvSpec& spec,
                          const Tensor& upstream) {
    check_conv_input(input, spec, spec.kernel.c(), "conv2d_backward");
    const Tensor& K = spec.kernel;
    const int N = input.n(), I = input.c(), H = input.h(), W = input.w();
    const int O = K.n(), kH = K.h(), kW = K.w();
    const int s = spec.stride, p = spec.padding;
    const int oH = (H + 2 * p - kH) / s + 1;
    const int oW = (W + 2 * p - kW) / s + 1;
    if (upstream.n() != N || upstream.c() != O || upstream.h() != oH ||
        upstream.w() != oW)
        throw std::invalid_argument("conv2d_backward: upstream " +
                                    upstream.shape_str() + " != output shape");
    ConvGrads g{Tensor::zeros_like(input), Tensor::zeros_like(K),
                Tensor::zeros_like(spec.bias)};
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < oH; ++oy)
                for (int ox = 0; ox < oW; ++ox) {
                    const double u = upstream.at(n, o, oy, ox);
                    g.bias[o] += u;
                    if (u == 0.0) continue;
                    for (int i = 0; i < I; ++i)
                        for (int ky = 0; ky < kH; ++ky) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kW; ++kx) {
                                const int ix = ox * s - p + kx;
                                if (ix < 0 || ix >= W) continue;
                                g.input.at(n, i, iy, ix) += u * K.at(o, i, ky, kx);
                                g.kernel.at(o, i, ky, kx) += u * input.at(n, i, iy, ix);
                            }
                        }
                }
    return g;
}

ConvGrads transposed_conv2d_backward(const Tensor& input, const ConvSpec& spec,
                                     const Tensor& upstream) {
    check_conv_input(input, spec, spec.kernel.n(), "transposed_conv2d_backward");
    const Tensor& K = spec.kernel;
    const int N = input.n(), O = input.c(), H = input.h(), W = input.w();
    const int I = K.c(), kH = K.h(), kW = K.w();
    const int s = spec.stride, p = spec.padding;
    const int oH = (H - 1) * s - 2 * p + kH;
    const int oW = (W - 1) * s - 2 * p + kW;
    if (upstream.n() != N || upstream.c() != I || upstream.h() != oH ||
        upstream.w() != oW)
        throw std::invalid_argument("transposed_conv2d_backward: upstream " +
                                    upstream.shape_str() + " != output shape");
    ConvGrads g{Tensor::zeros_like(input), Tensor::zeros_like(K),
                Tensor::zeros_like(spec.bias)};
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < I; ++i)
            for (int y = 0; y < oH; ++y)
                for (int x = 0; x < oW; ++x) g.bias[i] += upstream.at(n, i, y, x);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    const double v = input.at(n, o, y, x);
                    for (int i = 0; i < I; ++i)
                        for (int ky = 0; ky < kH; ++ky) {
                            const int oy = y * s - p + ky;
                            if (oy < 0 || oy >= oH) continue;
                            for (int kx = 0; kx < kW; ++kx) {
                                const int ox = x * s - p + kx;
                                if (ox < 0 || ox >= oW) continue;
                                const double u = upstream.at(n, i, oy, ox);
                                acc += u * K.at(o, i, ky, kx);
                                g.kernel.at(o, i, ky, kx) += u * v;
                            }
                        }
                    g.input.at(n, o, y, x) = acc;
                }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.flat()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
    if (!x.same_shape(upstream))
        throw std::invalid_argument("relu_backward: shape mismatch " +
                                    x.shape_str() + " vs " + upstream.shape_str());
    Tensor g = Tensor::zeros_like(x);
    for (std::int64_t i = 0; i < x.size(); ++i)
        g[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return g;
}

Tensor elementwise_div(const Tensor& num, const Tensor& den, double epsilon) {
    if (!num.same_shape(den))
        throw std::invalid_argument("elementwise_div: shape mismatch " +
                                    num.shape_str() + " vs " + den.shape_str());
    if (epsilon <= 0.0) throw std::invalid_argument("elementwise_div: epsilon <= 0");
    Tensor out = Tensor::zeros_like(num);
    for (std::int64_t i = 0; i < num.size(); ++i)
        out[i] = num[i] / (den[i] + epsilon);
    return out;
}

std::pair<Tensor, Tensor> elementwise_div_backward(const Tensor& num,
                                                   const Tensor& den,
                                                   double epsilon,
                                                   const Tensor& upstream) {
    if (!num.same_shape(den) || !num.same_shape(upstream))
        throw std::invalid_argument("elementwise_div_backward: shape mismatch");
    Tensor gnum = Tensor::zeros_like(num);
    Tensor gden = Tensor::zeros_like(den);
    for (std::int64_t i = 0; i < num.size(); ++i) {
        const double d = den[i] + epsilon;
        gnum[i] = upstream[i] / d;
        gden[i] = -upstream[i] * num[i] / (d * d);
    }
    return {std::move(gnum), std::move(gden)};
}

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
    if (!param.same_shape(grad))
        throw std::invalid_argument("sgd_step: shape mismatch " + param.shape_str() +
                                    " vs " + grad.shape_str());
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr <= 0");
    for (std::int64_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

void sgd_step(std::span<Tensor*> params, std::span<const Tensor* const> grads,
              double lr) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd_step: param/grad count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        sgd_step(*params[i], *grads[i], lr);
}

double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("dot: shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace lhsr
