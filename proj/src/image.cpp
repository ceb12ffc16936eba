#include "lhsr/image.hpp"

#include <cmath>
#include <stdexcept>

namespace lhsr {

void DegradeSpec::validate() const {
    if (scale != 2 && scale != 3 && scale != 4)
        throw std::invalid_argument("DegradeSpec: scale must be 2, 3 or 4");
    if (blurSigma < 0.0)
        throw std::invalid_argument("DegradeSpec: blurSigma < 0");
}

std::array<double, 3> rgb_to_ycbcr(double r, double g, double b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const double cb = (b - y) / 1.772 + 0.5;
    const double cr = (r - y) / 1.402 + 0.5;
    return {y, cb, cr};
}

std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr) {
    const double r = y + 1.402 * (cr - 0.5);
    const double b = y + 1.772 * (cb - 0.5);
    const double g = (y - 0.299 * r - 0.114 * b) / 0.587;
    return {r, g, b};
}

std::uint8_t quantize8(double v) {
    const long q = std::lround(v * 255.0);
    return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

Plane quantize_plane(const Plane& p) {
    Plane out(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r)
        for (Eigen::Index c = 0; c < p.cols(); ++c)
            out(r, c) = quantize8(p(r, c)) / 255.0;
    return out;
}

Plane clamp01(const Plane& p) { return p.max(0.0).min(1.0); }

Plane crop_to_multiple(const Plane& img, int scale) {
    const Eigen::Index h = img.rows() - img.rows() % scale;
    const Eigen::Index w = img.cols() - img.cols() % scale;
    if (h == 0 || w == 0)
        throw std::invalid_argument("image smaller than scale factor");
    return img.topLeftCorner(h, w);
}

double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

namespace {

inline Eigen::Index clampi(Eigen::Index i, Eigen::Index n) {
    return std::clamp<Eigen::Index>(i, 0, n - 1);
}

struct TapSet {
    std::vector<double> weights;  // per output sample
    std::vector<int> firstTap;
    int tapCount;
};

// 1-D resample along one axis; clamp-to-border taps.
Plane resample_rows(const Plane& src, const TapSet& taps, Eigen::Index outRows) {
    Plane out(outRows, src.cols());
    for (Eigen::Index r = 0; r < outRows; ++r) {
        const double* w = &taps.weights[static_cast<std::size_t>(r) * taps.tapCount];
        for (Eigen::Index c = 0; c < src.cols(); ++c) {
            double acc = 0.0;
            for (int k = 0; k < taps.tapCount; ++k)
                acc += w[k] * src(clampi(taps.firstTap[r] + k, src.rows()), c);
            out(r, c) = acc;
        }
    }
    return out;
}

// Taps for mapping output index j to source coordinate (j - offset) / step
// (step < 1 upscales).  For antialiased decimation the kernel is stretched by
// the step and the weights renormalized.
TapSet make_taps(Eigen::Index outN, double step, double offset,
                 ResampleMethod method, bool antialias) {
    const double support = method == ResampleMethod::Bilinear ? 1.0 : 2.0;
    const double kscale = antialias && step > 1.0 ? step : 1.0;
    const double radius = support * kscale;
    TapSet t;
    t.tapCount = static_cast<int>(std::ceil(2.0 * radius)) + 1;
    t.weights.resize(static_cast<std::size_t>(outN) * t.tapCount);
    t.firstTap.resize(outN);
    for (Eigen::Index j = 0; j < outN; ++j) {
        const double u = (j - offset) * step;
        const int first = static_cast<int>(std::ceil(u - radius));
        t.firstTap[j] = first;
        double sum = 0.0;
        for (int k = 0; k < t.tapCount; ++k) {
            const double d = (first + k - u) / kscale;
            const double w = method == ResampleMethod::Bilinear
                                 ? std::max(0.0, 1.0 - std::abs(d))
                                 : cubic_weight(d);
            t.weights[static_cast<std::size_t>(j) * t.tapCount + k] = w;
            sum += w;
        }
        for (int k = 0; k < t.tapCount; ++k)
            t.weights[static_cast<std::size_t>(j) * t.tapCount + k] /= sum;
    }
    return t;
}

} // namespace

Plane classical_upscale(const Plane& lr, int scale, ResampleMethod method,
                        double gridOffset) {
    if (scale < 2 || scale > 4)
        throw std::invalid_argument("classical_upscale: scale must be in {2,3,4}");
    const Eigen::Index oh = lr.rows() * scale, ow = lr.cols() * scale;
    const TapSet rows = make_taps(oh, 1.0 / scale, gridOffset, method, false);
    const TapSet cols = make_taps(ow, 1.0 / scale, gridOffset, method, false);
    Plane tmp = resample_rows(lr, rows, oh);
    return resample_rows(tmp.transpose(), cols, ow).transpose();
}

Plane classical_upscale(const Plane& lr, int scale, ResampleMethod method) {
    return classical_upscale(lr, scale, method, (scale - 1) / 2.0);
}

Plane degrade(const Plane& hr, const DegradeSpec& spec) {
    spec.validate();
    Plane img = crop_to_multiple(hr, spec.scale);
    if (spec.blurSigma > 0.0)
        img = gaussian_blur(img, spec.blurSigma, spec.blurKernelRadius);
    const int s = spec.scale;
    const Eigen::Index oh = img.rows() / s, ow = img.cols() / s;
    const double off = (s - 1) / 2.0;
    // LR i samples HR coordinate i*s + (s-1)/2 with an s-stretched kernel.
    const TapSet rows = make_taps(oh, static_cast<double>(s), -off / s,
                                  ResampleMethod::Bicubic, true);
    const TapSet cols = make_taps(ow, static_cast<double>(s), -off / s,
                                  ResampleMethod::Bicubic, true);
    Plane tmp = resample_rows(img, rows, oh);
    return resample_rows(tmp.transpose(), cols, ow).transpose();
}

Plane gaussian_blur(const Plane& img, double sigma, int radius) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma < 0");
    if (sigma == 0.0) return img;
    if (radius <= 0) radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;

    auto pass = [&](const Plane& src) {
        Plane out(src.rows(), src.cols());
        for (Eigen::Index r = 0; r < src.rows(); ++r)
            for (Eigen::Index c = 0; c < src.cols(); ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * src(clampi(r + i, src.rows()), c);
                out(r, c) = acc;
            }
        return out;
    };
    Plane tmp = pass(img);
    return pass(tmp.transpose()).transpose();
}

SobelResult sobel_gradients(const Plane& img) {
    const Eigen::Index h = img.rows(), w = img.cols();
    auto refl = [](Eigen::Index i, Eigen::Index n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return std::clamp<Eigen::Index>(i, 0, n - 1);
    };
    SobelResult res{Plane(h, w), Plane(h, w), Plane(h, w)};
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double v = img(refl(r + dy, h), refl(c + dx, w));
                    const int wy = dy == 0 ? 2 : 1;
                    const int wx = dx == 0 ? 2 : 1;
                    gx += dx * wy * v;
                    gy += dy * wx * v;
                }
            gx /= 8.0;
            gy /= 8.0;
            res.gx(r, c) = gx;
            res.gy(r, c) = gy;
            res.magnitude(r, c) = std::hypot(gx, gy);
        }
    return res;
}

Plane tensor_to_plane(const Tensor& t) {
    if (t.n() != 1 || t.c() != 1)
        throw std::invalid_argument("tensor_to_plane: expected single plane, got " +
                                    t.shape_str());
    Plane p(t.h(), t.w());
    for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) p(y, x) = t.at(0, 0, y, x);
    return p;
}

Tensor plane_to_tensor(const Plane& p) {
    Tensor t({1, 1, static_cast<int>(p.rows()), static_cast<int>(p.cols())});
    for (int y = 0; y < p.rows(); ++y)
        for (int x = 0; x < p.cols(); ++x) t.at(0, 0, y, x) = p(y, x);
    return t;
}

} // namespace lhsr
