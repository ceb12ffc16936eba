#include "lhsr/lsp.hpp"

#include <cmath>
#include <stdexcept>

namespace lhsr {

void LspConfig::validate() const {
    if (scale < 2 || scale > 4)
        throw std::invalid_argument("LspConfig: scale must be in {2,3,4}");
    if (lambda < 0.0) throw std::invalid_argument("LspConfig: lambda < 0");
    if (max_disp() >= 0.5 * scale)
        throw std::invalid_argument("LspConfig: maxDisp must stay below scale/2");
    if (deconv_kernel() % 2 == 0)
        throw std::invalid_argument("LspConfig: deconv kernel must be odd");
    if (epsilon <= 0.0) throw std::invalid_argument("LspConfig: epsilon <= 0");
}

void LspParams::validate() const {
    conv1.validate();
    proj.validate();
    deconv.validate();
    if (!deconv.transposed)
        throw std::invalid_argument("LspParams: deconv must be transposed");
    if (deconv.stride != scale)
        throw std::invalid_argument("LspParams: deconv stride != scale");
    if (deconv.kernel.h() % 2 == 0)
        throw std::invalid_argument("LspParams: deconv kernel must be odd");
    if (!conv1.kernel.all_finite() || !proj.kernel.all_finite() ||
        !deconv.kernel.all_finite())
        throw std::invalid_argument("LspParams: non-finite kernel weights");
}

DisplacementField compute_displacement(const Plane& lr, int scale, double lambda,
                                       double maxDisp, double smoothSigma) {
    if (lambda < 0.0) throw std::invalid_argument("compute_displacement: lambda < 0");
    if (maxDisp >= 0.5 * scale)
        throw std::invalid_argument("compute_displacement: maxDisp >= scale/2");
    DisplacementField d;
    d.maxDisplacement = maxDisp;
    const Plane mag = sobel_gradients(lr).magnitude;
    const Plane smoothed =
        smoothSigma > 0.0 ? gaussian_blur(mag, smoothSigma) : mag;
    const SobelResult slope = sobel_gradients(smoothed);
    // Descend the smoothed gradient magnitude: pixels on either side of an
    // edge move away from it, flat regions stay put.
    d.dx = (-lambda * scale * slope.gx).max(-maxDisp).min(maxDisp);
    d.dy = (-lambda * scale * slope.gy).max(-maxDisp).min(maxDisp);
    return d;
}

PlacedGrid place_pixels(const Plane& plane, const DisplacementField& disp, int scale) {
    if (disp.dx.rows() != plane.rows() || disp.dx.cols() != plane.cols() ||
        disp.dy.rows() != plane.rows() || disp.dy.cols() != plane.cols())
        throw std::invalid_argument("place_pixels: displacement size mismatch");
    const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
    const int H = h * scale, W = w * scale;
    // Lattice offset and displacement round separately: at even scales the
    // undisplaced position sits exactly on a rounding boundary, and rounding
    // their sum would let any nonzero displacement flip the cell.
    const long off = std::lround((scale - 1) / 2.0);
    PlacedGrid g{Tensor({1, 1, H, W}), Tensor({1, 1, H, W}), {}};
    g.originCell.resize(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const long cy = std::clamp<long>(
                r * scale + off + std::lround(disp.dy(r, c)), 0, H - 1);
            const long cx = std::clamp<long>(
                c * scale + off + std::lround(disp.dx(r, c)), 0, W - 1);
            g.values.at(0, 0, static_cast<int>(cy), static_cast<int>(cx)) += plane(r, c);
            g.indicator.at(0, 0, static_cast<int>(cy), static_cast<int>(cx)) += 1.0;
            g.originCell[static_cast<std::size_t>(r) * w + c] = cy * W + cx;
        }
    return g;
}

namespace {

// The strided deconvolution is realized in two halves: pixel placement
// scatters values into the HR grid, then the kernel is smeared at unit
// stride.  The kernel is used at unit mass so the Shepard ratio is invariant
// to kernel scaling exactly, not just up to epsilon.
ConvSpec unit_mass_smear(const ConvSpec& deconv, double* massOut) {
    double mass = 0.0;
    for (double v : deconv.kernel.flat()) mass += v;
    if (std::abs(mass) < 1e-9)
        throw std::invalid_argument("lsp: deconvolution kernel mass is ~0");
    ConvSpec s;
    s.kernel = deconv.kernel;
    for (double& v : s.kernel.flat()) v /= mass;
    s.bias = Tensor({1});
    s.stride = 1;
    s.padding = (deconv.kernel.h() - 1) / 2;
    s.transposed = true;
    if (massOut) *massOut = mass;
    return s;
}

} // namespace

LspForward lsp_forward(const Plane& lr, const LspParams& params,
                       const DisplacementField& disp, double epsilon) {
    params.validate();
    if (epsilon <= 0.0) throw std::invalid_argument("lsp_forward: epsilon <= 0");
    LspForward out;
    LspCache& cc = out.cache;
    cc.params = params;
    cc.epsilon = epsilon;
    cc.input = plane_to_tensor(lr);
    Tensor placedPlane;
    if (params.useConv1) {
        cc.preAct = conv2d(cc.input, params.conv1);
        cc.features = relu(cc.preAct);
        placedPlane = conv2d(cc.features, params.proj);
    } else {
        placedPlane = cc.input;
    }
    cc.placedPlane = placedPlane;
    cc.placed = place_pixels(tensor_to_plane(placedPlane), disp, params.scale);
    cc.smear = unit_mass_smear(params.deconv, &cc.kernelMass);
    cc.numerator = transposed_conv2d(cc.placed.values, cc.smear);
    cc.denominator = transposed_conv2d(cc.placed.indicator, cc.smear);

    // Exact division on live cells keeps the Shepard invariants (constant
    // preservation, kernel-scaling) tight; epsilon only sets the dead-cell
    // cutoff scale.
    Tensor h = Tensor::zeros_like(cc.numerator);
    out.mask = Plane(h.h(), h.w());
    const double cutoff = 1e-4 * epsilon;
    for (int y = 0; y < h.h(); ++y)
        for (int x = 0; x < h.w(); ++x) {
            const double den = cc.denominator.at(0, 0, y, x);
            const bool live = std::abs(den) > cutoff;
            out.mask(y, x) = live ? 1.0 : 0.0;
            if (live) h.at(0, 0, y, x) = cc.numerator.at(0, 0, y, x) / den;
        }
    out.hLsp = std::move(h);
    cc.valid = true;
    return out;
}

LspGrads lsp_backward(const LspCache& cache, const Tensor& upstream) {
    if (!cache.valid)
        throw std::invalid_argument("lsp_backward: missing forward cache");
    if (!upstream.same_shape(cache.numerator))
        throw std::invalid_argument("lsp_backward: upstream " + upstream.shape_str() +
                                    " != lsp output " + cache.numerator.shape_str());
    // Dead cells emit a constant 0, so no gradient crosses them; live cells
    // differentiate the exact ratio num/den.
    Tensor gnum = Tensor::zeros_like(cache.numerator);
    Tensor gden = Tensor::zeros_like(cache.denominator);
    const double cutoff = 1e-4 * cache.epsilon;
    for (int y = 0; y < gnum.h(); ++y)
        for (int x = 0; x < gnum.w(); ++x) {
            const double den = cache.denominator.at(0, 0, y, x);
            if (std::abs(den) <= cutoff) continue;
            const double u = upstream.at(0, 0, y, x);
            gnum.at(0, 0, y, x) = u / den;
            gden.at(0, 0, y, x) = -u * cache.numerator.at(0, 0, y, x) / (den * den);
        }
    ConvGrads numG = transposed_conv2d_backward(cache.placed.values, cache.smear, gnum);
    ConvGrads denG = transposed_conv2d_backward(cache.placed.indicator, cache.smear, gden);

    // Chain through the unit-mass normalization K^ = K / mass.
    Tensor gKhat = numG.kernel;
    for (std::int64_t i = 0; i < gKhat.size(); ++i) gKhat[i] += denG.kernel[i];
    double proj = 0.0;
    for (std::int64_t i = 0; i < gKhat.size(); ++i)
        proj += gKhat[i] * cache.smear.kernel[i];
    Tensor gK = Tensor::zeros_like(gKhat);
    for (std::int64_t i = 0; i < gK.size(); ++i)
        gK[i] = (gKhat[i] - proj * cache.smear.kernel[i]) / cache.kernelMass;

    // Placement routes each splatted cell's gradient back to its LR origin.
    Tensor gPlane = Tensor::zeros_like(cache.placedPlane);
    const auto& origin = cache.placed.originCell;
    for (std::size_t i = 0; i < origin.size(); ++i)
        gPlane[static_cast<std::int64_t>(i)] = numG.input[origin[i]];

    LspGrads g;
    g.deconvKernel = std::move(gK);
    const LspParams& p = cache.params;
    if (p.useConv1) {
        ConvGrads projG = conv2d_backward(cache.features, p.proj, gPlane);
        Tensor gPre = relu_backward(cache.preAct, projG.input);
        ConvGrads conv1G = conv2d_backward(cache.input, p.conv1, gPre);
        g.projKernel = std::move(projG.kernel);
        g.projBias = std::move(projG.bias);
        g.conv1Kernel = std::move(conv1G.kernel);
        g.conv1Bias = std::move(conv1G.bias);
        g.inputGrad = std::move(conv1G.input);
    } else {
        g.projKernel = Tensor::zeros_like(p.proj.kernel);
        g.projBias = Tensor::zeros_like(p.proj.bias);
        g.conv1Kernel = Tensor::zeros_like(p.conv1.kernel);
        g.conv1Bias = Tensor::zeros_like(p.conv1.bias);
        g.inputGrad = std::move(gPlane);
    }
    return g;
}

Tensor bilinear_kernel(int scale, double phase) {
    const int k = 2 * scale + 1;
    Tensor K({1, 1, k, k});
    auto tri = [&](double t) { return std::max(0.0, 1.0 - std::abs(t + phase) / scale); };
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x)
            K.at(0, 0, y, x) = tri(y - scale) * tri(x - scale);
    return K;
}

Tensor bicubic_kernel(int scale, double phase) {
    const int r = 2 * scale, k = 4 * scale + 1;
    Tensor K({1, 1, k, k});
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x)
            K.at(0, 0, y, x) = cubic_weight((y - r + phase) / scale) *
                               cubic_weight((x - r + phase) / scale);
    return K;
}

double placement_phase(int scale) {
    const double off = (scale - 1) / 2.0;
    return std::lround(off) - off;
}

ConvSpec make_deconv_spec(Tensor kernel, int scale) {
    ConvSpec s;
    s.kernel = std::move(kernel);
    s.bias = Tensor({1});
    s.stride = scale;
    s.padding = 0;
    s.transposed = true;
    return s;
}

namespace {

struct FitState {
    std::vector<Plane> lrs;
    std::vector<Plane> hrs;
    LspParams params;
    int crop;
    double eps = 1e-8;

    // Full-batch loss and kernel gradient over the corpus.
    std::pair<double, Tensor> eval(bool wantGrad) const {
        double loss = 0.0;
        std::int64_t count = 0;
        Tensor grad = Tensor::zeros_like(params.deconv.kernel);
        for (std::size_t n = 0; n < lrs.size(); ++n) {
            DisplacementField zero{Plane::Zero(lrs[n].rows(), lrs[n].cols()),
                                   Plane::Zero(lrs[n].rows(), lrs[n].cols()), 0.0};
            LspForward f = lsp_forward(lrs[n], params, zero, eps);
            const Plane& hr = hrs[n];
            Tensor up = Tensor::zeros_like(f.hLsp);
            for (int y = crop; y < f.hLsp.h() - crop; ++y)
                for (int x = crop; x < f.hLsp.w() - crop; ++x) {
                    if (f.mask(y, x) == 0.0) continue;
                    const double d = f.hLsp.at(0, 0, y, x) - hr(y, x);
                    loss += d * d;
                    up.at(0, 0, y, x) = 2.0 * d;
                    ++count;
                }
            if (wantGrad) {
                LspGrads g = lsp_backward(f.cache, up);
                for (std::int64_t i = 0; i < grad.size(); ++i)
                    grad[i] += g.deconvKernel[i];
            }
        }
        if (count == 0) throw std::runtime_error("fit_interpolation_kernel: empty loss region");
        loss /= static_cast<double>(count);
        for (double& v : grad.flat()) v /= static_cast<double>(count);
        return {loss, std::move(grad)};
    }
};

} // namespace

KernelFitResult fit_interpolation_kernel(
    const std::vector<std::pair<Plane, Plane>>& corpus, int scale,
    const KernelFitOptions& opts) {
    if (corpus.empty())
        throw std::invalid_argument("fit_interpolation_kernel: empty corpus");
    const int ks = opts.kernelSize > 0 ? opts.kernelSize : 4 * scale + 1;
    if (ks % 2 == 0)
        throw std::invalid_argument("fit_interpolation_kernel: kernel size must be odd");

    FitState st;
    st.crop = opts.lossCrop >= 0 ? opts.lossCrop : 2 * scale;
    for (const auto& [lr, hr] : corpus) {
        if (hr.rows() != lr.rows() * scale || hr.cols() != lr.cols() * scale)
            throw std::invalid_argument("fit_interpolation_kernel: lr/hr size mismatch");
        st.lrs.push_back(lr);
        st.hrs.push_back(hr);
    }

    const double ph = placement_phase(scale);
    Tensor init = opts.initBicubic ? bicubic_kernel(scale, ph) : bilinear_kernel(scale, ph);
    if (init.h() != ks) {
        // Embed (or crop) the analytic kernel into the requested size.
        Tensor k({1, 1, ks, ks});
        const int d = (ks - init.h()) / 2;
        for (int y = 0; y < ks; ++y)
            for (int x = 0; x < ks; ++x) {
                const int sy = y - d, sx = x - d;
                k.at(0, 0, y, x) = (sy >= 0 && sy < init.h() && sx >= 0 && sx < init.w())
                                       ? init.at(0, 0, sy, sx)
                                       : 0.0;
            }
        init = std::move(k);
    }
    st.params.conv1 = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
    st.params.proj = ConvSpec{Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0, false};
    st.params.deconv = make_deconv_spec(std::move(init), scale);
    st.params.useConv1 = false;
    st.params.scale = scale;

    double lr = opts.learningRate;
    if (lr <= 0.0) {
        // Coarse range test: largest rate that still descends after a few steps.
        const auto [loss0, g0] = st.eval(true);
        lr = 1e-4;
        for (double cand = 100.0; cand >= 1e-4; cand /= 4.0) {
            Tensor saved = st.params.deconv.kernel;
            bool ok = true;
            double prev = loss0;
            for (int it = 0; it < 5 && ok; ++it) {
                auto [l, g] = st.eval(true);
                if (!std::isfinite(l) || l > prev * 1.5) ok = false;
                prev = l;
                sgd_step(st.params.deconv.kernel, g, cand);
            }
            if (ok) {
                auto [l, g] = st.eval(false);
                ok = std::isfinite(l) && l < loss0;
            }
            st.params.deconv.kernel = saved;
            if (ok) {
                lr = cand;
                break;
            }
        }
    }

    KernelFitResult res;
    for (int it = 0; it < opts.iterations; ++it) {
        auto [loss, grad] = st.eval(true);
        res.lossCurve.push_back(loss);
        sgd_step(st.params.deconv.kernel, grad, lr);
    }

    // Report corpus PSNR of the fitted kernel against the classical baseline.
    auto corpus_psnr = [&](auto&& upscale) {
        double se = 0.0;
        std::int64_t count = 0;
        for (std::size_t n = 0; n < st.lrs.size(); ++n) {
            const Plane up = upscale(st.lrs[n]);
            const Plane& hr = st.hrs[n];
            for (int y = st.crop; y < hr.rows() - st.crop; ++y)
                for (int x = st.crop; x < hr.cols() - st.crop; ++x) {
                    const double d = up(y, x) - hr(y, x);
                    se += d * d;
                    ++count;
                }
        }
        return 10.0 * std::log10(1.0 / (se / static_cast<double>(count)));
    };
    res.learnedPsnr = corpus_psnr([&](const Plane& p) {
        DisplacementField zero{Plane::Zero(p.rows(), p.cols()),
                               Plane::Zero(p.rows(), p.cols()), 0.0};
        return tensor_to_plane(lsp_forward(p, st.params, zero, st.eps).hLsp);
    });
    res.bicubicPsnr = corpus_psnr(
        [&](const Plane& p) { return classical_upscale(p, scale, ResampleMethod::Bicubic); });
    res.kernel = st.params.deconv;
    return res;
}

} // namespace lhsr
