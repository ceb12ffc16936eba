#include "lhsr/hsp.hpp"

#include <stdexcept>

namespace lhsr {

void HspParams::validate() const {
    conv.validate();
    if (conv.transposed)
        throw std::invalid_argument("HspParams: conv must not be transposed");
    if (conv.kernel.n() != 2)
        throw std::invalid_argument("HspParams: exactly 2 output channels required, got " +
                                    std::to_string(conv.kernel.n()));
}

HspForward hsp_forward(const Tensor& hLsp, const HspParams& params) {
    params.validate();
    if (hLsp.c() != params.conv.kernel.c())
        throw std::invalid_argument("hsp_forward: channel mismatch, input " +
                                    hLsp.shape_str() + " kernel " +
                                    params.conv.kernel.shape_str());
    Tensor both = conv2d(hLsp, params.conv);
    if (both.h() != hLsp.h() || both.w() != hLsp.w())
        throw std::invalid_argument("hsp_forward: padding does not preserve size");
    HspForward f;
    f.input = hLsp;
    f.yHat = Tensor({1, 1, both.h(), both.w()});
    f.bHat = Tensor({1, 1, both.h(), both.w()});
    for (int y = 0; y < both.h(); ++y)
        for (int x = 0; x < both.w(); ++x) {
            f.yHat.at(0, 0, y, x) = both.at(0, 0, y, x);
            f.bHat.at(0, 0, y, x) = both.at(0, 1, y, x);
        }
    return f;
}

HspGrads hsp_backward(const HspForward& fwd, const HspParams& params,
                      const Tensor& gradYHat, const Tensor& gradBHat) {
    if (!gradYHat.same_shape(fwd.yHat) || !gradBHat.same_shape(fwd.bHat))
        throw std::invalid_argument("hsp_backward: gradient shape mismatch");
    Tensor up({1, 2, fwd.yHat.h(), fwd.yHat.w()});
    for (int y = 0; y < up.h(); ++y)
        for (int x = 0; x < up.w(); ++x) {
            up.at(0, 0, y, x) = gradYHat.at(0, 0, y, x);
            up.at(0, 1, y, x) = gradBHat.at(0, 0, y, x);
        }
    ConvGrads g = conv2d_backward(fwd.input, params.conv, up);
    return {std::move(g.kernel), std::move(g.bias), std::move(g.input)};
}

MultiTaskLoss multitask_loss(const Tensor& yHat, const Tensor& bHat,
                             const MultiTaskTarget& target) {
    if (!yHat.same_shape(target.y) || !bHat.same_shape(target.b) ||
        !yHat.same_shape(bHat))
        throw std::invalid_argument("multitask_loss: shape mismatch");
    if (target.mask.rows() != yHat.h() || target.mask.cols() != yHat.w())
        throw std::invalid_argument("multitask_loss: mask size mismatch");
    if (target.alpha < 0.0) throw std::invalid_argument("multitask_loss: alpha < 0");

    std::int64_t count = 0;
    for (int y = 0; y < yHat.h(); ++y)
        for (int x = 0; x < yHat.w(); ++x)
            if (target.mask(y, x) != 0.0) ++count;
    if (count == 0) throw std::invalid_argument("multitask_loss: empty validity mask");

    MultiTaskLoss r;
    r.gradYHat = Tensor::zeros_like(yHat);
    r.gradBHat = Tensor::zeros_like(bHat);
    const double inv = 1.0 / static_cast<double>(count);
    for (int y = 0; y < yHat.h(); ++y)
        for (int x = 0; x < yHat.w(); ++x) {
            if (target.mask(y, x) == 0.0) continue;
            const double ey = yHat.at(0, 0, y, x) - target.y.at(0, 0, y, x);
            const double eb = bHat.at(0, 0, y, x) - target.alpha * target.b.at(0, 0, y, x);
            r.loss += (ey * ey + eb * eb) * inv;
            r.gradYHat.at(0, 0, y, x) = 2.0 * ey * inv;
            r.gradBHat.at(0, 0, y, x) = 2.0 * eb * inv;
        }
    return r;
}

PredictResult predict(const Plane& lr, const LspParams& lspParams,
                      const HspParams& hspParams, const LspConfig& config,
                      bool emitBoundary) {
    config.validate();
    if (lspParams.scale != config.scale)
        throw std::invalid_argument("predict: parameter scale " +
                                    std::to_string(lspParams.scale) +
                                    " != configured scale " +
                                    std::to_string(config.scale));
    const DisplacementField disp = compute_displacement(
        lr, config.scale, config.lambda, config.max_disp(), config.smoothSigma);
    LspForward lsp = lsp_forward(lr, lspParams, disp, config.epsilon);
    HspForward hsp = hsp_forward(lsp.hLsp, hspParams);
    PredictResult res;
    res.y = clamp01(tensor_to_plane(hsp.yHat));
    if (emitBoundary) res.boundary = clamp01(tensor_to_plane(hsp.bHat));
    return res;
}

} // namespace lhsr
