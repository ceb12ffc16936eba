#ifndef LHSR_HSP_HPP
#define LHSR_HSP_HPP

#include "lhsr/image.hpp"
#include "lhsr/lsp.hpp"
#include "lhsr/tensor.hpp"

namespace lhsr {

/// Final refinement conv: channel 0 predicts the HR plane, channel 1 the
/// boundary map.
struct HspParams {
    ConvSpec conv;  // 2 x 1 x k x k, "same" padded
    void validate() const;
};

struct HspForward {
    Tensor yHat, bHat;  // each 1 x 1 x H x W
    Tensor input;       // retained for backward
};

HspForward hsp_forward(const Tensor& hLsp, const HspParams& params);

struct HspGrads {
    Tensor kernel, bias;
    Tensor inputGrad;  // gradient at hLsp
};

HspGrads hsp_backward(const HspForward& fwd, const HspParams& params,
                      const Tensor& gradYHat, const Tensor& gradBHat);

struct MultiTaskTarget {
    Tensor y;      // HR luminance patch
    Tensor b;      // boundary patch in [0,1]
    double alpha = 0.1;
    Plane mask;    // validity mask from the LSP
};

struct MultiTaskLoss {
    double loss = 0.0;
    Tensor gradYHat, gradBHat;
};

/// Mean over masked pixels of (yHat - y)^2 + (bHat - alpha*b)^2.
MultiTaskLoss multitask_loss(const Tensor& yHat, const Tensor& bHat,
                             const MultiTaskTarget& target);

struct PredictResult {
    Plane y;                    // clamped to [0,1]
    std::optional<Plane> boundary;
};

PredictResult predict(const Plane& lr, const LspParams& lspParams,
                      const HspParams& hspParams, const LspConfig& config,
                      bool emitBoundary = false);

} // namespace lhsr

#endif
