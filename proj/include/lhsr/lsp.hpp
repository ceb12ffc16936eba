#ifndef LHSR_LSP_HPP
#define LHSR_LSP_HPP

#include <cstdint>
#include <vector>

#include "lhsr/image.hpp"
#include "lhsr/tensor.hpp"

namespace lhsr {

struct LspConfig {
    int scale = 2;
    bool useConv1 = true;
    int featureMaps = 32;
    int conv1Kernel = 5;          // "same" padded
    int deconvKernel = 0;         // 0 -> 2*scale + 1
    double lambda = 0.3;          // displacement strength
    double maxDisp = -1.0;        // HR cells; <0 -> 0.45*scale
    double smoothSigma = 1.0;     // gradient-magnitude smoothing
    double epsilon = 1e-8;        // Shepard division guard

    int deconv_kernel() const { return deconvKernel > 0 ? deconvKernel : 2 * scale + 1; }
    double max_disp() const { return maxDisp >= 0.0 ? maxDisp : 0.45 * scale; }
    void validate() const;
};

/// Learnable LSP weights: feature conv, 1x1 projection to the placed plane,
/// and the shared interpolation kernel applied to values and indicator.
/// deconv.bias stays at zero; a bias inside the Shepard ratio would break
/// its homogeneity.
struct LspParams {
    ConvSpec conv1;    // F x 1 x k x k, pad (k-1)/2
    ConvSpec proj;     // 1 x F x 1 x 1
    ConvSpec deconv;   // 1 x 1 x kd x kd, transposed, stride = scale
    bool useConv1 = true;
    int scale = 2;
    void validate() const;
};

/// Per-LR-pixel displacement in HR-grid units.
struct DisplacementField {
    Plane dx, dy;
    double maxDisplacement = 0.0;
};

DisplacementField compute_displacement(const Plane& lr, int scale, double lambda,
                                       double maxDisp, double smoothSigma = 1.0);

/// Splatted HR grid: accumulated values, per-cell placement counts, and the
/// HR cell each LR pixel landed in (needed to route gradients back).
struct PlacedGrid {
    Tensor values;                      // 1 x 1 x H*s x W*s
    Tensor indicator;                   // same shape, counts >= 0
    std::vector<std::int64_t> originCell;  // lr row-major index -> hr flat index
};

PlacedGrid place_pixels(const Plane& plane, const DisplacementField& disp, int scale);

struct LspCache {
    Tensor input;        // 1 x 1 x h x w
    Tensor preAct;       // conv1 output before relu
    Tensor features;     // after relu
    Tensor placedPlane;  // 1 x 1 x h x w, the projected intensity carrier
    PlacedGrid placed;
    ConvSpec smear;      // unit-mass kernel, stride 1, applied on the HR grid
    double kernelMass = 0.0;
    Tensor numerator, denominator;
    LspParams params;
    double epsilon = 0.0;
    bool valid = false;
};

struct LspForward {
    Tensor hLsp;   // 1 x 1 x h*s x w*s
    Plane mask;    // 1 where the deconvolved indicator is nonzero
    LspCache cache;
};

LspForward lsp_forward(const Plane& lr, const LspParams& params,
                       const DisplacementField& disp, double epsilon);

struct LspGrads {
    Tensor conv1Kernel, conv1Bias;
    Tensor projKernel, projBias;
    Tensor deconvKernel;
    Tensor inputGrad;   // gradient at the LR input / placed plane
};

LspGrads lsp_backward(const LspCache& cache, const Tensor& upstream);

/// Separable triangle kernel reproducing bilinear interpolation on the placed
/// lattice (1 x 1 x (2s+1) x (2s+1)). `phase` shifts the sampling points by a
/// fraction of an HR cell.
Tensor bilinear_kernel(int scale, double phase = 0.0);
/// Separable Catmull-Rom kernel, radius 2s (1 x 1 x (4s+1) x (4s+1)).
Tensor bicubic_kernel(int scale, double phase = 0.0);
/// Rounding error of the placed lattice: placed cell minus true center-aligned
/// LR sample position, in HR cells (0.5 for even scales, 0 for odd). Kernels
/// built with this phase make the Shepard interpolation reproduce the
/// center-aligned classical resampler.
double placement_phase(int scale);

ConvSpec make_deconv_spec(Tensor kernel, int scale);

struct KernelFitOptions {
    int kernelSize = 0;        // 0 -> 4*scale + 1
    int iterations = 400;
    double learningRate = 0.0; // 0 -> auto range test
    int lossCrop = -1;         // <0 -> 2*scale
    bool initBicubic = true;   // else bilinear
};

struct KernelFitResult {
    ConvSpec kernel;
    double learnedPsnr = 0.0;  // training-corpus PSNR of the fitted kernel
    double bicubicPsnr = 0.0;  // same protocol, classical bicubic
    std::vector<double> lossCurve;
};

KernelFitResult fit_interpolation_kernel(
    const std::vector<std::pair<Plane, Plane>>& corpus, int scale,
    const KernelFitOptions& opts = {});

} // namespace lhsr

#endif
