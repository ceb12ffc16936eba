#ifndef LHSR_IMAGE_HPP
#define LHSR_IMAGE_HPP

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "lhsr/tensor.hpp"

namespace lhsr {

/// Row-major image plane, values nominally in [0,1].
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ResampleMethod { Bilinear, Bicubic };

struct DegradeSpec {
    int scale = 2;                 // one of {2,3,4}
    double blurSigma = 0.0;        // 0 disables blur
    int blurKernelRadius = 0;      // 0 -> ceil(3*sigma)
    void validate() const;
};

/// Loaded image: luminance working plane plus retained chroma (if RGB source).
struct LoadedImage {
    Plane y;
    std::optional<Plane> cb, cr;   // full-range BT.601, 0.5 = neutral
};

LoadedImage load_image(const std::filesystem::path& path);
void save_image_gray(const std::filesystem::path& path, const Plane& y);
void save_image_color(const std::filesystem::path& path, const Plane& y,
                      const Plane& cb, const Plane& cr);

// Full-range BT.601. rgb/ycbcr components in [0,1]; cb/cr centered at 0.5.
std::array<double, 3> rgb_to_ycbcr(double r, double g, double b);
std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr);

/// round(v*255) clamped to [0,255] -- the on-disk quantization.
std::uint8_t quantize8(double v);
Plane quantize_plane(const Plane& p);

Plane crop_to_multiple(const Plane& img, int scale);
Plane degrade(const Plane& hr, const DegradeSpec& spec);

/// Separable fixed-kernel upscale (Eq.-1-style weighted sums), center-aligned
/// sampling: HR pixel j reads LR coordinate (j+0.5)/s - 0.5.  gridOffset
/// overrides the phase so output can be compared against interpolation on an
/// integer-rounded source lattice (LR i at HR i*s + gridOffset).
Plane classical_upscale(const Plane& lr, int scale, ResampleMethod method);
Plane classical_upscale(const Plane& lr, int scale, ResampleMethod method,
                        double gridOffset);

Plane gaussian_blur(const Plane& img, double sigma, int radius = 0);

struct SobelResult {
    Plane gx, gy, magnitude;
};
SobelResult sobel_gradients(const Plane& img);

// Cubic convolution weight, a = -0.5 (Catmull-Rom).
double cubic_weight(double t);

Plane clamp01(const Plane& p);
Plane tensor_to_plane(const Tensor& t);  // 1x1xHxW view
Tensor plane_to_tensor(const Plane& p);

} // namespace lhsr

#endif
