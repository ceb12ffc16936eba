#ifndef LHSR_METRICS_HPP
#define LHSR_METRICS_HPP

#include <functional>
#include <string>
#include <vector>

#include "lhsr/image.hpp"

namespace lhsr {

inline constexpr double kPsnrSentinelDb = 100.0;

/// 10*log10(1/MSE) over the crop interior; capped at the sentinel for
/// (near-)identical images.
double psnr(const Plane& a, const Plane& b, int borderCrop);

/// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03,
/// dynamic range 1.0; mean over fully-valid window positions inside the crop.
double ssim(const Plane& a, const Plane& b, int borderCrop);

struct EvalRecord {
    std::string name;
    int scale = 0;
    std::string method;
    double psnrDb = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double meanPsnr = 0.0;
    double meanSsim = 0.0;
    void recompute_aggregates();
};

using Upscaler = std::function<Plane(const Plane& lr)>;

struct EvalOptions {
    int borderCrop = -1;      // <0 -> scale
    bool quantize = true;     // measure on 8-bit-quantized outputs
    double blurSigma = 0.0;   // degradation blur
    int threads = 1;          // per-image parallelism; record order stays fixed
};

EvalReport evaluate_method(const std::filesystem::path& testDir,
                           const Upscaler& upscaler, const std::string& methodName,
                           int scale, const EvalOptions& opts = {});

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& csv);
std::string report_table(const std::vector<EvalReport>& reports);

} // namespace lhsr

#endif
