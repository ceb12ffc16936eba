#ifndef LHSR_TRAIN_HPP
#define LHSR_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lhsr/dataset.hpp"
#include "lhsr/hsp.hpp"
#include "lhsr/lsp.hpp"
#include "lhsr/params_io.hpp"

namespace lhsr {

enum class InitMode { Random, InterpolationIdentity };

struct TrainConfig {
    int scale = 2;
    int batchSize = 32;
    double learningRate = 1e-3;  // <= 0 -> pick by the built-in range test
    int maxIterations = 1000;
    double alpha = 0.1;

    // placement
    double lambda = 0.3;
    double maxDisp = -1.0;
    double smoothSigma = 1.0;
    double epsilon = 1e-8;

    // architecture
    bool useConv1 = true;
    int featureMaps = 32;
    int conv1Kernel = 5;
    int deconvKernel = 0;  // 0 -> 2*scale + 1
    int hspKernel = 5;

    InitMode init = InitMode::InterpolationIdentity;
    bool identityInitBicubic = false;  // identity init kernel: bilinear or bicubic

    bool freezeBoundary = false;  // boundary head pinned at zero
    bool singleTask = false;      // plain MSE objective, boundary head untouched
    bool sumLoss = false;         // per-sample sum instead of mean reduction

    int evalEvery = 0;  // 0 -> no validation passes
    int lossBorderCrop = -1;  // <0 -> scale
    std::uint64_t seed = 0;
    std::filesystem::path checkpointPath;  // empty -> no checkpoints
    int checkpointEvery = 1000;

    LspConfig lsp_config() const;
    void validate() const;
    std::string echo() const;
};

struct TrainLogEntry {
    std::uint64_t iteration = 0;
    double loss = 0.0;
    double valPsnr = std::nan("");
    double valSsim = std::nan("");
    std::int64_t wallMs = 0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    std::string to_csv() const;
    /// CSV without the wall-clock column; bit-stable across runs.
    std::string to_csv_deterministic() const;
};

std::pair<LspParams, HspParams> init_params(const TrainConfig& config, InitMode mode);

struct TrainResult {
    LspParams lsp;
    HspParams hsp;
    TrainLog log;
};

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const std::vector<const TrainingTriplet*>* valSet = nullptr,
                  const Checkpoint* resume = nullptr);

/// Largest rate in a geometric grid that still descends on a fixed batch.
double lr_range_test(const Dataset& dataset, TrainConfig config);

/// Paired runs: configured alpha vs alpha = 0 with the boundary head frozen.
std::pair<TrainResult, TrainResult> ablate_hsp(const Dataset& dataset,
                                               const TrainConfig& config,
                                               const std::vector<const TrainingTriplet*>* valSet = nullptr);

} // namespace lhsr

#endif
