#ifndef LHSR_DATASET_HPP
#define LHSR_DATASET_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "lhsr/image.hpp"

namespace lhsr {

struct TrainingTriplet {
    Plane lr;        // (patch/scale) per side
    Plane hr;        // patch per side
    Plane boundary;  // patch per side, in [0,1]
    std::uint32_t sourceId = 0;
    int offsetRow = 0, offsetCol = 0;
};

struct DatasetManifest {
    int patchSize = 32;          // requested; rounded down to a multiple of scale
    int effectivePatchSize = 0;
    int stride = 12;
    int scale = 2;
    double blurSigma = 0.0;      // > 0 adds a blur-augmented duplicate per patch
    int blurRadius = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::uint64_t>> perSource;
    std::uint64_t baseCount = 0;   // triplets before augmentation
    std::uint64_t totalCount = 0;  // written records
    std::string to_json() const;
};

std::vector<std::pair<Plane, std::pair<int, int>>> extract_patches(const Plane& image,
                                                                   int size, int stride);

/// Boundary ground truth: aligned annotation plane when given, otherwise
/// per-image max-normalized Sobel magnitude.
Plane make_boundary_map(const Plane& hr, const std::optional<Plane>& annotation);

/// Corpus layout: corpusDir/hr/*.png|pgm, optional corpusDir/boundary/<stem>.png.
/// Writes the binary container at outPath and the manifest JSON next to it.
DatasetManifest build_dataset(const std::filesystem::path& corpusDir,
                              const std::filesystem::path& outPath,
                              DatasetManifest manifest);

struct Dataset {
    DatasetManifest manifest;
    std::vector<TrainingTriplet> triplets;
};

Dataset load_dataset(const std::filesystem::path& path);

/// Seeded epoch shuffling; the final short batch is emitted.
class BatchStream {
public:
    BatchStream(const Dataset& dataset, int batchSize, std::uint64_t seed);
    std::vector<const TrainingTriplet*> next();
    std::uint64_t epoch() const { return epoch_; }

private:
    void reshuffle();
    const Dataset& dataset_;
    int batchSize_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

} // namespace lhsr

#endif
