#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "igg/config.hpp"
#include "igg/dataset.hpp"
#include "igg/diffusion.hpp"

namespace igg {

// Independent seeds for each stage, derived from one global seed.
enum class SeedStream : std::uint64_t { Data = 1, Init = 2, Training = 3, Sampling = 4 };
std::uint64_t sub_seed(std::uint64_t seed, SeedStream stream);

GrowthDatasetConfig dataset_config(const RunConfig& cfg);

// Registration of (first frame, last frame) followed by latent shooting.
struct PreparedSequence {
    std::string name;
    std::string text;
    ScalarField first;
    ScalarField last;
    LatentGeodesic latent;
    std::size_t registration_iters = 0;
    bool converged = false;
    bool stalled = false;
    double min_detjac = 1.0;
    double ssim_final = 0.0;
};

PreparedSequence prepare_sequence(const Sequence& seq, const RunConfig& cfg);

struct TrainingSet {
    std::vector<PreparedSequence> sequences;
    LatentNormalizer normalizer;
    std::vector<TrainingExample> examples;
};

using PrepareProgress = std::function<void(std::size_t index, const PreparedSequence& item)>;
TrainingSet build_training_set(const std::vector<Sequence>& data, const RunConfig& cfg,
                               const PrepareProgress& progress = {});

DiffusionModel make_model(const RunConfig& cfg, DenoiserParams params, LatentNormalizer normalizer);

// Registration, latent preparation and diffusion training in one call.
struct TrainOutcome {
    TrainingSet set;
    DiffusionModel model;
    TrainResult result;
};
TrainOutcome train_model(const std::vector<Sequence>& data, const RunConfig& cfg,
                         const DenoiserParams* init = nullptr, const PrepareProgress& prepare_progress = {},
                         const TrainProgress& train_progress = {});

} // namespace igg
