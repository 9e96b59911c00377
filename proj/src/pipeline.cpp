#include "igg/pipeline.hpp"

#include <cmath>

#include "igg/flow.hpp"
#include "igg/metrics.hpp"
#include "igg/registration.hpp"

namespace igg {

std::uint64_t sub_seed(std::uint64_t seed, SeedStream stream) {
    // splitmix64 finalizer over the seed and stream index
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(stream) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

GrowthDatasetConfig dataset_config(const RunConfig& cfg) {
    GrowthDatasetConfig d;
    d.grid = Grid(cfg.nx, cfg.ny);
    d.time_steps = cfg.time_steps;
    d.lobes_min = cfg.lobes_min;
    d.lobes_max = cfg.lobes_max;
    d.growth_min_percent = static_cast<int>(std::lround(100.0 * cfg.growth_min));
    d.growth_max_percent = static_cast<int>(std::lround(100.0 * cfg.growth_max));
    d.validate();
    return d;
}

PreparedSequence prepare_sequence(const Sequence& seq, const RunConfig& cfg) {
    if (seq.frames.size() < 2)
        throw DataError(seq.name + ": a sequence needs at least two frames");
    const ScalarField& first = seq.frames.front();
    const ScalarField& last = seq.frames.back();
    if (!(first.grid() == Grid(cfg.nx, cfg.ny)))
        throw DataError(seq.name + ": frame size differs from the configured grid");
    const RegistrationConfig rc = cfg.registration();

    PreparedSequence out{seq.name, seq.text, first, last, LatentGeodesic{}, 0, false, false, 1.0, 0.0};
    VectorField v0(first.grid());
    try {
        RegistrationResult r = register_images(first, last, rc);
        out.registration_iters = r.energy_history.size();
        out.converged = r.converged;
        v0 = std::move(r.v0);
    } catch (const StallError& e) {
        out.registration_iters = e.partial().energy_history.size();
        out.stalled = true;
        v0 = e.partial().v0;
    }
    out.latent = latent_shoot(encode(v0, cfg.latent()), rc.op, cfg.time_steps, rc.form);

    GeodesicPath path{cfg.time_steps, 1.0, {}, rc.op, rc.form};
    for (const auto& z : out.latent.latents)
        path.velocities.push_back(decode(z));
    const DeformationPath flow = integrate_flow(path);
    const DeformationField& phi = flow.final();
    out.min_detjac = detjac_stats(phi).min;
    out.ssim_final = ssim(warp(first, phi), last);
    return out;
}

TrainingSet build_training_set(const std::vector<Sequence>& data, const RunConfig& cfg,
                               const PrepareProgress& progress) {
    if (data.empty())
        throw DataError("training needs at least one sequence");
    TrainingSet set;
    std::vector<std::vector<double>> flats;
    for (std::size_t i = 0; i < data.size(); ++i) {
        set.sequences.push_back(prepare_sequence(data[i], cfg));
        flats.push_back(set.sequences.back().latent.flatten());
        if (progress)
            progress(i, set.sequences.back());
    }
    set.normalizer = LatentNormalizer::fit(flats);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const PreparedSequence& p = set.sequences[i];
        set.examples.push_back(
            TrainingExample{set.normalizer.normalize(flats[i]), make_condition(p.first, p.text, cfg.pool_side)});
    }
    return set;
}

DiffusionModel make_model(const RunConfig& cfg, DenoiserParams params, LatentNormalizer normalizer) {
    return DiffusionModel{cfg.latent(),       cfg.time_steps,    cfg.pool_side,
                          cfg.schedule(),     std::move(params), std::move(normalizer)};
}

TrainOutcome train_model(const std::vector<Sequence>& data, const RunConfig& cfg, const DenoiserParams* init,
                         const PrepareProgress& prepare_progress, const TrainProgress& train_progress) {
    cfg.validate();
    TrainingSet set = build_training_set(data, cfg, prepare_progress);
    const DenoiserShape shape = cfg.denoiser_shape();
    DenoiserParams start = init ? *init : DenoiserParams::init(shape, sub_seed(cfg.seed, SeedStream::Init));
    if (!(start.shape == shape))
        throw ConfigError("initial network shape does not match the configuration");
    TrainConfig tc = cfg.training();
    tc.seed = sub_seed(cfg.seed, SeedStream::Training);
    TrainResult result = train(set.examples, cfg.schedule(), tc, start, train_progress);
    DiffusionModel model = make_model(cfg, result.params, set.normalizer);
    return TrainOutcome{std::move(set), std::move(model), std::move(result)};
}

} // namespace igg
