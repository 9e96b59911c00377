#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "igg/diffusion.hpp"
#include "igg/registration.hpp"

namespace igg {

// Settings shared by the command line tools. Text form is one key=value per
// line; '#' starts a comment. Unknown keys and malformed values are rejected.
struct RunConfig {
    int nx = 32;
    int ny = 32;
    double alpha = 3.0;
    double lambda = 1e4;
    int time_steps = kDefaultTimeSteps;
    int bandlimit = kDefaultBandlimit;
    std::string integrator = "euler";
    std::string epdiff_form = "conservative";
    int reg_max_iters = 300;
    double reg_step_size = 1e-2;
    double reg_grad_tol = 1e-4;
    int diffusion_steps = kDefaultDiffusionSteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;
    double learning_rate = 1e-4;
    int batch_size = 36;
    int train_steps = 1000;
    double weight_decay = 1e-4;
    double p_uncond = 0.1;
    double snr_gamma = 5.0;
    double ema_decay = 0.999;
    std::string lr_schedule = "cosine";
    int hidden_width = kHiddenWidth;
    int hidden_layers = kHiddenLayers;
    int pool_side = kImagePoolSide;
    std::string prediction = "data";
    double delta_i = 1.5;
    double delta_t = 2.0;
    int sequences = 64;
    int lobes_min = 1;
    int lobes_max = 3;
    double growth_min = 0.05;
    double growth_max = 0.30;
    std::uint64_t seed = 0;

    void set(std::string_view key, std::string_view value);
    void validate() const;
    std::string to_text() const;
    static std::vector<std::string> keys();

    OperatorConfig op() const;
    RegistrationConfig registration() const;
    LatentConfig latent() const;
    NoiseSchedule schedule() const;
    DenoiserShape denoiser_shape() const;
    TrainConfig training() const;
    GuidanceConfig guidance() const;
};

RunConfig parse_run_config(std::string_view text, std::string_view name = "config");
RunConfig load_run_config(const std::filesystem::path& path);

// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

} // namespace igg
