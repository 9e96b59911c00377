#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igg/flow.hpp"
#include "igg/latent.hpp"

namespace igg {

inline constexpr int kDefaultDiffusionSteps = 500;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;
inline constexpr int kImagePoolSide = 16;
inline constexpr int kTextEmbedDim = 64;
inline constexpr int kTimeEmbedDim = 64;
inline constexpr int kHiddenWidth = 512;
inline constexpr int kHiddenLayers = 3;

// Linear beta schedule. Steps are indexed tau = 1..T.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;

    static NoiseSchedule linear(int T = kDefaultDiffusionSteps, double beta_start = kDefaultBetaStart,
                                double beta_end = kDefaultBetaEnd);
    double beta_at(int tau) const;
    double alpha_bar_at(int tau) const;
};

class TrainingDivergenceError : public DivergenceError {
  public:
    using DivergenceError::DivergenceError;
};

class SamplingDivergenceError : public DivergenceError {
  public:
    using DivergenceError::DivergenceError;
};

// sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps.
std::vector<double> forward_diffuse(std::span<const double> z0, int tau, std::span<const double> eps,
                                    const NoiseSchedule& sched);

// Central-difference template gradient, average-pooled to pool_side^2 bins
// per component (x block then y block).
std::vector<double> image_embedding(const ScalarField& tmpl, int pool_side = kImagePoolSide);
// Lowercased whitespace tokens hashed (FNV-1a) into dim buckets; the count
// vector is L2-normalized. Empty text embeds to zero.
std::vector<double> text_embedding(std::string_view text, int dim = kTextEmbedDim);
// [sin(tau f_i), cos(tau f_i)] with f_i = 10000^(-i / (dim/2)).
std::vector<double> time_embedding(int tau, int dim = kTimeEmbedDim);

struct Condition {
    std::vector<double> image_embed;
    std::vector<double> text_embed;
    bool image_null = false;
    bool text_null = false;

    Condition with_nulls(bool image, bool text) const;
};

Condition make_condition(const ScalarField& tmpl, std::string_view text, int pool_side = kImagePoolSide);

// Noise: the network output is the noise estimate. Data: the network output is
// a clean-latent estimate x, turned into the noise estimate
// (z - sqrt(abar) x) / sqrt(1 - abar), which gives the output a full-rank
// path from z.
enum class Prediction { Noise, Data };

struct DenoiserShape {
    std::size_t latent_dim = 0;
    std::size_t image_dim = 0;
    std::size_t text_dim = kTextEmbedDim;
    std::size_t time_dim = kTimeEmbedDim;
    std::vector<std::size_t> hidden = std::vector<std::size_t>(kHiddenLayers, kHiddenWidth);
    Prediction prediction = Prediction::Noise;

    std::size_t condition_dim() const { return image_dim + text_dim + time_dim; }
    std::size_t input_dim() const { return latent_dim + condition_dim(); }
    void validate() const;
    bool operator==(const DenoiserShape&) const = default;
};

// Fully connected network with SiLU hidden activations and a linear output.
// Input layout: [z | image embed | text embed | time embed].
struct DenoiserParams {
    DenoiserShape shape;
    std::vector<Eigen::MatrixXd> weights;  // weights[l] is out x in
    std::vector<Eigen::VectorXd> biases;

    static DenoiserParams zeros(const DenoiserShape& shape);
    // Weights N(0, 1/fan_in), zero biases.
    static DenoiserParams init(const DenoiserShape& shape, std::uint64_t seed);

    std::size_t parameter_count() const;
    bool all_finite() const;
    double squared_norm() const;
};

// Condition and time part of the network input, with null flags applied.
Eigen::VectorXd condition_input(const Condition& cond, int tau, const DenoiserShape& shape);

// Columns are batch entries: z is latent_dim x B, cond is condition_dim x B.
// alpha_bar holds abar of each column and is required for Prediction::Data.
Eigen::MatrixXd denoise_batch(const DenoiserParams& params, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond,
                              std::span<const double> alpha_bar = {});

// The schedule is required for Prediction::Data.
std::vector<double> denoise_predict(std::span<const double> z_tau, const Condition& cond, int tau,
                                    const DenoiserParams& params, const NoiseSchedule* sched = nullptr);

struct GuidanceConfig {
    double delta_i = 1.5;
    double delta_t = 2.0;
    // Skip guidance and use the fully conditional prediction alone.
    bool conditional_only = false;
};

// (1 - dI) Z(null, null) + (dI - dT) Z(image, null) + dT Z(image, text).
std::vector<double> cfg_predict(std::span<const double> z_tau, const Condition& cond, int tau,
                                const DenoiserParams& params, const GuidanceConfig& g,
                                const NoiseSchedule* sched = nullptr);

// Mean squared error over all entries plus weight_decay * |theta|^2, and its
// gradient with respect to every parameter. Optional column_weight scales
// each column's squared error.
struct LossGradient {
    double loss = 0.0;
    DenoiserParams gradient;
};
LossGradient loss_and_gradient(const DenoiserParams& params, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond,
                               const Eigen::MatrixXd& target_eps, double weight_decay,
                               std::span<const double> alpha_bar = {},
                               std::span<const double> column_weight = {});

// min(SNR, gamma) / SNR with SNR = abar / (1 - abar); gamma <= 0 gives 1.
double min_snr_weight(double alpha_bar, double gamma);

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 36;
    int steps = 1000;
    double weight_decay = 1e-4;
    double p_uncond = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int validation_size = 36;
    double snr_gamma = 0.0;  // min-SNR loss weighting, 0 disables
    double ema_decay = 0.0;  // returned weights are the EMA when > 0
    bool cosine_decay = false;  // learning rate follows a half cosine to 0
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainingExample {
    std::vector<double> latent;  // flattened, normalized latent geodesic
    Condition cond;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_log;  // training loss per step
    double validation_start = 0.0;
    double validation_end = 0.0;
};

using TrainProgress = std::function<void(int step, double loss)>;

// Adam on the noise-prediction loss. Each batch entry draws its example and
// tau uniformly, and drops the image and text conditions independently with
// probability p_uncond. The validation batch is drawn once from a separate
// stream and evaluated without condition dropout.
TrainResult train(const std::vector<TrainingExample>& data, const NoiseSchedule& sched, const TrainConfig& cfg,
                  DenoiserParams init, const TrainProgress& progress = {});

// Ancestral sampling for a batch of conditions, one RNG stream per column
// seeded by seeds[j]. Each stream draws z_T, then one noise vector for each
// tau = T..2, in that order, all from std::normal_distribution over
// std::mt19937_64. Returns latent_dim x B.
Eigen::MatrixXd sample_latents(const std::vector<Condition>& conds, const std::vector<std::uint64_t>& seeds,
                               const DenoiserParams& params, const NoiseSchedule& sched, const GuidanceConfig& g);

// Per-coordinate affine map applied to flattened latents before diffusion.
struct LatentNormalizer {
    std::vector<double> mean;
    std::vector<double> scale;

    // Scale is the population std, floored at 1e-12 times the largest std.
    static LatentNormalizer fit(const std::vector<std::vector<double>>& latents);
    static LatentNormalizer identity(std::size_t dim);
    std::vector<double> normalize(std::span<const double> z) const;
    std::vector<double> denormalize(std::span<const double> z) const;
};

// Everything needed to sample: codec, time discretization, schedule,
// network and latent normalization.
struct DiffusionModel {
    LatentConfig latent;
    int time_steps = kDefaultTimeSteps;
    int pool_side = kImagePoolSide;
    NoiseSchedule schedule;
    DenoiserParams params;
    LatentNormalizer normalizer;
};

struct SampleResult {
    LatentGeodesic latent;
    GeodesicPath path;
    DeformationPath deformation;
    std::vector<ScalarField> frames;  // template warped by phi_t, t = 0..N_t
    ScalarField detjac;
};

std::vector<SampleResult> sample(const std::vector<ScalarField>& templates, const std::vector<std::string>& texts,
                                 const DiffusionModel& model, const GuidanceConfig& g,
                                 const std::vector<std::uint64_t>& seeds);

SampleResult sample(const ScalarField& tmpl, const std::string& text, const DiffusionModel& model,
                    const GuidanceConfig& g, std::uint64_t seed);

} // namespace igg
