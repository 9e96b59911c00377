#include "igg/diffusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace igg {

namespace {

Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
    return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Eigen::MatrixXd silu_derivative(const Eigen::MatrixXd& x) {
    return x.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
    });
}

// Pre-activation of the first layer, split into latent and condition parts so
// the latent product can be shared between guidance evaluations.
Eigen::MatrixXd latent_preactivation(const DenoiserParams& p, const Eigen::MatrixXd& z) {
    return p.weights[0].leftCols(static_cast<Eigen::Index>(p.shape.latent_dim)) * z;
}

Eigen::MatrixXd finish_forward(const DenoiserParams& p, const Eigen::MatrixXd& z_part, const Eigen::MatrixXd& cond) {
    Eigen::MatrixXd pre = z_part;
    pre.noalias() += p.weights[0].rightCols(static_cast<Eigen::Index>(p.shape.condition_dim())) * cond;
    pre.colwise() += p.biases[0];
    Eigen::MatrixXd a = silu(pre);
    for (std::size_t l = 1; l < p.weights.size(); ++l) {
        pre.noalias() = p.weights[l] * a;
        pre.colwise() += p.biases[l];
        if (l + 1 < p.weights.size())
            a = silu(pre);
    }
    return pre;
}

void check_batch(const DenoiserParams& p, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond) {
    if (static_cast<std::size_t>(z.rows()) != p.shape.latent_dim ||
        static_cast<std::size_t>(cond.rows()) != p.shape.condition_dim() || z.cols() != cond.cols()) {
        throw ShapeError("denoiser: batch of " + std::to_string(z.rows()) + "+" + std::to_string(cond.rows()) +
                         " rows does not match network input " + std::to_string(p.shape.latent_dim) + "+" +
                         std::to_string(p.shape.condition_dim()));
    }
}

std::vector<std::size_t> layer_sizes(const DenoiserShape& s) {
    std::vector<std::size_t> sizes{s.input_dim()};
    sizes.insert(sizes.end(), s.hidden.begin(), s.hidden.end());
    sizes.push_back(s.latent_dim);
    return sizes;
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Per-column gains (z gain, network gain) of the output map.
std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> output_gains(Eigen::Index cols, std::span<const double> alpha_bar) {
    if (alpha_bar.size() != static_cast<std::size_t>(cols))
        throw ConfigError("data-predicting denoiser needs abar for every batch column");
    Eigen::RowVectorXd zg(cols), ng(cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const double a = alpha_bar[static_cast<std::size_t>(j)];
        if (!(a > 0.0 && a < 1.0))
            throw ConfigError("abar must lie in (0, 1)");
        zg[j] = 1.0 / std::sqrt(1.0 - a);
        ng[j] = -std::sqrt(a) / std::sqrt(1.0 - a);
    }
    return {zg, ng};
}

Eigen::MatrixXd to_noise(const DenoiserParams& p, Eigen::MatrixXd out, const Eigen::MatrixXd& z,
                         std::span<const double> alpha_bar) {
    if (p.shape.prediction == Prediction::Noise)
        return out;
    const auto [zg, ng] = output_gains(z.cols(), alpha_bar);
    return z * zg.asDiagonal() + out * ng.asDiagonal();
}

Eigen::MatrixXd guided(const DenoiserParams& p, const Eigen::MatrixXd& z, const Eigen::MatrixXd& c_full,
                       const Eigen::MatrixXd& c_image, const Eigen::MatrixXd& c_none, const GuidanceConfig& g,
                       std::span<const double> alpha_bar) {
    const Eigen::MatrixXd zp = latent_preactivation(p, z);
    const Eigen::MatrixXd full = to_noise(p, finish_forward(p, zp, c_full), z, alpha_bar);
    if (g.conditional_only)
        return full;
    const Eigen::MatrixXd image = to_noise(p, finish_forward(p, zp, c_image), z, alpha_bar);
    const Eigen::MatrixXd none = to_noise(p, finish_forward(p, zp, c_none), z, alpha_bar);
    return (1.0 - g.delta_i) * none + (g.delta_i - g.delta_t) * image + g.delta_t * full;
}

} // namespace

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1)
        throw ConfigError("noise schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1");
    NoiseSchedule s{T, beta_start, beta_end, {}, {}};
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
        prod *= 1.0 - s.beta[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

double NoiseSchedule::beta_at(int tau) const {
    if (tau < 1 || tau > T)
        throw ConfigError("diffusion step " + std::to_string(tau) + " outside 1.." + std::to_string(T));
    return beta[static_cast<std::size_t>(tau - 1)];
}

double NoiseSchedule::alpha_bar_at(int tau) const {
    if (tau < 1 || tau > T)
        throw ConfigError("diffusion step " + std::to_string(tau) + " outside 1.." + std::to_string(T));
    return alpha_bar[static_cast<std::size_t>(tau - 1)];
}

std::vector<double> forward_diffuse(std::span<const double> z0, int tau, std::span<const double> eps,
                                    const NoiseSchedule& sched) {
    if (z0.size() != eps.size())
        throw ShapeError("forward_diffuse: noise and latent sizes differ");
    const double ab = sched.alpha_bar_at(tau);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<double> out(z0.size());
    for (std::size_t i = 0; i < z0.size(); ++i)
        out[i] = a * z0[i] + b * eps[i];
    return out;
}

std::vector<double> image_embedding(const ScalarField& tmpl, int pool_side) {
    const Grid& g = tmpl.grid();
    if (pool_side < 1 || pool_side > g.nx || pool_side > g.ny)
        throw ConfigError("image pool side " + std::to_string(pool_side) + " does not fit the grid");
    const VectorField grad = gradient(tmpl);
    const std::size_t bins = static_cast<std::size_t>(pool_side) * pool_side;
    std::vector<double> out(2 * bins, 0.0);
    std::vector<int> counts(bins, 0);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const std::size_t bin = static_cast<std::size_t>(iy * pool_side / g.ny) * pool_side + ix * pool_side / g.nx;
            out[bin] += grad.x().at(ix, iy);
            out[bins + bin] += grad.y().at(ix, iy);
            ++counts[bin];
        }
    }
    for (std::size_t b = 0; b < bins; ++b) {
        out[b] /= counts[b];
        out[bins + b] /= counts[b];
    }
    return out;
}

std::vector<double> text_embedding(std::string_view text, int dim) {
    if (dim < 1)
        throw ConfigError("text embedding dimension must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
        if (i == text.size())
            break;
        std::uint64_t h = 14695981039346656037ull;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(text[i])));
            h *= 1099511628211ull;
            ++i;
        }
        out[h % static_cast<std::uint64_t>(dim)] += 1.0;
    }
    double norm = 0.0;
    for (double v : out)
        norm += v * v;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (auto& v : out)
            v /= norm;
    }
    return out;
}

std::vector<double> time_embedding(int tau, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw ConfigError("time embedding dimension must be even and >= 2");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double f = std::pow(10000.0, -static_cast<double>(i) / half);
        out[i] = std::sin(tau * f);
        out[half + i] = std::cos(tau * f);
    }
    return out;
}

Condition Condition::with_nulls(bool image, bool text) const {
    Condition c = *this;
    c.image_null = image;
    c.text_null = text;
    return c;
}

Condition make_condition(const ScalarField& tmpl, std::string_view text, int pool_side) {
    return Condition{image_embedding(tmpl, pool_side), text_embedding(text), false, false};
}

void DenoiserShape::validate() const {
    if (latent_dim == 0)
        throw ConfigError("denoiser latent dimension must be positive");
    if (time_dim < 2 || time_dim % 2 != 0)
        throw ConfigError("denoiser time embedding dimension must be even and >= 2");
    if (hidden.empty())
        throw ConfigError("denoiser needs at least one hidden layer");
    for (std::size_t w : hidden)
        if (w == 0)
            throw ConfigError("denoiser hidden widths must be positive");
}

DenoiserParams DenoiserParams::zeros(const DenoiserShape& shape) {
    shape.validate();
    DenoiserParams p{shape, {}, {}};
    const auto sizes = layer_sizes(shape);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        p.weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes[l + 1]),
                                                  static_cast<Eigen::Index>(sizes[l])));
        p.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[l + 1])));
    }
    return p;
}

DenoiserParams DenoiserParams::init(const DenoiserShape& shape, std::uint64_t seed) {
    DenoiserParams p = zeros(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& w : p.weights) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                w(i, j) = scale * dist(rng);
    }
    return p;
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

bool DenoiserParams::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite())
            return false;
    return true;
}

double DenoiserParams::squared_norm() const {
    double s = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        s += weights[l].squaredNorm() + biases[l].squaredNorm();
    return s;
}

Eigen::VectorXd condition_input(const Condition& cond, int tau, const DenoiserShape& shape) {
    if (cond.image_embed.size() != shape.image_dim || cond.text_embed.size() != shape.text_dim) {
        throw ShapeError("condition embeddings (" + std::to_string(cond.image_embed.size()) + ", " +
                         std::to_string(cond.text_embed.size()) + ") do not match the denoiser (" +
                         std::to_string(shape.image_dim) + ", " + std::to_string(shape.text_dim) + ")");
    }
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.condition_dim()));
    const auto image = static_cast<Eigen::Index>(shape.image_dim);
    const auto text = static_cast<Eigen::Index>(shape.text_dim);
    if (!cond.image_null)
        c.head(image) = as_vector(cond.image_embed);
    if (!cond.text_null)
        c.segment(image, text) = as_vector(cond.text_embed);
    const std::vector<double> t = time_embedding(tau, static_cast<int>(shape.time_dim));
    c.tail(static_cast<Eigen::Index>(shape.time_dim)) = as_vector(t);
    return c;
}

Eigen::MatrixXd denoise_batch(const DenoiserParams& params, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond,
                              std::span<const double> alpha_bar) {
    check_batch(params, z, cond);
    return to_noise(params, finish_forward(params, latent_preactivation(params, z), cond), z, alpha_bar);
}

namespace {

std::vector<double> schedule_alpha_bar(const DenoiserParams& params, const NoiseSchedule* sched, int tau) {
    if (params.shape.prediction == Prediction::Noise)
        return {};
    if (!sched)
        throw ConfigError("data-predicting denoiser needs the noise schedule");
    return {sched->alpha_bar_at(tau)};
}

} // namespace

std::vector<double> denoise_predict(std::span<const double> z_tau, const Condition& cond, int tau,
                                    const DenoiserParams& params, const NoiseSchedule* sched) {
    if (z_tau.size() != params.shape.latent_dim)
        throw ShapeError("denoise_predict: latent size does not match the denoiser");
    const Eigen::MatrixXd out = denoise_batch(params, as_vector(z_tau), condition_input(cond, tau, params.shape),
                                              schedule_alpha_bar(params, sched, tau));
    return std::vector<double>(out.data(), out.data() + out.size());
}

std::vector<double> cfg_predict(std::span<const double> z_tau, const Condition& cond, int tau,
                                const DenoiserParams& params, const GuidanceConfig& g, const NoiseSchedule* sched) {
    if (z_tau.size() != params.shape.latent_dim)
        throw ShapeError("cfg_predict: latent size does not match the denoiser");
    const Eigen::MatrixXd z = as_vector(z_tau);
    const Eigen::MatrixXd out = guided(params, z, condition_input(cond, tau, params.shape),
                                       condition_input(cond.with_nulls(cond.image_null, true), tau, params.shape),
                                       condition_input(cond.with_nulls(true, true), tau, params.shape), g,
                                       schedule_alpha_bar(params, sched, tau));
    return std::vector<double>(out.data(), out.data() + out.size());
}

LossGradient loss_and_gradient(const DenoiserParams& params, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond,
                               const Eigen::MatrixXd& target_eps, double weight_decay,
                               std::span<const double> alpha_bar, std::span<const double> column_weight) {
    check_batch(params, z, cond);
    if (!column_weight.empty() && column_weight.size() != static_cast<std::size_t>(z.cols()))
        throw ShapeError("loss_and_gradient: column weights do not match the batch");
    if (target_eps.rows() != z.rows() || target_eps.cols() != z.cols())
        throw ShapeError("loss_and_gradient: target shape does not match the batch");
    const std::size_t layers = params.weights.size();
    std::vector<Eigen::MatrixXd> inputs(layers), pre(layers);
    inputs[0].resize(z.rows() + cond.rows(), z.cols());
    inputs[0] << z, cond;
    for (std::size_t l = 0; l < layers; ++l) {
        pre[l].noalias() = params.weights[l] * inputs[l];
        pre[l].colwise() += params.biases[l];
        if (l + 1 < layers)
            inputs[l + 1] = silu(pre[l]);
    }
    const double count = static_cast<double>(target_eps.size());
    const bool data = params.shape.prediction == Prediction::Data;
    Eigen::RowVectorXd net_gain;
    Eigen::MatrixXd residual;
    if (data) {
        const auto gains = output_gains(z.cols(), alpha_bar);
        net_gain = gains.second;
        residual = z * gains.first.asDiagonal() + pre.back() * net_gain.asDiagonal() - target_eps;
    } else {
        residual = pre.back() - target_eps;
    }

    Eigen::MatrixXd delta = (2.0 / count) * residual;
    double sq = 0.0;
    if (column_weight.empty()) {
        sq = residual.squaredNorm();
    } else {
        const auto w = as_vector(column_weight);
        sq = residual.colwise().squaredNorm().dot(w);
        delta = delta * w.asDiagonal();
    }
    LossGradient out{sq / count + weight_decay * params.squared_norm(), DenoiserParams::zeros(params.shape)};
    if (data)
        delta = delta * net_gain.asDiagonal();
    for (std::size_t l = layers; l-- > 0;) {
        out.gradient.weights[l].noalias() = delta * inputs[l].transpose();
        out.gradient.weights[l] += 2.0 * weight_decay * params.weights[l];
        out.gradient.biases[l] = delta.rowwise().sum() + 2.0 * weight_decay * params.biases[l];
        if (l > 0) {
            Eigen::MatrixXd back = params.weights[l].transpose() * delta;
            delta = back.cwiseProduct(silu_derivative(pre[l - 1]));
        }
    }
    return out;
}

double min_snr_weight(double alpha_bar, double gamma) {
    if (gamma <= 0.0)
        return 1.0;
    const double snr = alpha_bar / (1.0 - alpha_bar);
    return std::min(snr, gamma) / snr;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be finite and >= 0");
    if (batch_size < 1)
        throw ConfigError("batch size must be >= 1");
    if (steps < 0)
        throw ConfigError("training steps must be >= 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("weight decay must be >= 0");
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0))
        throw ConfigError("p_uncond must lie in [0, 1]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0))
        throw ConfigError("invalid Adam constants");
    if (validation_size < 1)
        throw ConfigError("validation size must be >= 1");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0))
        throw ConfigError("ema decay must lie in [0, 1)");
    if (!(snr_gamma >= 0.0) || !std::isfinite(snr_gamma))
        throw ConfigError("snr gamma must be finite and >= 0");
}

namespace {

struct Batch {
    Eigen::MatrixXd z;
    Eigen::MatrixXd cond;
    Eigen::MatrixXd eps;
    std::vector<double> alpha_bar;
    std::vector<double> weight;
};

Batch draw_batch(const std::vector<TrainingExample>& data, const NoiseSchedule& sched, const DenoiserShape& shape,
                 int size, double p_uncond, double snr_gamma, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::uniform_int_distribution<int> step(1, sched.T);
    std::bernoulli_distribution drop(p_uncond);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(shape.latent_dim);
    Batch b{Eigen::MatrixXd(d, size), Eigen::MatrixXd(static_cast<Eigen::Index>(shape.condition_dim()), size),
            Eigen::MatrixXd(d, size), {}, {}};
    for (int j = 0; j < size; ++j) {
        const TrainingExample& ex = data[pick(rng)];
        const int tau = step(rng);
        const bool drop_image = p_uncond > 0.0 && drop(rng);
        const bool drop_text = p_uncond > 0.0 && drop(rng);
        for (Eigen::Index i = 0; i < d; ++i)
            b.eps(i, j) = normal(rng);
        b.alpha_bar.push_back(sched.alpha_bar_at(tau));
        b.weight.push_back(min_snr_weight(sched.alpha_bar_at(tau), snr_gamma));
        const double a = std::sqrt(sched.alpha_bar_at(tau)), s = std::sqrt(1.0 - sched.alpha_bar_at(tau));
        for (Eigen::Index i = 0; i < d; ++i)
            b.z(i, j) = a * ex.latent[static_cast<std::size_t>(i)] + s * b.eps(i, j);
        b.cond.col(j) = condition_input(ex.cond.with_nulls(ex.cond.image_null || drop_image,
                                                           ex.cond.text_null || drop_text),
                                        tau, shape);
    }
    return b;
}

} // namespace

TrainResult train(const std::vector<TrainingExample>& data, const NoiseSchedule& sched, const TrainConfig& cfg,
                  DenoiserParams init, const TrainProgress& progress) {
    cfg.validate();
    if (data.empty())
        throw DataError("train: empty dataset");
    for (const auto& ex : data) {
        if (ex.latent.size() != init.shape.latent_dim)
            throw ShapeError("train: example latent size does not match the denoiser");
    }

    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 val_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    const Batch val = draw_batch(data, sched, init.shape, cfg.validation_size, 0.0, cfg.snr_gamma, val_rng);
    auto validation_loss = [&](const DenoiserParams& p) {
        const Eigen::MatrixXd r = denoise_batch(p, val.z, val.cond, val.alpha_bar) - val.eps;
        return r.colwise().squaredNorm().dot(as_vector(val.weight)) / static_cast<double>(val.eps.size());
    };

    TrainResult result{std::move(init), {}, 0.0, 0.0};
    DenoiserParams& p = result.params;
    result.validation_start = validation_loss(p);
    DenoiserParams m = DenoiserParams::zeros(p.shape), v = DenoiserParams::zeros(p.shape);
    std::optional<DenoiserParams> ema;
    if (cfg.ema_decay > 0.0)
        ema = p;
    double b1t = 1.0, b2t = 1.0;
    result.loss_log.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 1; step <= cfg.steps; ++step) {
        const Batch b = draw_batch(data, sched, p.shape, cfg.batch_size, cfg.p_uncond, cfg.snr_gamma, rng);
        const LossGradient lg = loss_and_gradient(p, b.z, b.cond, b.eps, cfg.weight_decay, b.alpha_bar, b.weight);
        if (!std::isfinite(lg.loss))
            throw TrainingDivergenceError("train: non-finite loss at step " + std::to_string(step), step);
        b1t *= cfg.adam_beta1;
        b2t *= cfg.adam_beta2;
        const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
        const double lr = cfg.cosine_decay ? 0.5 * cfg.learning_rate *
                                                 (1.0 + std::cos(std::numbers::pi * (step - 1) / cfg.steps))
                                           : cfg.learning_rate;
        auto update = [&](auto& theta, auto& mm, auto& vv, const auto& g) {
            mm = cfg.adam_beta1 * mm + (1.0 - cfg.adam_beta1) * g;
            vv = cfg.adam_beta2 * vv + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
            theta.array() -= lr * (mm.array() * c1) / ((vv.array() * c2).sqrt() + cfg.adam_eps);
        };
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            update(p.weights[l], m.weights[l], v.weights[l], lg.gradient.weights[l]);
            update(p.biases[l], m.biases[l], v.biases[l], lg.gradient.biases[l]);
        }
        if (ema) {
            const double d = cfg.ema_decay;
            for (std::size_t l = 0; l < p.weights.size(); ++l) {
                ema->weights[l] = d * ema->weights[l] + (1.0 - d) * p.weights[l];
                ema->biases[l] = d * ema->biases[l] + (1.0 - d) * p.biases[l];
            }
        }
        result.loss_log.push_back(lg.loss);
        if (progress)
            progress(step, lg.loss);
    }
    if (!p.all_finite())
        throw TrainingDivergenceError("train: parameters became non-finite", cfg.steps);
    if (ema)
        p = std::move(*ema);
    result.validation_end = validation_loss(p);
    return result;
}

Eigen::MatrixXd sample_latents(const std::vector<Condition>& conds, const std::vector<std::uint64_t>& seeds,
                               const DenoiserParams& params, const NoiseSchedule& sched, const GuidanceConfig& g) {
    if (conds.size() != seeds.size())
        throw ShapeError("sample_latents: one seed per condition required");
    const auto d = static_cast<Eigen::Index>(params.shape.latent_dim);
    const auto count = static_cast<Eigen::Index>(conds.size());
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(seeds.size());
    for (auto s : seeds)
        rngs.emplace_back(s);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Eigen::MatrixXd& out) {
        for (Eigen::Index j = 0; j < count; ++j) {
            normal.reset();
            for (Eigen::Index i = 0; i < d; ++i)
                out(i, j) = normal(rngs[static_cast<std::size_t>(j)]);
        }
    };
    Eigen::MatrixXd z(d, count), xi(d, count);
    draw(z);
    const auto cdim = static_cast<Eigen::Index>(params.shape.condition_dim());
    Eigen::MatrixXd c_full(cdim, count), c_image(cdim, count), c_none(cdim, count);
    for (int tau = sched.T; tau >= 1; --tau) {
        for (Eigen::Index j = 0; j < count; ++j) {
            const Condition& c = conds[static_cast<std::size_t>(j)];
            c_full.col(j) = condition_input(c, tau, params.shape);
            if (!g.conditional_only) {
                c_image.col(j) = condition_input(c.with_nulls(c.image_null, true), tau, params.shape);
                c_none.col(j) = condition_input(c.with_nulls(true, true), tau, params.shape);
            }
        }
        const std::vector<double> abar(static_cast<std::size_t>(count), sched.alpha_bar_at(tau));
        const Eigen::MatrixXd pred = guided(params, z, c_full, c_image, c_none, g, abar);
        const double beta = sched.beta_at(tau);
        const double coef = beta / std::sqrt(1.0 - sched.alpha_bar_at(tau));
        z = (z - coef * pred) / std::sqrt(1.0 - beta);
        if (tau > 1) {
            draw(xi);
            z += std::sqrt(beta) * xi;
        }
        if (!z.allFinite())
            throw SamplingDivergenceError("sample: non-finite latent at diffusion step " + std::to_string(tau), tau);
    }
    return z;
}

LatentNormalizer LatentNormalizer::fit(const std::vector<std::vector<double>>& latents) {
    if (latents.empty())
        throw DataError("latent normalizer: no latents");
    const std::size_t dim = latents.front().size();
    LatentNormalizer n{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    for (const auto& z : latents) {
        if (z.size() != dim)
            throw ShapeError("latent normalizer: latent sizes differ");
        for (std::size_t i = 0; i < dim; ++i)
            n.mean[i] += z[i];
    }
    const double count = static_cast<double>(latents.size());
    for (auto& m : n.mean)
        m /= count;
    for (const auto& z : latents)
        for (std::size_t i = 0; i < dim; ++i)
            n.scale[i] += (z[i] - n.mean[i]) * (z[i] - n.mean[i]);
    double largest = 0.0;
    for (auto& s : n.scale) {
        s = std::sqrt(s / count);
        largest = std::max(largest, s);
    }
    const double floor = largest > 0.0 ? 1e-12 * largest : 1.0;
    for (auto& s : n.scale)
        s = std::max(s, floor);
    return n;
}

LatentNormalizer LatentNormalizer::identity(std::size_t dim) {
    return LatentNormalizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

std::vector<double> LatentNormalizer::normalize(std::span<const double> z) const {
    if (z.size() != mean.size())
        throw ShapeError("latent normalizer: size mismatch");
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = (z[i] - mean[i]) / scale[i];
    return out;
}

std::vector<double> LatentNormalizer::denormalize(std::span<const double> z) const {
    if (z.size() != mean.size())
        throw ShapeError("latent normalizer: size mismatch");
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] * scale[i] + mean[i];
    return out;
}

std::vector<SampleResult> sample(const std::vector<ScalarField>& templates, const std::vector<std::string>& texts,
                                 const DiffusionModel& model, const GuidanceConfig& g,
                                 const std::vector<std::uint64_t>& seeds) {
    if (templates.size() != texts.size() || templates.size() != seeds.size())
        throw ShapeError("sample: templates, texts and seeds must have equal counts");
    const std::size_t flat = model.latent.latent_dim() * static_cast<std::size_t>(model.time_steps + 1);
    if (flat != model.params.shape.latent_dim)
        throw ShapeError("sample: model latent layout does not match the denoiser");
    std::vector<Condition> conds;
    conds.reserve(templates.size());
    for (std::size_t i = 0; i < templates.size(); ++i) {
        require_same_grid(templates[i].grid(), model.latent.grid(), "sample");
        conds.push_back(make_condition(templates[i], texts[i], model.pool_side));
    }
    const Eigen::MatrixXd z = sample_latents(conds, seeds, model.params, model.schedule, g);

    std::vector<SampleResult> out;
    out.reserve(templates.size());
    for (std::size_t j = 0; j < templates.size(); ++j) {
        const auto col = z.col(static_cast<Eigen::Index>(j));
        const std::vector<double> raw =
            model.normalizer.denormalize(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
        LatentGeodesic latent = LatentGeodesic::unflatten(model.latent, model.time_steps, raw);
        GeodesicPath path{model.time_steps, 1.0, {}, OperatorConfig{}, EpdiffForm::Conservative};
        for (const auto& zt : latent.latents)
            path.velocities.push_back(decode(zt));
        DeformationPath deformation = integrate_flow(path);
        std::vector<ScalarField> frames;
        for (const auto& phi : deformation.deformations)
            frames.push_back(warp(templates[j], phi));
        ScalarField det = det_jacobian(deformation.final());
        out.push_back(SampleResult{std::move(latent), std::move(path), std::move(deformation), std::move(frames),
                                   std::move(det)});
    }
    return out;
}

SampleResult sample(const ScalarField& tmpl, const std::string& text, const DiffusionModel& model,
                    const GuidanceConfig& g, std::uint64_t seed) {
    std::vector<SampleResult> out = sample(std::vector<ScalarField>{tmpl}, std::vector<std::string>{text}, model, g,
                                           std::vector<std::uint64_t>{seed});
    return std::move(out.front());
}

} // namespace igg
