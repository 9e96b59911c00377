#include "igg/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <variant>

#include "igg/io.hpp"

namespace igg {

namespace {

using Member = std::variant<int RunConfig::*, double RunConfig::*, std::uint64_t RunConfig::*, std::string RunConfig::*>;

const std::vector<std::pair<std::string, Member>>& table() {
    static const std::vector<std::pair<std::string, Member>> t = {
        {"nx", &RunConfig::nx},
        {"ny", &RunConfig::ny},
        {"alpha", &RunConfig::alpha},
        {"lambda", &RunConfig::lambda},
        {"time_steps", &RunConfig::time_steps},
        {"bandlimit", &RunConfig::bandlimit},
        {"integrator", &RunConfig::integrator},
        {"epdiff_form", &RunConfig::epdiff_form},
        {"reg_max_iters", &RunConfig::reg_max_iters},
        {"reg_step_size", &RunConfig::reg_step_size},
        {"reg_grad_tol", &RunConfig::reg_grad_tol},
        {"diffusion_steps", &RunConfig::diffusion_steps},
        {"beta_start", &RunConfig::beta_start},
        {"beta_end", &RunConfig::beta_end},
        {"learning_rate", &RunConfig::learning_rate},
        {"batch_size", &RunConfig::batch_size},
        {"train_steps", &RunConfig::train_steps},
        {"weight_decay", &RunConfig::weight_decay},
        {"p_uncond", &RunConfig::p_uncond},
        {"snr_gamma", &RunConfig::snr_gamma},
        {"ema_decay", &RunConfig::ema_decay},
        {"lr_schedule", &RunConfig::lr_schedule},
        {"hidden_width", &RunConfig::hidden_width},
        {"hidden_layers", &RunConfig::hidden_layers},
        {"pool_side", &RunConfig::pool_side},
        {"prediction", &RunConfig::prediction},
        {"delta_i", &RunConfig::delta_i},
        {"delta_t", &RunConfig::delta_t},
        {"sequences", &RunConfig::sequences},
        {"lobes_min", &RunConfig::lobes_min},
        {"lobes_max", &RunConfig::lobes_max},
        {"growth_min", &RunConfig::growth_min},
        {"growth_max", &RunConfig::growth_max},
        {"seed", &RunConfig::seed},
    };
    return t;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_value(std::string_view key, std::string_view value) {
    T out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size() || value.empty()) {
        throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out))
            throw ConfigError("non-finite value for " + std::string(key));
    }
    return out;
}

void require(bool ok, const std::string& what) {
    if (!ok)
        throw ConfigError(what);
}

} // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
    value = trim(value);
    for (const auto& [name, member] : table()) {
        if (name != key)
            continue;
        std::visit(
            [&](auto ptr) {
                using T = std::remove_reference_t<decltype(this->*ptr)>;
                if constexpr (std::is_same_v<T, std::string>)
                    this->*ptr = std::string(value);
                else
                    this->*ptr = parse_value<T>(key, value);
            },
            member);
        return;
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [name, member] : table())
        out.push_back(name);
    return out;
}

void RunConfig::validate() const {
    require(integrator == "euler" || integrator == "rk4", "integrator must be euler or rk4");
    require(epdiff_form == "conservative" || epdiff_form == "advective",
            "epdiff_form must be conservative or advective");
    require(prediction == "noise" || prediction == "data", "prediction must be noise or data");
    require(lr_schedule == "constant" || lr_schedule == "cosine", "lr_schedule must be constant or cosine");
    require(lobes_min >= 1 && lobes_max >= lobes_min && lobes_max <= 6, "lobes range must satisfy 1 <= min <= max <= 6");
    require(growth_min >= 0.0 && growth_max >= growth_min && growth_max <= 1.0,
            "growth range must satisfy 0 <= min <= max <= 1");
    require(sequences >= 1, "sequences must be positive");
    require(hidden_width >= 1 && hidden_layers >= 1, "hidden_width and hidden_layers must be positive");
    require(delta_i >= 0.0 && delta_t >= 0.0, "guidance weights must be non-negative");
    registration().validate();
    (void)latent();
    (void)schedule();
    denoiser_shape().validate();
    training().validate();
    require(pool_side >= 1 && pool_side <= std::min(nx, ny), "pool_side must lie in [1, min(nx, ny)]");
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const auto& [name, member] : table()) {
        out << name << " = ";
        std::visit(
            [&](auto ptr) {
                using T = std::remove_reference_t<decltype(this->*ptr)>;
                if constexpr (std::is_same_v<T, double>)
                    out << format_double(this->*ptr);
                else
                    out << this->*ptr;
            },
            member);
        out << '\n';
    }
    return out.str();
}

OperatorConfig RunConfig::op() const {
    OperatorConfig o;
    o.alpha = alpha;
    return o;
}

RegistrationConfig RunConfig::registration() const {
    RegistrationConfig r;
    r.lambda = lambda;
    r.op = op();
    r.steps = time_steps;
    r.integrator = integrator == "rk4" ? IntegratorKind::RK4 : IntegratorKind::Euler;
    r.form = epdiff_form == "advective" ? EpdiffForm::Advective : EpdiffForm::Conservative;
    r.max_iters = reg_max_iters;
    r.step_size = reg_step_size;
    r.grad_tol = reg_grad_tol;
    return r;
}

LatentConfig RunConfig::latent() const { return LatentConfig(Grid(nx, ny), bandlimit); }

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end); }

DenoiserShape RunConfig::denoiser_shape() const {
    DenoiserShape s;
    s.latent_dim = latent().latent_dim() * static_cast<std::size_t>(time_steps + 1);
    s.image_dim = 2 * static_cast<std::size_t>(pool_side) * static_cast<std::size_t>(pool_side);
    s.hidden.assign(static_cast<std::size_t>(hidden_layers), static_cast<std::size_t>(hidden_width));
    s.prediction = prediction == "noise" ? Prediction::Noise : Prediction::Data;
    return s;
}

TrainConfig RunConfig::training() const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.steps = train_steps;
    t.weight_decay = weight_decay;
    t.p_uncond = p_uncond;
    t.snr_gamma = snr_gamma;
    t.ema_decay = ema_decay;
    t.cosine_decay = lr_schedule == "cosine";
    t.seed = seed;
    return t;
}

GuidanceConfig RunConfig::guidance() const {
    GuidanceConfig g;
    g.delta_i = delta_i;
    g.delta_t = delta_t;
    return g;
}

RunConfig parse_run_config(std::string_view text, std::string_view name) {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        const std::string where = std::string(name) + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos)
            throw ConfigError(where + "expected key = value");
        try {
            cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_text(path), path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
    for (const std::string& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + a + "' is not key=value");
        cfg.set(trim(std::string_view(a).substr(0, eq)), std::string_view(a).substr(eq + 1));
    }
}

} // namespace igg
