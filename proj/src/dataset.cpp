#include "igg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "igg/error.hpp"
#include "igg/io.hpp"

namespace igg {

namespace {

double wrap_offset(double d) { return d - std::round(d); }

// Smooth indicator with a one-pixel transition across the boundary.
double soft_step(double signed_distance, double width) { return 0.5 * (1.0 - std::tanh(signed_distance / width)); }

} // namespace

void GrowthDatasetConfig::validate() const {
    if (time_steps < 1)
        throw ConfigError("dataset needs at least one time step");
    if (lobes_min < 1 || lobes_max < lobes_min || lobes_max > 6)
        throw ConfigError("lobe count range must satisfy 1 <= min <= max <= 6");
    if (growth_min_percent < 0 || growth_max_percent < growth_min_percent || growth_max_percent > 100)
        throw ConfigError("growth range must satisfy 0 <= min <= max <= 100 percent");
}

std::string growth_text(const GrowthSpec& spec) {
    return "lobes: " + std::to_string(spec.lobes) + "; growth: " + std::to_string(spec.growth_percent) +
           " percent per step; direction: " + std::to_string(spec.direction_deg) + " degrees";
}

ScalarField render_growth_frame(const Grid& grid, const GrowthSpec& spec, double t) {
    const double scale = 1.0 + 0.01 * spec.growth_percent * t;
    const double a = kLobeLength * scale;
    const double b = kLobeAspect * a;
    const double dist = kLobeRootOffset + a;
    const double width = std::min(grid.hx(), grid.hy());
    ScalarField s(grid);
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double dx = wrap_offset(ix * grid.hx() - 0.5);
            const double dy = wrap_offset(iy * grid.hy() - 0.5);
            double value = soft_step(std::hypot(dx, dy) - kBudRadius, width);
            for (int k = 0; k < spec.lobes; ++k) {
                const double theta = (spec.direction_deg + 360.0 * k / spec.lobes) * std::numbers::pi / 180.0;
                const double c = std::cos(theta), sn = std::sin(theta);
                const double px = wrap_offset(dx - dist * c), py = wrap_offset(dy - dist * sn);
                const double u = px * c + py * sn;
                const double w = -px * sn + py * c;
                const double rho = std::hypot(u / a, w / b);
                value = std::max(value, soft_step((rho - 1.0) * b, width));
            }
            s.at(ix, iy) = value;
        }
    }
    return s;
}

Sequence render_growth_sequence(const GrowthSpec& spec, const GrowthDatasetConfig& cfg, std::string name) {
    Sequence seq{std::move(name), {}, growth_text(spec)};
    for (int i = 0; i <= cfg.time_steps; ++i)
        seq.frames.push_back(render_growth_frame(cfg.grid, spec, i));
    return seq;
}

std::vector<GrowthSpec> draw_growth_specs(const GrowthDatasetConfig& cfg, int count, std::uint64_t seed) {
    cfg.validate();
    if (count < 0)
        throw ConfigError("sequence count must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> lobes(cfg.lobes_min, cfg.lobes_max);
    std::uniform_int_distribution<int> growth(cfg.growth_min_percent, cfg.growth_max_percent);
    std::uniform_int_distribution<int> direction(0, 359);
    std::vector<GrowthSpec> out;
    for (int n = 0; n < count; ++n) {
        GrowthSpec s;
        s.lobes = lobes(rng);
        s.growth_percent = growth(rng);
        s.direction_deg = direction(rng);
        out.push_back(s);
    }
    return out;
}

std::vector<Sequence> generate_growth_dataset(const GrowthDatasetConfig& cfg, int count, std::uint64_t seed) {
    std::vector<Sequence> out;
    const std::vector<GrowthSpec> specs = draw_growth_specs(cfg, count, seed);
    for (std::size_t n = 0; n < specs.size(); ++n) {
        char name[32];
        std::snprintf(name, sizeof name, "seq_%04zu", n);
        out.push_back(render_growth_sequence(specs[n], cfg, name));
    }
    return out;
}

void write_dataset(const std::vector<Sequence>& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create " + dir.string() + ": " + ec.message());
    for (const Sequence& seq : data) {
        const auto sub = dir / seq.name;
        std::filesystem::create_directories(sub, ec);
        if (ec)
            throw DataError("cannot create " + sub.string() + ": " + ec.message());
        for (std::size_t i = 0; i < seq.frames.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03zu.pgm", i);
            pgm_write(seq.frames[i], sub / name, 65535);
        }
        write_text(sub / "text.txt", seq.text + "\n");
    }
}

std::vector<Sequence> read_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw DataError("dataset directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> subs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_directory())
            subs.push_back(e.path());
    std::sort(subs.begin(), subs.end());
    std::vector<Sequence> out;
    for (const auto& sub : subs) {
        std::vector<std::filesystem::path> frames;
        for (const auto& e : std::filesystem::directory_iterator(sub))
            if (e.is_regular_file() && e.path().extension() == ".pgm")
                frames.push_back(e.path());
        if (frames.size() < 2)
            continue;
        std::sort(frames.begin(), frames.end());
        Sequence seq{sub.filename().string(), {}, {}};
        for (const auto& f : frames) {
            seq.frames.push_back(pgm_read(f));
            if (!(seq.frames.back().grid() == seq.frames.front().grid()))
                throw DataError(f.string() + ": frame size differs from the first frame");
        }
        if (std::filesystem::exists(sub / "text.txt")) {
            std::string text = read_text(sub / "text.txt");
            while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
                text.pop_back();
            seq.text = text;
        }
        out.push_back(std::move(seq));
    }
    if (out.empty())
        throw DataError(dir.string() + " holds no sequences with two or more PGM frames");
    return out;
}

std::size_t foreground_area(const ScalarField& s) {
    return static_cast<std::size_t>(std::count_if(s.values().begin(), s.values().end(), [](double v) { return v > 0.5; }));
}

} // namespace igg
