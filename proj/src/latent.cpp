#include "igg/latent.hpp"

#include <cmath>
#include <string>

namespace igg {

namespace {

// Signed frequencies retained on an axis of length n, in canonical order.
std::vector<int> axis_frequencies(int r, int n) {
    std::vector<int> out;
    if (2 * r < n) {
        for (int k = -r; k <= r; ++k)
            out.push_back(k);
    } else {
        for (int k = -n / 2 + 1; k <= n / 2; ++k)
            out.push_back(k);
    }
    return out;
}

int to_index(int k, int n) { return ((k % n) + n) % n; }

} // namespace

LatentConfig::LatentConfig(const Grid& grid, int bandlimit) : grid_(grid), bandlimit_(bandlimit) {
    if (bandlimit < 1)
        throw ConfigError("latent bandlimit must be >= 1");
    if (2 * bandlimit > grid.nx || 2 * bandlimit > grid.ny) {
        throw ConfigError("latent bandlimit " + std::to_string(bandlimit) + " exceeds half the grid size " +
                          std::to_string(grid.nx) + "x" + std::to_string(grid.ny));
    }
    const std::vector<int> fx = axis_frequencies(bandlimit, grid.nx);
    const std::vector<int> fy = axis_frequencies(bandlimit, grid.ny);
    std::vector<char> seen(grid.size(), 0);
    auto modes = std::make_shared<std::vector<LatentMode>>();
    std::size_t offset = 0;
    for (int ky : fy) {
        for (int kx : fx) {
            const int ix = to_index(kx, grid.nx), iy = to_index(ky, grid.ny);
            if (seen[grid.index(ix, iy)])
                continue;
            const int cx = to_index(-kx, grid.nx), cy = to_index(-ky, grid.ny);
            seen[grid.index(ix, iy)] = 1;
            seen[grid.index(cx, cy)] = 1;
            const bool self = ix == cx && iy == cy;
            modes->push_back({ix, iy, self, offset});
            offset += self ? 1 : 2;
        }
    }
    component_dim_ = offset;
    modes_ = std::move(modes);
}

LatentVelocity::LatentVelocity(const LatentConfig& cfg, std::vector<double> values)
    : config(cfg), coeffs(std::move(values)) {
    if (coeffs.size() != cfg.latent_dim()) {
        throw ShapeError("latent vector has " + std::to_string(coeffs.size()) + " coefficients, expected " +
                         std::to_string(cfg.latent_dim()));
    }
}

std::vector<double> LatentGeodesic::flatten() const {
    std::vector<double> out;
    if (latents.empty())
        return out;
    out.reserve(latents.size() * config().latent_dim());
    for (const auto& z : latents)
        out.insert(out.end(), z.coeffs.begin(), z.coeffs.end());
    return out;
}

LatentGeodesic LatentGeodesic::unflatten(const LatentConfig& cfg, int steps, std::span<const double> flat) {
    const std::size_t dim = cfg.latent_dim();
    if (steps < 1 || flat.size() != dim * static_cast<std::size_t>(steps + 1)) {
        throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values do not form " +
                         std::to_string(steps + 1) + " latents of size " + std::to_string(dim));
    }
    LatentGeodesic out{steps, {}};
    out.latents.reserve(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) {
        auto first = flat.begin() + static_cast<std::ptrdiff_t>(t * dim);
        out.latents.emplace_back(cfg, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(dim)));
    }
    return out;
}

LatentVelocity encode(const VectorField& v, const LatentConfig& cfg) {
    require_same_grid(v.grid(), cfg.grid(), "encode");
    const Grid& g = cfg.grid();
    const double norm = 1.0 / static_cast<double>(g.size());
    LatentVelocity z(cfg);
    for (int c = 0; c < 2; ++c) {
        const std::vector<Complex> spec = dft_forward(v.component(c));
        double* block = z.coeffs.data() + c * cfg.component_dim();
        for (const LatentMode& m : cfg.modes()) {
            const Complex a = spec[g.index(m.kx, m.ky)] * norm;
            block[m.offset] = a.real();
            if (!m.self_conjugate)
                block[m.offset + 1] = a.imag();
        }
    }
    return z;
}

VectorField decode(const LatentVelocity& z) {
    const LatentConfig& cfg = z.config;
    const Grid& g = cfg.grid();
    const double scale = static_cast<double>(g.size());
    VectorField out(g);
    for (int c = 0; c < 2; ++c) {
        std::vector<Complex> spec(g.size());
        const double* block = z.coeffs.data() + c * cfg.component_dim();
        for (const LatentMode& m : cfg.modes()) {
            if (m.self_conjugate) {
                spec[g.index(m.kx, m.ky)] = Complex(block[m.offset] * scale, 0.0);
                continue;
            }
            const Complex a(block[m.offset] * scale, block[m.offset + 1] * scale);
            spec[g.index(m.kx, m.ky)] = a;
            spec[g.index(g.wrap_x(-m.kx), g.wrap_y(-m.ky))] = std::conj(a);
        }
        out.component(c) = dft_inverse(g, spec);
    }
    return out;
}

double latent_norm_squared(const LatentVelocity& z) {
    const LatentConfig& cfg = z.config;
    double sum = 0.0;
    for (int c = 0; c < 2; ++c) {
        const double* block = z.coeffs.data() + c * cfg.component_dim();
        for (const LatentMode& m : cfg.modes()) {
            if (m.self_conjugate) {
                sum += block[m.offset] * block[m.offset];
            } else {
                sum += 2.0 * (block[m.offset] * block[m.offset] + block[m.offset + 1] * block[m.offset + 1]);
            }
        }
    }
    return sum;
}

LatentGeodesic latent_shoot(const LatentVelocity& z0, const OperatorConfig& op, int steps, EpdiffForm form) {
    if (steps < 1)
        throw ConfigError("latent_shoot: time step count must be >= 1");
    for (double c : z0.coeffs) {
        if (!std::isfinite(c))
            throw NumericError("latent_shoot: initial latent has non-finite values");
    }
    const ScalarField symbol = operator_symbol(op, z0.config.grid());
    const double h = 1.0 / steps;
    LatentGeodesic out{steps, {z0}};
    out.latents.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i < steps; ++i) {
        const LatentVelocity& z = out.latents.back();
        const LatentVelocity dz = encode(epdiff_rhs(decode(z), symbol, form), z.config);
        LatentVelocity next = z;
        double norm = 0.0;
        for (std::size_t j = 0; j < next.coeffs.size(); ++j) {
            next.coeffs[j] += h * dz.coeffs[j];
            norm = std::max(norm, std::abs(next.coeffs[j]));
        }
        if (!(norm <= kDivergenceBound)) {
            throw DivergenceError("latent_shoot: latent diverged at step " + std::to_string(i + 1), i + 1);
        }
        out.latents.push_back(std::move(next));
    }
    return out;
}

LatentGeodesic encode_path(const GeodesicPath& path, const LatentConfig& cfg) {
    LatentGeodesic out{path.steps, {}};
    out.latents.reserve(path.velocities.size());
    for (const auto& v : path.velocities)
        out.latents.push_back(encode(v, cfg));
    return out;
}

std::vector<double> geodesic_mae_curve(const LatentGeodesic& latent, const GeodesicPath& reference) {
    if (latent.steps != reference.steps || latent.latents.size() != reference.velocities.size())
        throw ShapeError("geodesic_mae_curve: step counts differ");
    std::vector<double> curve;
    curve.reserve(latent.latents.size());
    for (std::size_t t = 0; t < latent.latents.size(); ++t) {
        const VectorField& ref = reference.velocities[t];
        require_same_grid(latent.latents[t].config.grid(), ref.grid(), "geodesic_mae_curve");
        const VectorField v = decode(latent.latents[t]);
        double sum = 0.0;
        for (int c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < v.size(); ++i)
                sum += std::abs(v.component(c)[i] - ref.component(c)[i]);
        curve.push_back(sum / (2.0 * static_cast<double>(v.size())));
    }
    return curve;
}

} // namespace igg
