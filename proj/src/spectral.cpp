#include "igg/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

namespace igg {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are created once per grid under a lock and never destroyed.
struct PlanPair {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

const PlanPair& plans_for(const Grid& grid) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, PlanPair> cache;
    std::lock_guard lock(mutex);
    auto key = std::make_pair(grid.nx, grid.ny);
    auto it = cache.find(key);
    if (it != cache.end())
        return it->second;
    std::vector<Complex> in(grid.size()), out(grid.size());
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    PlanPair p;
    p.forward = fftw_plan_dft_2d(grid.ny, grid.nx, pin, pout, FFTW_FORWARD, flags);
    p.backward = fftw_plan_dft_2d(grid.ny, grid.nx, pin, pout, FFTW_BACKWARD, flags);
    return cache.emplace(key, p).first->second;
}

void execute(fftw_plan plan, std::vector<Complex>& in, std::vector<Complex>& out) {
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
}

} // namespace

void OperatorConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw ConfigError("operator alpha must be a finite value >= 0");
    if (power < 1)
        throw ConfigError("operator power must be a positive integer");
}

std::vector<Complex> dft_forward(const ScalarField& s) {
    const Grid& g = s.grid();
    std::vector<Complex> in(g.size()), out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        in[i] = Complex(s[i], 0.0);
    execute(plans_for(g).forward, in, out);
    return out;
}

ScalarField dft_inverse(const Grid& grid, const std::vector<Complex>& coeffs) {
    if (coeffs.size() != grid.size())
        throw ShapeError("dft_inverse: coefficient count does not match grid");
    std::vector<Complex> in = coeffs, out(grid.size());
    execute(plans_for(grid).backward, in, out);
    ScalarField s(grid);
    const double norm = 1.0 / static_cast<double>(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        s[i] = out[i].real() * norm;
    return s;
}

Spectrum dft_forward(const VectorField& v) {
    return Spectrum{v.grid(), dft_forward(v.x()), dft_forward(v.y())};
}

VectorField dft_inverse(const Spectrum& s) {
    return VectorField(dft_inverse(s.grid, s.x), dft_inverse(s.grid, s.y));
}

double laplacian_eigenvalue(const Grid& grid, int kx, int ky) {
    const double tx = 2.0 * std::numbers::pi * kx / grid.nx;
    const double ty = 2.0 * std::numbers::pi * ky / grid.ny;
    return (2.0 - 2.0 * std::cos(tx)) / (grid.hx() * grid.hx()) + (2.0 - 2.0 * std::cos(ty)) / (grid.hy() * grid.hy());
}

ScalarField operator_symbol(const OperatorConfig& cfg, const Grid& grid) {
    cfg.validate();
    ScalarField table(grid);
    for (int ky = 0; ky < grid.ny; ++ky) {
        for (int kx = 0; kx < grid.nx; ++kx) {
            const double base = cfg.alpha * laplacian_eigenvalue(grid, kx, ky) + 1.0;
            double value = 1.0;
            for (int p = 0; p < cfg.power; ++p)
                value *= base;
            table.at(kx, ky) = value;
        }
    }
    return table;
}

VectorField apply_symbol(const VectorField& v, const ScalarField& symbol, bool invert) {
    require_same_grid(v.grid(), symbol.grid(), "apply_symbol");
    Spectrum s = dft_forward(v);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double f = invert ? 1.0 / symbol[i] : symbol[i];
        s.x[i] *= f;
        s.y[i] *= f;
    }
    return dft_inverse(s);
}

VectorField apply_L(const VectorField& v, const OperatorConfig& cfg) {
    return apply_symbol(v, operator_symbol(cfg, v.grid()), false);
}

VectorField apply_K(const VectorField& m, const OperatorConfig& cfg) {
    return apply_symbol(m, operator_symbol(cfg, m.grid()), true);
}

ScalarField diff_x(const ScalarField& s) {
    const Grid& g = s.grid();
    ScalarField out(g);
    const double inv = 1.0 / (2.0 * g.hx());
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix)
            out.at(ix, iy) = (s.at(g.wrap_x(ix + 1), iy) - s.at(g.wrap_x(ix - 1), iy)) * inv;
    }
    return out;
}

ScalarField diff_y(const ScalarField& s) {
    const Grid& g = s.grid();
    ScalarField out(g);
    const double inv = 1.0 / (2.0 * g.hy());
    for (int iy = 0; iy < g.ny; ++iy) {
        const int up = g.wrap_y(iy + 1);
        const int down = g.wrap_y(iy - 1);
        for (int ix = 0; ix < g.nx; ++ix)
            out.at(ix, iy) = (s.at(ix, up) - s.at(ix, down)) * inv;
    }
    return out;
}

VectorField gradient(const ScalarField& s) {
    return VectorField(diff_x(s), diff_y(s));
}

ScalarField divergence(const VectorField& v) {
    ScalarField out = diff_x(v.x());
    const ScalarField dy = diff_y(v.y());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += dy[i];
    return out;
}

Jacobian jacobian(const VectorField& v) {
    Jacobian j;
    j.d[0][0] = diff_x(v.x());
    j.d[0][1] = diff_y(v.x());
    j.d[1][0] = diff_x(v.y());
    j.d[1][1] = diff_y(v.y());
    return j;
}

} // namespace igg
