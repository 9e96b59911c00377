#include "igg/epdiff.hpp"

#include <cmath>
#include <string>

namespace igg {

namespace {

void require_finite(const VectorField& f, const char* term) {
    if (!f.all_finite())
        throw NumericError(std::string("epdiff_rhs: non-finite values in ") + term);
}

} // namespace

VectorField epdiff_force(const VectorField& v, const VectorField& m, EpdiffForm form) {
    const Grid& g = v.grid();
    const Jacobian dv = jacobian(v);
    VectorField force(g);

    if (form == EpdiffForm::Advective) {
        const Jacobian dm = jacobian(m);
        const ScalarField div = divergence(v);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double mx = m.x()[i];
            const double my = m.y()[i];
            const double vx = v.x()[i];
            const double vy = v.y()[i];
            // (Dv)^T m
            const double ax = dv.d[0][0][i] * mx + dv.d[1][0][i] * my;
            const double ay = dv.d[0][1][i] * mx + dv.d[1][1][i] * my;
            // (Dm) v
            const double bx = dm.d[0][0][i] * vx + dm.d[0][1][i] * vy;
            const double by = dm.d[1][0][i] * vx + dm.d[1][1][i] * vy;
            force.x()[i] = ax + bx + mx * div[i];
            force.y()[i] = ay + by + my * div[i];
        }
        return force;
    }

    // div(m (x) v): component c is sum_j D_j(m_c v_j).
    for (int c = 0; c < 2; ++c) {
        ScalarField flux_x(g), flux_y(g);
        const ScalarField& mc = m.component(c);
        for (std::size_t i = 0; i < g.size(); ++i) {
            flux_x[i] = mc[i] * v.x()[i];
            flux_y[i] = mc[i] * v.y()[i];
        }
        const ScalarField fx = diff_x(flux_x);
        const ScalarField fy = diff_y(flux_y);
        ScalarField& out = force.component(c);
        for (std::size_t i = 0; i < g.size(); ++i)
            out[i] = dv.d[0][c][i] * m.x()[i] + dv.d[1][c][i] * m.y()[i] + fx[i] + fy[i];
    }
    return force;
}

VectorField epdiff_rhs(const VectorField& v, const ScalarField& symbol, EpdiffForm form) {
    const VectorField m = apply_symbol(v, symbol, false);
    require_finite(m, "momentum L v");
    const VectorField force = epdiff_force(v, m, form);
    require_finite(force, "(Dv)^T m + (Dm) v + m div v");
    VectorField out = apply_symbol(force, symbol, true);
    out.scale_inplace(-1.0);
    return out;
}

VectorField epdiff_rhs(const VectorField& v, const OperatorConfig& cfg, EpdiffForm form) {
    return epdiff_rhs(v, operator_symbol(cfg, v.grid()), form);
}

GeodesicPath shoot_for(const VectorField& v0, const OperatorConfig& cfg, int steps, double duration,
                       IntegratorKind kind, EpdiffForm form) {
    if (steps < 1)
        throw ConfigError("shoot: time step count must be >= 1");
    if (!(duration > 0.0))
        throw ConfigError("shoot: duration must be positive");
    if (!v0.all_finite())
        throw NumericError("shoot: initial velocity has non-finite values");

    const ScalarField symbol = operator_symbol(cfg, v0.grid());
    GeodesicPath path{steps, duration, {}, cfg, form};
    path.velocities.reserve(static_cast<std::size_t>(steps) + 1);
    path.velocities.push_back(v0);
    const double h = duration / steps;
    auto rhs = [&](const VectorField& v) { return epdiff_rhs(v, symbol, form); };

    for (int i = 0; i < steps; ++i) {
        const VectorField& v = path.velocities.back();
        VectorField next = v;
        if (kind == IntegratorKind::Euler) {
            next.axpy_inplace(h, rhs(v));
        } else {
            const VectorField k1 = rhs(v);
            const VectorField k2 = rhs(field_axpy(0.5 * h, k1, v));
            const VectorField k3 = rhs(field_axpy(0.5 * h, k2, v));
            const VectorField k4 = rhs(field_axpy(h, k3, v));
            next.axpy_inplace(h / 6.0, k1);
            next.axpy_inplace(h / 3.0, k2);
            next.axpy_inplace(h / 3.0, k3);
            next.axpy_inplace(h / 6.0, k4);
        }
        const double norm = next.linf_norm();
        if (!(norm <= kDivergenceBound)) {
            throw DivergenceError("shoot: velocity diverged at step " + std::to_string(i + 1) +
                                      " (L-inf norm " + std::to_string(norm) + ")",
                                  i + 1);
        }
        path.velocities.push_back(std::move(next));
    }
    return path;
}

GeodesicPath shoot(const VectorField& v0, const OperatorConfig& cfg, int steps, IntegratorKind kind,
                   EpdiffForm form) {
    return shoot_for(v0, cfg, steps, 1.0, kind, form);
}

double kinetic_energy(const VectorField& v, const OperatorConfig& cfg) {
    return inner_product(apply_L(v, cfg), v);
}

} // namespace igg
