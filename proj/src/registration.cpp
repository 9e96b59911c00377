#include "igg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace igg {

namespace {

struct ForwardTape {
    GeodesicPath path;
    DeformationPath flow;
    ScalarField warped;
};

ForwardTape run_forward(const VectorField& v0, const ScalarField& source, const RegistrationConfig& cfg) {
    ForwardTape tape;
    tape.path = shoot(v0, cfg.op, cfg.steps, cfg.integrator, cfg.form);
    tape.flow = integrate_flow(tape.path);
    tape.warped = warp(source, tape.flow.final());
    return tape;
}

EnergyTerms energy_from(const VectorField& v0, const ScalarField& warped, const ScalarField& target,
                        const RegistrationConfig& cfg) {
    EnergyTerms e;
    e.reg = (cfg.energy_half_factor ? 0.5 : 1.0) * kinetic_energy(v0, cfg.op);
    e.data = cfg.lambda * ssd(warped, target);
    e.total = e.data + e.reg;
    return e;
}

void check_intensity_range(const ScalarField& f, const char* name) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!(f[i] >= 0.0 && f[i] <= 1.0))
            throw DataError(std::string("register: ") + name + " intensities must be normalized to [0, 1]");
    }
}

} // namespace

void RegistrationConfig::validate() const {
    op.validate();
    if (!(lambda > 0.0))
        throw ConfigError("registration lambda must be > 0");
    if (steps < 1)
        throw ConfigError("registration time steps must be >= 1");
    if (max_iters < 1)
        throw ConfigError("registration max_iters must be >= 1");
    if (!(step_size > 0.0))
        throw ConfigError("registration step_size must be > 0");
    if (!(grad_tol > 0.0))
        throw ConfigError("registration grad_tol must be > 0");
}

double ssd(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "ssd");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum * a.grid().cell_area();
}

EnergyTerms energy(const VectorField& v0, const ScalarField& source, const ScalarField& target,
                   const RegistrationConfig& cfg) {
    require_same_grid(source.grid(), target.grid(), "energy");
    require_same_grid(v0.grid(), source.grid(), "energy");
    const ForwardTape tape = run_forward(v0, source, cfg);
    return energy_from(v0, tape.warped, target, cfg);
}

VectorField epdiff_rhs_vjp(const VectorField& v, const VectorField& g, const ScalarField& symbol,
                           EpdiffForm form) {
    const Grid& grid = v.grid();
    const std::size_t n = grid.size();
    const VectorField m = apply_symbol(v, symbol, false);
    // rhs = -K force(v, m); K is symmetric, so the force adjoint is w = -K g.
    VectorField w = apply_symbol(g, symbol, true);
    w.scale_inplace(-1.0);

    const Jacobian dv = jacobian(v);
    VectorField v_bar(grid);
    VectorField m_bar(grid);
    // (D_j)^T = -D_j for periodic central differences; each entry collects a
    // field whose D_j is subtracted from the corresponding adjoint.
    std::array<std::array<ScalarField, 2>, 2> to_v; // [component][axis]
    std::array<std::array<ScalarField, 2>, 2> to_m;
    for (int c = 0; c < 2; ++c) {
        for (int j = 0; j < 2; ++j) {
            to_v[c][j] = ScalarField(grid);
            to_m[c][j] = ScalarField(grid);
        }
    }

    if (form == EpdiffForm::Advective) {
        const Jacobian dm = jacobian(m);
        const ScalarField div = divergence(v);
        for (std::size_t i = 0; i < n; ++i) {
            const double wc[2] = {w.x()[i], w.y()[i]};
            const double mc[2] = {m.x()[i], m.y()[i]};
            const double vc[2] = {v.x()[i], v.y()[i]};
            const double wm = wc[0] * mc[0] + wc[1] * mc[1];
            double mb[2] = {0.0, 0.0};
            double vb[2] = {0.0, 0.0};
            for (int c = 0; c < 2; ++c) {
                for (int j = 0; j < 2; ++j) {
                    // force_j += (D_j v_c) m_c
                    mb[c] += wc[j] * dv.d[c][j][i];
                    to_v[c][j][i] += wc[j] * mc[c];
                    // force_c += (D_j m_c) v_j
                    vb[j] += wc[c] * dm.d[c][j][i];
                    to_m[c][j][i] += wc[c] * vc[j];
                }
                // force_c += m_c div v
                mb[c] += wc[c] * div[i];
                to_v[c][c][i] += wm;
            }
            m_bar.x()[i] = mb[0];
            m_bar.y()[i] = mb[1];
            v_bar.x()[i] = vb[0];
            v_bar.y()[i] = vb[1];
        }
    } else {
        const Jacobian dw = jacobian(w);
        for (std::size_t i = 0; i < n; ++i) {
            const double wc[2] = {w.x()[i], w.y()[i]};
            const double mc[2] = {m.x()[i], m.y()[i]};
            const double vc[2] = {v.x()[i], v.y()[i]};
            double mb[2] = {0.0, 0.0};
            double vb[2] = {0.0, 0.0};
            for (int c = 0; c < 2; ++c) {
                for (int j = 0; j < 2; ++j) {
                    // force_c += m_j D_c v_j
                    mb[j] += wc[c] * dv.d[j][c][i];
                    to_v[j][c][i] += wc[c] * mc[j];
                    // force_c += D_j(m_c v_j), transposed onto w
                    mb[c] -= dw.d[c][j][i] * vc[j];
                    vb[j] -= dw.d[c][j][i] * mc[c];
                }
            }
            m_bar.x()[i] = mb[0];
            m_bar.y()[i] = mb[1];
            v_bar.x()[i] = vb[0];
            v_bar.y()[i] = vb[1];
        }
    }

    for (int c = 0; c < 2; ++c) {
        const ScalarField dxv = diff_x(to_v[c][0]);
        const ScalarField dyv = diff_y(to_v[c][1]);
        const ScalarField dxm = diff_x(to_m[c][0]);
        const ScalarField dym = diff_y(to_m[c][1]);
        ScalarField& vb = v_bar.component(c);
        ScalarField& mb = m_bar.component(c);
        for (std::size_t i = 0; i < n; ++i) {
            vb[i] -= dxv[i] + dyv[i];
            mb[i] -= dxm[i] + dym[i];
        }
    }

    v_bar.axpy_inplace(1.0, apply_symbol(m_bar, symbol, false));
    return v_bar;
}

VectorField energy_gradient(const VectorField& v0, const ScalarField& source, const ScalarField& target,
                            const RegistrationConfig& cfg) {
    if (cfg.integrator != IntegratorKind::Euler)
        throw ConfigError("energy_gradient: only the Euler integrator is supported");
    require_same_grid(source.grid(), target.grid(), "energy_gradient");
    require_same_grid(v0.grid(), source.grid(), "energy_gradient");

    const Grid& grid = v0.grid();
    const std::size_t n = grid.size();
    const ForwardTape tape = run_forward(v0, source, cfg);
    const int steps = cfg.steps;
    const double h = tape.path.dt();
    const ScalarField symbol = operator_symbol(cfg.op, grid);

    // Everything below is the gradient of E / (hx hy) in plain coordinates,
    // which equals the gradient of E under the grid-weighted pairing.
    VectorField u_bar(grid);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = 2.0 * cfg.lambda * (tape.warped[i] - target[i]);
        if (r == 0.0)
            continue;
        double dx = 0.0, dy = 0.0;
        interpolate_gradient(source, bilinear_stencil(tape.flow.final(), i), dx, dy);
        u_bar.x()[i] = r * dx;
        u_bar.y()[i] = r * dy;
    }

    VectorField v_bar_next(grid); // adjoint of v_{k+1}
    for (int k = steps - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const VectorField& vk = tape.path.velocities[ks];
        const DeformationField& phi = tape.flow.deformations[ks];

        VectorField v_bar(grid);
        // u_{k+1} = u_k + h * v_k(phi_k)
        VectorField u_bar_prev = u_bar;
        for (std::size_t i = 0; i < n; ++i) {
            const double gx = u_bar.x()[i];
            const double gy = u_bar.y()[i];
            if (gx == 0.0 && gy == 0.0)
                continue;
            const BilinearStencil st = bilinear_stencil(phi, i);
            const double weights[4] = {st.w00(), st.w10(), st.w01(), st.w11()};
            const std::size_t corners[4] = {st.i00, st.i10, st.i01, st.i11};
            for (int q = 0; q < 4; ++q) {
                v_bar.x()[corners[q]] += h * weights[q] * gx;
                v_bar.y()[corners[q]] += h * weights[q] * gy;
            }
            if (k > 0) {
                double dxx, dxy, dyx, dyy;
                interpolate_gradient(vk.x(), st, dxx, dxy);
                interpolate_gradient(vk.y(), st, dyx, dyy);
                u_bar_prev.x()[i] += h * (gx * dxx + gy * dyx);
                u_bar_prev.y()[i] += h * (gx * dxy + gy * dyy);
            }
        }
        u_bar = std::move(u_bar_prev);

        // v_{k+1} = v_k + h * rhs(v_k)
        v_bar.axpy_inplace(1.0, v_bar_next);
        v_bar.axpy_inplace(h, epdiff_rhs_vjp(vk, v_bar_next, symbol, cfg.form));
        v_bar_next = std::move(v_bar);
    }

    VectorField grad = apply_symbol(v0, symbol, false);
    grad.scale_inplace(cfg.energy_half_factor ? 1.0 : 2.0);
    grad.axpy_inplace(1.0, v_bar_next);
    return grad;
}

namespace {

void finish(RegistrationResult& result, const VectorField& v, const RegistrationConfig& cfg) {
    result.v0 = v;
    result.path = shoot(v, cfg.op, cfg.steps, cfg.integrator, cfg.form);
    result.deformation = integrate_flow(result.path);
    const ScalarField det = det_jacobian(result.deformation.final());
    result.min_detjac = *std::min_element(det.values().begin(), det.values().end());
}

} // namespace

RegistrationResult register_images(const ScalarField& source, const ScalarField& target,
                                   const RegistrationConfig& cfg, const VectorField* initial_velocity) {
    cfg.validate();
    require_same_grid(source.grid(), target.grid(), "register");
    check_intensity_range(source, "source");
    check_intensity_range(target, "target");
    if (cfg.integrator != IntegratorKind::Euler)
        throw ConfigError("register: the adjoint gradient requires the Euler integrator");

    const Grid& grid = source.grid();
    const ScalarField symbol = operator_symbol(cfg.op, grid);
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxHalvings = 30;

    RegistrationResult result;
    VectorField v = initial_velocity ? *initial_velocity : VectorField(grid);
    require_same_grid(v.grid(), grid, "register");
    EnergyTerms current = energy(v, source, target, cfg);
    result.energy_history.push_back({0, current});

    double step = cfg.step_size;
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const VectorField grad = energy_gradient(v, source, target, cfg);
        VectorField direction = apply_symbol(grad, symbol, true);
        const double grad_norm = std::sqrt(inner_product(direction, direction));
        if (grad_norm < cfg.grad_tol) {
            result.converged = true;
            break;
        }
        direction.scale_inplace(-1.0);
        const double slope = inner_product(grad, direction);

        bool accepted = false;
        std::optional<DivergenceError> last_divergence;
        for (int halving = 0; halving <= kMaxHalvings; ++halving) {
            const VectorField trial = field_axpy(step, direction, v);
            try {
                const EnergyTerms e = energy(trial, source, target, cfg);
                if (e.total <= current.total + kArmijo * step * slope && e.total < current.total) {
                    v = trial;
                    current = e;
                    accepted = true;
                    break;
                }
                last_divergence.reset();
            } catch (const DivergenceError& err) {
                last_divergence = err;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (last_divergence) {
                throw DivergenceError("register: iteration " + std::to_string(iter) + ": " + last_divergence->what(),
                                      iter);
            }
            finish(result, v, cfg);
            throw StallError("register: line search stalled at iteration " + std::to_string(iter) + " after " +
                                 std::to_string(kMaxHalvings) + " halvings",
                             iter, std::make_shared<const RegistrationResult>(std::move(result)));
        }
        result.energy_history.push_back({iter, current});
        step *= 2.0;
    }

    finish(result, v, cfg);
    return result;
}

} // namespace igg
