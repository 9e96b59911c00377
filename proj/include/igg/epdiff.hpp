#pragma once

#include <vector>

#include "igg/fields.hpp"
#include "igg/spectral.hpp"

namespace igg {

enum class IntegratorKind { Euler, RK4 };

// Discretization of the EPDiff force (Dv)^T m + (Dm) v + m div v.
// Advective evaluates the three terms as written. Conservative evaluates
// (Dv)^T m + div(m (x) v), the same continuum operator, for which the
// discrete kinetic energy (Lv, v) is an exact invariant of the
// semi-discrete flow.
enum class EpdiffForm { Conservative, Advective };

// Velocities v_0 .. v_1 sampled at t = i * duration / steps. Duration is 1
// except for short-time shooting experiments.
struct GeodesicPath {
    int steps = 0;
    double duration = 1.0;
    std::vector<VectorField> velocities;
    OperatorConfig op;
    EpdiffForm form = EpdiffForm::Conservative;

    double dt() const { return duration / steps; }
    const Grid& grid() const { return velocities.front().grid(); }
};

// L-infinity bound above which shooting is declared divergent.
inline constexpr double kDivergenceBound = 1e6;
inline constexpr int kDefaultTimeSteps = 10;

// The EPDiff force with m = L v, before K is applied.
VectorField epdiff_force(const VectorField& v, const VectorField& m, EpdiffForm form);

// -K[(Dv)^T m + (Dm) v + m div v] with m = L v.
VectorField epdiff_rhs(const VectorField& v, const OperatorConfig& cfg,
                       EpdiffForm form = EpdiffForm::Conservative);
// Same, with a precomputed operator_symbol table.
VectorField epdiff_rhs(const VectorField& v, const ScalarField& symbol,
                       EpdiffForm form = EpdiffForm::Conservative);

GeodesicPath shoot(const VectorField& v0, const OperatorConfig& cfg, int steps,
                   IntegratorKind kind = IntegratorKind::Euler, EpdiffForm form = EpdiffForm::Conservative);

// Shoots for total time `duration` instead of 1 with the given step count.
GeodesicPath shoot_for(const VectorField& v0, const OperatorConfig& cfg, int steps, double duration,
                       IntegratorKind kind = IntegratorKind::Euler,
                       EpdiffForm form = EpdiffForm::Conservative);

// (L v, v) under the grid-weighted pairing.
double kinetic_energy(const VectorField& v, const OperatorConfig& cfg);

} // namespace igg
