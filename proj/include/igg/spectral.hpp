#pragma once

#include <array>
#include <complex>
#include <vector>

#include "igg/fields.hpp"

namespace igg {

// Metric operator L = (-alpha Delta + Id)^power on the discrete torus.
struct OperatorConfig {
    double alpha = 3.0;
    int power = 3;

    void validate() const;
};

using Complex = std::complex<double>;

// Per-component DFT coefficients in standard ordering: entry (kx, ky) at
// ky * nx + kx, with kx >= nx/2 read as the signed frequency kx - nx.
// Forward transforms are unnormalized; inverse transforms divide by nx*ny.
struct Spectrum {
    Grid grid;
    std::vector<Complex> x;
    std::vector<Complex> y;
};

std::vector<Complex> dft_forward(const ScalarField& s);
ScalarField dft_inverse(const Grid& grid, const std::vector<Complex>& coeffs);

Spectrum dft_forward(const VectorField& v);
VectorField dft_inverse(const Spectrum& s);

// Signed frequency for DFT index k on an axis of length n.
inline int signed_frequency(int k, int n) { return k < n / 2 ? k : k - n; }

// Eigenvalue of the negated periodic 5-point Laplacian for mode (kx, ky).
double laplacian_eigenvalue(const Grid& grid, int kx, int ky);

// Table of (alpha * lambda(k) + 1)^power, laid out like a ScalarField.
ScalarField operator_symbol(const OperatorConfig& cfg, const Grid& grid);

VectorField apply_L(const VectorField& v, const OperatorConfig& cfg);
VectorField apply_K(const VectorField& m, const OperatorConfig& cfg);

// Multiplies every Fourier coefficient by symbol(k) (or divides when invert).
VectorField apply_symbol(const VectorField& v, const ScalarField& symbol, bool invert);

// Periodic central differences.
ScalarField diff_x(const ScalarField& s);
ScalarField diff_y(const ScalarField& s);
VectorField gradient(const ScalarField& s);
ScalarField divergence(const VectorField& v);

// Entries d(v_c)/d(x_j), indexed [c][j]: {dvx/dx, dvx/dy}, {dvy/dx, dvy/dy}.
struct Jacobian {
    std::array<std::array<ScalarField, 2>, 2> d;
};
Jacobian jacobian(const VectorField& v);

} // namespace igg
