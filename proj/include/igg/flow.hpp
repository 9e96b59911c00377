#pragma once

#include <vector>

#include "igg/epdiff.hpp"
#include "igg/fields.hpp"

namespace igg {

// phi_0 .. phi_1 on the time grid of a GeodesicPath; phi_0 is the identity.
struct DeformationPath {
    std::vector<DeformationField> deformations;

    const DeformationField& final() const { return deformations.back(); }
};

// Four periodic corner indices and fractional offsets of one query point.
struct BilinearStencil {
    std::size_t i00, i10, i01, i11;
    double fx, fy;

    double w00() const { return (1.0 - fx) * (1.0 - fy); }
    double w10() const { return fx * (1.0 - fy); }
    double w01() const { return (1.0 - fx) * fy; }
    double w11() const { return fx * fy; }
};

// Stencil for a query given in grid units (gx = x / hx).
BilinearStencil bilinear_stencil(const Grid& grid, double gx, double gy);

// Stencil for phi evaluated at sample i.
BilinearStencil bilinear_stencil(const DeformationField& phi, std::size_t i);

inline double interpolate(const ScalarField& f, const BilinearStencil& s) {
    return s.w00() * f[s.i00] + s.w10() * f[s.i10] + s.w01() * f[s.i01] + s.w11() * f[s.i11];
}

// Partial derivatives of the bilinear interpolant with respect to the query
// point, in torus units (not grid units).
void interpolate_gradient(const ScalarField& f, const BilinearStencil& s, double& dfdx, double& dfdy);

ScalarField sample_bilinear(const ScalarField& f, const DeformationField& points);
VectorField sample_bilinear(const VectorField& f, const DeformationField& points);

DeformationPath integrate_flow(const GeodesicPath& path);

// image o phi
ScalarField warp(const ScalarField& image, const DeformationField& phi);

// det(I + Du) with Du from periodic central differences of the displacement.
ScalarField det_jacobian(const DeformationField& phi);

// phi(x) = x + c for a constant offset c.
DeformationField translation(const Grid& grid, double cx, double cy);

} // namespace igg
