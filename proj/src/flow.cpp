#include "igg/flow.hpp"

#include <cmath>

#include "igg/spectral.hpp"

namespace igg {

BilinearStencil bilinear_stencil(const Grid& grid, double gx, double gy) {
    if (!std::isfinite(gx) || !std::isfinite(gy))
        throw NumericError("sample_bilinear: non-finite query coordinate");
    const double fx0 = std::floor(gx);
    const double fy0 = std::floor(gy);
    // Reduce before converting so that large displacements cannot overflow int.
    const int ix = grid.wrap_x(static_cast<int>(std::fmod(fx0, static_cast<double>(grid.nx))));
    const int iy = grid.wrap_y(static_cast<int>(std::fmod(fy0, static_cast<double>(grid.ny))));
    const int ix1 = ix + 1 == grid.nx ? 0 : ix + 1;
    const int iy1 = iy + 1 == grid.ny ? 0 : iy + 1;
    return BilinearStencil{grid.index(ix, iy), grid.index(ix1, iy), grid.index(ix, iy1), grid.index(ix1, iy1),
                           gx - fx0, gy - fy0};
}

BilinearStencil bilinear_stencil(const DeformationField& phi, std::size_t i) {
    const Grid& g = phi.grid();
    const std::size_t nx = static_cast<std::size_t>(g.nx);
    const double gx = static_cast<double>(i % nx) + phi.displacement().x()[i] * g.nx;
    const double gy = static_cast<double>(i / nx) + phi.displacement().y()[i] * g.ny;
    return bilinear_stencil(g, gx, gy);
}

void interpolate_gradient(const ScalarField& f, const BilinearStencil& s, double& dfdx, double& dfdy) {
    const Grid& g = f.grid();
    const double ddx = (1.0 - s.fy) * (f[s.i10] - f[s.i00]) + s.fy * (f[s.i11] - f[s.i01]);
    const double ddy = (1.0 - s.fx) * (f[s.i01] - f[s.i00]) + s.fx * (f[s.i11] - f[s.i10]);
    dfdx = ddx * g.nx;
    dfdy = ddy * g.ny;
}

ScalarField sample_bilinear(const ScalarField& f, const DeformationField& points) {
    require_same_grid(f.grid(), points.grid(), "sample_bilinear");
    ScalarField out(f.grid());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = interpolate(f, bilinear_stencil(points, i));
    return out;
}

VectorField sample_bilinear(const VectorField& f, const DeformationField& points) {
    require_same_grid(f.grid(), points.grid(), "sample_bilinear");
    VectorField out(f.grid());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const BilinearStencil s = bilinear_stencil(points, i);
        out.x()[i] = interpolate(f.x(), s);
        out.y()[i] = interpolate(f.y(), s);
    }
    return out;
}

DeformationPath integrate_flow(const GeodesicPath& path) {
    if (path.velocities.size() != static_cast<std::size_t>(path.steps) + 1)
        throw ShapeError("integrate_flow: path has inconsistent step count");
    const Grid& g = path.grid();
    const double h = path.dt();
    DeformationPath out;
    out.deformations.reserve(path.velocities.size());
    out.deformations.push_back(DeformationField::identity(g));
    for (int i = 0; i < path.steps; ++i) {
        const DeformationField& phi = out.deformations.back();
        VectorField u = phi.displacement();
        u.axpy_inplace(h, sample_bilinear(path.velocities[static_cast<std::size_t>(i)], phi));
        out.deformations.emplace_back(std::move(u));
    }
    return out;
}

ScalarField warp(const ScalarField& image, const DeformationField& phi) {
    return sample_bilinear(image, phi);
}

ScalarField det_jacobian(const DeformationField& phi) {
    const Jacobian du = jacobian(phi.displacement());
    ScalarField det(phi.grid());
    for (std::size_t i = 0; i < det.size(); ++i) {
        const double a = 1.0 + du.d[0][0][i];
        const double b = du.d[0][1][i];
        const double c = du.d[1][0][i];
        const double d = 1.0 + du.d[1][1][i];
        det[i] = a * d - b * c;
    }
    return det;
}

DeformationField translation(const Grid& grid, double cx, double cy) {
    return DeformationField(VectorField(grid, cx, cy));
}

} // namespace igg
