#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "igg/error.hpp"

namespace igg {

// Sampling of the periodic unit square. Sample (ix, iy) sits at
// (ix / nx, iy / ny); storage is row-major with x fastest.
struct Grid {
    int nx = 0;
    int ny = 0;

    Grid() = default;
    Grid(int nx_, int ny_);

    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    double cell_area() const { return hx() * hy(); }
    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    std::size_t index(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix);
    }
    // Periodic index wrap for any integer offset.
    int wrap_x(int ix) const { return ((ix % nx) + nx) % nx; }
    int wrap_y(int iy) const { return ((iy % ny) + ny) % ny; }

    bool operator==(const Grid&) const = default;
};

void require_same_grid(const Grid& a, const Grid& b, const char* what);

class ScalarField {
  public:
    ScalarField() = default;
    explicit ScalarField(const Grid& grid, double fill = 0.0);
    ScalarField(const Grid& grid, std::vector<double> values);

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(int ix, int iy) { return values_[grid_.index(ix, iy)]; }
    double at(int ix, int iy) const { return values_[grid_.index(ix, iy)]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool all_finite() const;

  private:
    Grid grid_;
    std::vector<double> values_;
};

class VectorField {
  public:
    VectorField() = default;
    explicit VectorField(const Grid& grid, double fill_x = 0.0, double fill_y = 0.0);
    VectorField(ScalarField x, ScalarField y);

    const Grid& grid() const { return x_.grid(); }
    std::size_t size() const { return x_.size(); }

    ScalarField& x() { return x_; }
    const ScalarField& x() const { return x_; }
    ScalarField& y() { return y_; }
    const ScalarField& y() const { return y_; }
    ScalarField& component(int c) { return c == 0 ? x_ : y_; }
    const ScalarField& component(int c) const { return c == 0 ? x_ : y_; }

    bool all_finite() const { return x_.all_finite() && y_.all_finite(); }
    double linf_norm() const;

    // In-place a*other + *this.
    void axpy_inplace(double a, const VectorField& other);
    void scale_inplace(double s);

  private:
    ScalarField x_;
    ScalarField y_;
};

// phi(x) = x + u(x), stored as the displacement u. Coordinates are not
// wrapped; sampling wraps.
class DeformationField {
  public:
    DeformationField() = default;
    explicit DeformationField(const Grid& grid) : displacement_(grid) {}
    explicit DeformationField(VectorField displacement) : displacement_(std::move(displacement)) {}

    static DeformationField identity(const Grid& grid) { return DeformationField(grid); }

    const Grid& grid() const { return displacement_.grid(); }
    VectorField& displacement() { return displacement_; }
    const VectorField& displacement() const { return displacement_; }

    // Absolute coordinates of phi at sample i.
    double point_x(std::size_t i) const;
    double point_y(std::size_t i) const;

  private:
    VectorField displacement_;
};

VectorField field_axpy(double a, const VectorField& x, const VectorField& y);

// Grid-weighted pairing sum a(x).b(x) hx hy.
double inner_product(const VectorField& a, const VectorField& b);
double inner_product(const ScalarField& a, const ScalarField& b);

double linf_error(const VectorField& a, const VectorField& b);
double linf_error(const ScalarField& a, const ScalarField& b);

} // namespace igg
