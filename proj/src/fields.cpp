#include "igg/fields.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace igg {

Grid::Grid(int nx_, int ny_) : nx(nx_), ny(ny_) {
    if (nx < 4 || ny < 4)
        throw ConfigError("grid dimensions must be at least 4, got " + std::to_string(nx) + "x" + std::to_string(ny));
    if (nx % 2 != 0 || ny % 2 != 0)
        throw ConfigError("grid dimensions must be even, got " + std::to_string(nx) + "x" + std::to_string(ny));
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": grid mismatch (" + std::to_string(a.nx) + "x" + std::to_string(a.ny) +
                         " vs " + std::to_string(b.nx) + "x" + std::to_string(b.ny) + ")");
    }
}

ScalarField::ScalarField(const Grid& grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

ScalarField::ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
        throw ShapeError("ScalarField: expected " + std::to_string(grid_.size()) + " values, got " +
                         std::to_string(values_.size()));
}

bool ScalarField::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

VectorField::VectorField(const Grid& grid, double fill_x, double fill_y) : x_(grid, fill_x), y_(grid, fill_y) {}

VectorField::VectorField(ScalarField x, ScalarField y) : x_(std::move(x)), y_(std::move(y)) {
    require_same_grid(x_.grid(), y_.grid(), "VectorField");
}

double VectorField::linf_norm() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
        m = std::max({m, std::abs(x_[i]), std::abs(y_[i])});
    return m;
}

void VectorField::axpy_inplace(double a, const VectorField& other) {
    require_same_grid(grid(), other.grid(), "axpy_inplace");
    for (std::size_t i = 0; i < size(); ++i) {
        x_[i] += a * other.x_[i];
        y_[i] += a * other.y_[i];
    }
}

void VectorField::scale_inplace(double s) {
    for (std::size_t i = 0; i < size(); ++i) {
        x_[i] *= s;
        y_[i] *= s;
    }
}

double DeformationField::point_x(std::size_t i) const {
    const auto& g = grid();
    return static_cast<double>(i % static_cast<std::size_t>(g.nx)) * g.hx() + displacement_.x()[i];
}

double DeformationField::point_y(std::size_t i) const {
    const auto& g = grid();
    return static_cast<double>(i / static_cast<std::size_t>(g.nx)) * g.hy() + displacement_.y()[i];
}

VectorField field_axpy(double a, const VectorField& x, const VectorField& y) {
    require_same_grid(x.grid(), y.grid(), "field_axpy");
    VectorField out = y;
    out.axpy_inplace(a, x);
    return out;
}

double inner_product(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "inner_product");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += a[i] * b[i];
    return sum * a.grid().cell_area();
}

double inner_product(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid(), b.grid(), "inner_product");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += a.x()[i] * b.x()[i] + a.y()[i] * b.y()[i];
    return sum * a.grid().cell_area();
}

double linf_error(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "linf_error");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double linf_error(const VectorField& a, const VectorField& b) {
    require_same_grid(a.grid(), b.grid(), "linf_error");
    return std::max(linf_error(a.x(), b.x()), linf_error(a.y(), b.y()));
}

} // namespace igg
