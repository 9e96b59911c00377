#include "doctest.h"

#include <cmath>
#include <numbers>

#include "igg/flow.hpp"
#include "test_util.hpp"

using namespace igg;
using namespace igg::testing;

TEST_CASE("sample_bilinear") {
    Grid g(8, 8);
    std::mt19937_64 rng(2);
    const ScalarField f = random_scalar(g, rng);
    const VectorField vf = random_vector(g, rng);

    SUBCASE("identity is exact") {
        CHECK(linf_error(sample_bilinear(f, DeformationField::identity(g)), f) == 0.0);
        CHECK(linf_error(sample_bilinear(vf, DeformationField::identity(g)), vf) == 0.0);
    }
    SUBCASE("constants interpolate exactly") {
        VectorField u(g);
        for (std::size_t i = 0; i < u.size(); ++i) {
            u.x()[i] = 0.375 * std::sin(double(i));
            u.y()[i] = -1.5 * std::cos(double(i));
        }
        const ScalarField c(g, 0.625);
        CHECK(linf_error(sample_bilinear(c, DeformationField(u)), c) < 1e-15);
    }
    SUBCASE("cell center averages the four corners") {
        ScalarField ramp(g);
        ramp.at(2, 3) = 1.0;
        ramp.at(3, 3) = 2.0;
        ramp.at(2, 4) = 4.0;
        ramp.at(3, 4) = 8.0;
        DeformationField phi(g);
        const std::size_t i = g.index(2, 3);
        phi.displacement().x()[i] = 0.5 * g.hx();
        phi.displacement().y()[i] = 0.5 * g.hy();
        CHECK(sample_bilinear(ramp, phi)[i] == doctest::Approx(15.0 / 4.0).epsilon(1e-15));
    }
    SUBCASE("wraps across the seam") {
        DeformationField phi(g);
        const std::size_t i = g.index(7, 0);
        phi.displacement().x()[i] = 0.5 * g.hx();
        const double expected = 0.5 * (f.at(7, 0) + f.at(0, 0));
        CHECK(sample_bilinear(f, phi)[i] == doctest::Approx(expected).epsilon(1e-14));
        // A full period away samples the same value.
        phi.displacement().x()[i] = 0.5 * g.hx() - 3.0;
        CHECK(sample_bilinear(f, phi)[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("non-finite coordinates") {
        DeformationField phi(g);
        phi.displacement().y()[4] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(sample_bilinear(f, phi), NumericError);
    }
}

TEST_CASE("integrate_flow") {
    Grid g(16, 16);
    const OperatorConfig cfg{3.0, 3};

    const DeformationPath still = integrate_flow(shoot(VectorField(g), cfg, 10));
    REQUIRE(still.deformations.size() == 11u);
    for (const auto& phi : still.deformations)
        CHECK(phi.displacement().linf_norm() == 0.0);

    // Dyadic step sizes keep the translation exact.
    const DeformationPath shift = integrate_flow(shoot(VectorField(g, 0.25, 0.0), cfg, 8));
    CHECK(linf_error(shift.final().displacement(), VectorField(g, 0.25, 0.0)) == 0.0);
}

TEST_CASE("integrate_flow converges at first order") {
    Grid g(32, 32);
    // Rotation-like bandlimited velocity held constant in time.
    VectorField v(g);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double x = 2 * std::numbers::pi * ix * g.hx();
            const double y = 2 * std::numbers::pi * iy * g.hy();
            v.x().at(ix, iy) = 0.1 * std::sin(x) * std::cos(y);
            v.y().at(ix, iy) = -0.1 * std::cos(x) * std::sin(y);
        }
    }
    auto final_for = [&](int steps) {
        GeodesicPath p{steps, 1.0, std::vector<VectorField>(steps + 1, v), OperatorConfig{}};
        return integrate_flow(p).final().displacement();
    };
    const VectorField fine = final_for(256);
    const double e16 = linf_error(final_for(16), fine);
    const double e32 = linf_error(final_for(32), fine);
    MESSAGE("flow self-convergence ratio " << e16 / e32);
    CHECK(e16 / e32 > 1.7);
    CHECK(e16 / e32 < 2.5);
}

TEST_CASE("warp") {
    Grid g(8, 8);
    std::mt19937_64 rng(9);
    const ScalarField img = random_scalar(g, rng, 0.0, 1.0);
    CHECK(linf_error(warp(img, DeformationField::identity(g)), img) == 0.0);

    const ScalarField shifted = warp(img, translation(g, g.hx(), 0.0));
    for (int iy = 0; iy < 8; ++iy)
        for (int ix = 0; ix < 8; ++ix)
            CHECK(shifted.at(ix, iy) == img.at(g.wrap_x(ix + 1), iy));

    // Half-cell shift of sin(2 pi x): the interpolant averages neighbours.
    Grid g16(16, 16);
    const ScalarField mode = mode_field(g16, 1.0, 0.0, 1, 0).x();
    const ScalarField half = warp(mode, translation(g16, 0.5 * g16.hx(), 0.0));
    for (int ix = 0; ix < 16; ++ix) {
        const double a = std::sin(2 * std::numbers::pi * ix / 16.0);
        const double b = std::sin(2 * std::numbers::pi * (ix + 1) / 16.0);
        const double attenuated =
            std::cos(std::numbers::pi / 16.0) * std::sin(2 * std::numbers::pi * (ix + 0.5) / 16.0);
        CHECK(half.at(ix, 3) == doctest::Approx(0.5 * (a + b)).epsilon(1e-14));
        CHECK(half.at(ix, 3) == doctest::Approx(attenuated).epsilon(1e-12));
    }
}

TEST_CASE("det_jacobian") {
    Grid g(16, 16);
    const ScalarField ones(g, 1.0);
    CHECK(linf_error(det_jacobian(DeformationField::identity(g)), ones) == 0.0);
    CHECK(linf_error(det_jacobian(translation(g, 0.3, -0.2)), ones) == 0.0);

    // Smooth periodic displacement with an analytic central-difference Jacobian:
    // u = (a sin(2 pi y), b sin(2 pi x)) gives det = 1 - a b c^2 cos(2 pi x) cos(2 pi y),
    // with c = sin(2 pi h) / h the discrete derivative factor.
    const double a = 0.02, b = 0.03;
    DeformationField phi(g);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            phi.displacement().x().at(ix, iy) = a * std::sin(2 * std::numbers::pi * iy * g.hy());
            phi.displacement().y().at(ix, iy) = b * std::sin(2 * std::numbers::pi * ix * g.hx());
        }
    }
    const ScalarField det = det_jacobian(phi);
    const double c = std::sin(2 * std::numbers::pi * g.hx()) / g.hx();
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double expected = 1.0 - a * b * c * c * std::cos(2 * std::numbers::pi * ix * g.hx()) *
                                              std::cos(2 * std::numbers::pi * iy * g.hy());
            CHECK(std::abs(det.at(ix, iy) - expected) < 1e-10);
        }
    }

    // Pure shear of one component only: det stays exactly 1 in exact arithmetic.
    DeformationField shear(g);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            shear.displacement().x().at(ix, iy) = 0.1 * std::sin(2 * std::numbers::pi * iy * g.hy());
    CHECK(linf_error(det_jacobian(shear), ones) < 1e-10);
}

TEST_CASE("small geodesics stay diffeomorphic") {
    Grid g(32, 32);
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 3; ++trial) {
        VectorField v0 = random_bandlimited_vector(g, 1, rng);
        v0.scale_inplace(0.2 / v0.linf_norm());
        const DeformationPath flow = integrate_flow(shoot(v0, OperatorConfig{1.0, 3}, 10));
        const ScalarField det = det_jacobian(flow.final());
        CHECK(*std::min_element(det.values().begin(), det.values().end()) > 0.0);
    }
}

TEST_CASE("short-time scaling symmetry") {
    Grid g(32, 32);
    std::mt19937_64 rng(19);
    VectorField v0 = random_bandlimited_vector(g, 1, rng);
    v0.scale_inplace(0.1 / v0.linf_norm());
    const OperatorConfig cfg{3.0, 3};
    const int steps = 32;
    const DeformationPath full = integrate_flow(shoot_for(v0, cfg, steps, 1.0));
    VectorField doubled = v0;
    doubled.scale_inplace(2.0);
    const DeformationPath half = integrate_flow(shoot_for(doubled, cfg, steps / 2, 0.5));
    CHECK(linf_error(full.final().displacement(), half.final().displacement()) <= 5e-3);
}
