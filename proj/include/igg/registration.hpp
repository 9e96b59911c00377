#pragma once

#include <memory>
#include <string>
#include <vector>

#include "igg/epdiff.hpp"
#include "igg/flow.hpp"

namespace igg {

struct RegistrationConfig {
    double lambda = 1e4;
    OperatorConfig op;
    int steps = kDefaultTimeSteps;
    IntegratorKind integrator = IntegratorKind::Euler;
    EpdiffForm form = EpdiffForm::Conservative;
    int max_iters = 300;
    double step_size = 1e-2;
    double grad_tol = 1e-4;
    // Regularizer weight 1/2 instead of 1.
    bool energy_half_factor = true;

    void validate() const;
};

struct EnergyTerms {
    double total = 0.0;
    double data = 0.0;
    double reg = 0.0;
};

struct EnergyRecord {
    int iteration = 0;
    EnergyTerms energy;
};

struct RegistrationResult {
    VectorField v0;
    GeodesicPath path;
    DeformationPath deformation;
    std::vector<EnergyRecord> energy_history;
    bool converged = false;
    double min_detjac = 1.0;
};

// Sum of squared differences weighted by the cell area.
double ssd(const ScalarField& a, const ScalarField& b);

EnergyTerms energy(const VectorField& v0, const ScalarField& source, const ScalarField& target,
                   const RegistrationConfig& cfg);

// Gradient of the discrete energy with respect to v0, in the grid-weighted
// pairing: dE = inner_product(gradient, dv0). Requires the Euler integrator.
VectorField energy_gradient(const VectorField& v0, const ScalarField& source, const ScalarField& target,
                            const RegistrationConfig& cfg);

// Reverse-mode product g -> (d rhs / d v)^T g for epdiff_rhs at v, in plain
// (unweighted) coordinates.
VectorField epdiff_rhs_vjp(const VectorField& v, const VectorField& g, const ScalarField& symbol,
                           EpdiffForm form = EpdiffForm::Conservative);

// Gradient descent along the K-smoothed gradient with Armijo backtracking.
// Source and target intensities must lie in [0, 1].
RegistrationResult register_images(const ScalarField& source, const ScalarField& target,
                                   const RegistrationConfig& cfg,
                                   const VectorField* initial_velocity = nullptr);

// Raised when the line search cannot decrease the energy. Carries the
// result assembled from the last accepted iterate.
class StallError : public NumericError {
  public:
    StallError(const std::string& what, int iteration, std::shared_ptr<const RegistrationResult> partial)
        : NumericError(what), iteration_(iteration), partial_(std::move(partial)) {}
    int iteration() const { return iteration_; }
    const RegistrationResult& partial() const { return *partial_; }

  private:
    int iteration_;
    std::shared_ptr<const RegistrationResult> partial_;
};

} // namespace igg
