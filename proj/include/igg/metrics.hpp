#pragma once

#include <vector>

#include "igg/flow.hpp"
#include "igg/latent.hpp"  // geodesic_mae_curve

namespace igg {

inline constexpr int kSsimWindow = 8;

// Mean SSIM over all periodic 8x8 windows at stride 1, with
// C1 = 0.01^2 and C2 = 0.03^2 for intensities in [0, 1]. Windows shrink to
// the grid size on grids smaller than 8.
double ssim(const ScalarField& a, const ScalarField& b);

struct DetJacStats {
    double min = 1.0;
    double mean = 1.0;
    double negative_fraction = 0.0;
};

DetJacStats detjac_stats(const DeformationField& phi);
DetJacStats detjac_stats(const ScalarField& det);

struct ConfidenceMaps {
    ScalarField mean;
    ScalarField lower;
    ScalarField upper;
    ScalarField ci_width;
    int sample_count = 0;
};

// Pixel-wise mean and mean -/+ 2 std, using the unbiased (n - 1) estimator.
ConfidenceMaps confidence_maps(const std::vector<ScalarField>& samples);

} // namespace igg
