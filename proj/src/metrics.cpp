#include "igg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace igg {

namespace {

void check_unit_range(const ScalarField& s, const char* name) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(s[i] >= 0.0 && s[i] <= 1.0)) {
            throw DataError(std::string("ssim: ") + name + " intensity " + std::to_string(s[i]) + " at index " +
                            std::to_string(i) + " lies outside [0, 1]");
        }
    }
}

} // namespace

double ssim(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid(), "ssim");
    check_unit_range(a, "first");
    check_unit_range(b, "second");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const Grid& g = a.grid();
    const int wx = std::min(kSsimWindow, g.nx), wy = std::min(kSsimWindow, g.ny);
    const double inv = 1.0 / (wx * wy);
    double total = 0.0;
    for (int oy = 0; oy < g.ny; ++oy) {
        for (int ox = 0; ox < g.nx; ++ox) {
            double ma = 0.0, mb = 0.0;
            for (int dy = 0; dy < wy; ++dy) {
                for (int dx = 0; dx < wx; ++dx) {
                    const std::size_t i = g.index(g.wrap_x(ox + dx), g.wrap_y(oy + dy));
                    ma += a[i];
                    mb += b[i];
                }
            }
            ma *= inv;
            mb *= inv;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int dy = 0; dy < wy; ++dy) {
                for (int dx = 0; dx < wx; ++dx) {
                    const std::size_t i = g.index(g.wrap_x(ox + dx), g.wrap_y(oy + dy));
                    const double da = a[i] - ma, db = b[i] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va *= inv;
            vb *= inv;
            cov *= inv;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    return total / static_cast<double>(g.size());
}

DetJacStats detjac_stats(const ScalarField& det) {
    DetJacStats s;
    s.min = det[0];
    double sum = 0.0;
    std::size_t negative = 0;
    for (double d : det.values()) {
        s.min = std::min(s.min, d);
        sum += d;
        if (d < 0.0)
            ++negative;
    }
    s.mean = sum / static_cast<double>(det.size());
    s.negative_fraction = static_cast<double>(negative) / static_cast<double>(det.size());
    return s;
}

DetJacStats detjac_stats(const DeformationField& phi) { return detjac_stats(det_jacobian(phi)); }

ConfidenceMaps confidence_maps(const std::vector<ScalarField>& samples) {
    if (samples.size() < 2)
        throw DataError("confidence_maps: need at least 2 samples, got " + std::to_string(samples.size()));
    const Grid& g = samples.front().grid();
    for (const auto& s : samples)
        require_same_grid(s.grid(), g, "confidence_maps");
    const double n = static_cast<double>(samples.size());
    ConfidenceMaps out{ScalarField(g), ScalarField(g), ScalarField(g), ScalarField(g),
                       static_cast<int>(samples.size())};
    for (std::size_t i = 0; i < g.size(); ++i) {
        double sum = 0.0;
        for (const auto& s : samples)
            sum += s[i];
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& s : samples)
            ss += (s[i] - mean) * (s[i] - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        out.mean[i] = mean;
        out.lower[i] = mean - 2.0 * sd;
        out.upper[i] = mean + 2.0 * sd;
        out.ci_width[i] = out.upper[i] - out.lower[i];
    }
    return out;
}

} // namespace igg
