#pragma once

#include <memory>
#include <span>
#include <vector>

#include "igg/epdiff.hpp"

namespace igg {

// One retained Fourier mode of the latent codec. Modes whose conjugate is
// also retained are stored once, as a (re, im) pair; self-conjugate modes
// store only the real part.
struct LatentMode {
    int kx = 0;  // DFT index on the x axis
    int ky = 0;  // DFT index on the y axis
    bool self_conjugate = false;
    std::size_t offset = 0;  // position of the real part within a component block
};

// Bandlimited Fourier codec: keeps signed frequencies |kx| <= r and
// |ky| <= r. With 2r equal to the grid size every mode is retained.
class LatentConfig {
  public:
    LatentConfig(const Grid& grid, int bandlimit);

    const Grid& grid() const { return grid_; }
    int bandlimit() const { return bandlimit_; }
    // Real coefficients per velocity component.
    std::size_t component_dim() const { return component_dim_; }
    std::size_t latent_dim() const { return 2 * component_dim_; }
    const std::vector<LatentMode>& modes() const { return *modes_; }

    bool operator==(const LatentConfig& other) const {
        return grid_ == other.grid_ && bandlimit_ == other.bandlimit_;
    }

  private:
    Grid grid_;
    int bandlimit_;
    std::size_t component_dim_ = 0;
    std::shared_ptr<const std::vector<LatentMode>> modes_;
};

inline constexpr int kDefaultBandlimit = 8;

// Coefficients are laid out as the x-component block followed by the
// y-component block. Within a block, modes follow LatentConfig::modes() and
// each pair contributes its real then imaginary part. Coefficients use the
// normalized convention: a constant field c has DC coefficient c.
struct LatentVelocity {
    LatentConfig config;
    std::vector<double> coeffs;

    explicit LatentVelocity(const LatentConfig& cfg) : config(cfg), coeffs(cfg.latent_dim(), 0.0) {}
    LatentVelocity(const LatentConfig& cfg, std::vector<double> values);
};

struct LatentGeodesic {
    int steps = 0;
    std::vector<LatentVelocity> latents;

    const LatentConfig& config() const { return latents.front().config; }
    // Time-major concatenation of all coefficient vectors.
    std::vector<double> flatten() const;
    static LatentGeodesic unflatten(const LatentConfig& cfg, int steps, std::span<const double> flat);
};

LatentVelocity encode(const VectorField& v, const LatentConfig& cfg);
VectorField decode(const LatentVelocity& z);

// Squared grid-weighted L2 norm of decode(z), computed from the coefficients.
double latent_norm_squared(const LatentVelocity& z);

// Euler propagation in latent space: each step decodes, evaluates the EPDiff
// right-hand side on the grid and re-encodes the update.
LatentGeodesic latent_shoot(const LatentVelocity& z0, const OperatorConfig& op, int steps,
                            EpdiffForm form = EpdiffForm::Conservative);

LatentGeodesic encode_path(const GeodesicPath& path, const LatentConfig& cfg);

// Per time index, mean over pixels and both components of
// |decode(z_t) - v_t|.
std::vector<double> geodesic_mae_curve(const LatentGeodesic& latent, const GeodesicPath& reference);

} // namespace igg
