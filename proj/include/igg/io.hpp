#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igg/diffusion.hpp"

namespace igg {

// Binary PGM (P5) with maxval 255 or 65535. Intensities map to [0, 1];
// writing rounds to the nearest level and clamps to [0, maxval].
ScalarField pgm_decode(std::span<const std::uint8_t> bytes, std::string_view name = "pgm");
std::vector<std::uint8_t> pgm_encode(const ScalarField& s, int maxval = 255);
ScalarField pgm_read(const std::filesystem::path& path);
void pgm_write(const ScalarField& s, const std::filesystem::path& path, int maxval = 255);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

// Comma separated rows with a header line; fields are written verbatim.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

// Velocity fields as CSV rows ix,iy,vx,vy in storage order.
void write_velocity_csv(const VectorField& v, const std::filesystem::path& path);
VectorField read_velocity_csv(const Grid& grid, const std::filesystem::path& path);

// Scalar maps as CSV rows ix,iy,value.
void write_scalar_csv(const ScalarField& s, const std::filesystem::path& path, std::string_view column);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

// Checkpoint layout, all integers and doubles little-endian:
//   "IGGC" | u16 version | u32 section count | count x (4-byte tag, u64 offset, u64 size)
// followed by the sections, each at its offset from the start of the file:
//   LATC: i32 nx, ny, bandlimit, time_steps, pool_side
//   SCHD: i32 T, f64 beta_start, f64 beta_end
//   NORM: u64 dim, f64 mean[dim], f64 scale[dim]
//   NETW: u64 latent, image, text, time dims, u32 hidden count, u64 widths,
//         u32 prediction (0 noise, 1 data), then per layer the weights (out x in, row-major) and the biases.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> checkpoint_encode(const DiffusionModel& model);
DiffusionModel checkpoint_decode(std::span<const std::uint8_t> bytes, std::string_view name = "checkpoint");
void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& path);
DiffusionModel load_checkpoint(const std::filesystem::path& path);

// Latent trajectories: "IGGL" | u16 version | i32 nx, ny, bandlimit, steps |
// f64 values of the flattened geodesic.
std::vector<std::uint8_t> latent_encode(const LatentGeodesic& g);
LatentGeodesic latent_decode(std::span<const std::uint8_t> bytes, std::string_view name = "latent");

} // namespace igg
