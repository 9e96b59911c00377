#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "igg/fields.hpp"

namespace igg {

// One synthetic growth sequence: a central bud with elliptical lobes spread
// evenly around it. Lobe semi-axes grow linearly by `growth_percent` of their
// initial size per frame.
struct GrowthSpec {
    int lobes = 1;
    int growth_percent = 10;
    int direction_deg = 0;
};

inline constexpr double kBudRadius = 0.07;
inline constexpr double kLobeLength = 0.05;
inline constexpr double kLobeAspect = 0.6;
inline constexpr double kLobeRootOffset = 0.03;

struct GrowthDatasetConfig {
    Grid grid{32, 32};
    int time_steps = 10;
    int lobes_min = 1;
    int lobes_max = 3;
    int growth_min_percent = 5;
    int growth_max_percent = 30;

    void validate() const;
};

struct Sequence {
    std::string name;
    std::vector<ScalarField> frames;
    std::string text;
};

std::string growth_text(const GrowthSpec& spec);
ScalarField render_growth_frame(const Grid& grid, const GrowthSpec& spec, double t);
Sequence render_growth_sequence(const GrowthSpec& spec, const GrowthDatasetConfig& cfg, std::string name);
std::vector<GrowthSpec> draw_growth_specs(const GrowthDatasetConfig& cfg, int count, std::uint64_t seed);
std::vector<Sequence> generate_growth_dataset(const GrowthDatasetConfig& cfg, int count, std::uint64_t seed);

// Layout: <dir>/<name>/frame_<i>.pgm for each frame and <dir>/<name>/text.txt.
void write_dataset(const std::vector<Sequence>& data, const std::filesystem::path& dir);
// Reads every subdirectory holding at least two PGM frames, in name order.
// Frames are ordered by file name; text.txt is optional.
std::vector<Sequence> read_dataset(const std::filesystem::path& dir);

// Pixels with intensity above 0.5.
std::size_t foreground_area(const ScalarField& s);

} // namespace igg
