#include "doctest.h"

#include <filesystem>

#include "igg/dataset.hpp"
#include "igg/io.hpp"

using namespace igg;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("igg_test_dataset_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::vector<std::filesystem::path> files_under(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            out.push_back(std::filesystem::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("growth text follows the generator grammar") {
    CHECK(growth_text(GrowthSpec{2, 15, 40}) == "lobes: 2; growth: 15 percent per step; direction: 40 degrees");
}

TEST_CASE("zero growth gives identical frames") {
    GrowthDatasetConfig cfg;
    const Sequence seq = render_growth_sequence(GrowthSpec{3, 0, 77}, cfg, "s");
    REQUIRE(seq.frames.size() == 11u);
    for (const auto& f : seq.frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK(f[i] == seq.frames.front()[i]);
}

TEST_CASE("foreground area grows frame to frame") {
    GrowthDatasetConfig cfg;
    for (const GrowthSpec& spec : draw_growth_specs(cfg, 40, 3)) {
        const Sequence seq = render_growth_sequence(spec, cfg, "s");
        for (std::size_t t = 1; t < seq.frames.size(); ++t)
            CHECK(foreground_area(seq.frames[t]) >= foreground_area(seq.frames[t - 1]));
        CHECK(foreground_area(seq.frames.back()) > foreground_area(seq.frames.front()));
    }
}

TEST_CASE("frames stay in the unit interval") {
    GrowthDatasetConfig cfg;
    const Sequence seq = render_growth_sequence(GrowthSpec{3, 30, 10}, cfg, "s");
    for (const auto& f : seq.frames)
        for (double v : f.values())
            CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("specs respect the configured ranges") {
    GrowthDatasetConfig cfg;
    cfg.lobes_min = 2;
    cfg.growth_min_percent = 10;
    cfg.growth_max_percent = 12;
    for (const GrowthSpec& s : draw_growth_specs(cfg, 200, 8)) {
        CHECK((s.lobes >= 2 && s.lobes <= 3));
        CHECK((s.growth_percent >= 10 && s.growth_percent <= 12));
        CHECK((s.direction_deg >= 0 && s.direction_deg < 360));
    }
    cfg.lobes_max = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset files are byte-identical for a fixed seed") {
    GrowthDatasetConfig cfg;
    cfg.grid = Grid(16, 16);
    cfg.time_steps = 3;
    const auto a = temp_dir("a"), b = temp_dir("b");
    write_dataset(generate_growth_dataset(cfg, 4, 21), a);
    write_dataset(generate_growth_dataset(cfg, 4, 21), b);
    const auto fa = files_under(a);
    REQUIRE(fa.size() == 4u * 5u);
    CHECK(fa == files_under(b));
    for (const auto& f : fa)
        CHECK(read_file(a / f) == read_file(b / f));

    const auto c = temp_dir("c");
    write_dataset(generate_growth_dataset(cfg, 4, 22), c);
    bool differs = false;
    for (const auto& f : fa)
        differs = differs || read_file(a / f) != read_file(c / f);
    CHECK(differs);
}

TEST_CASE("dataset reads back in order") {
    GrowthDatasetConfig cfg;
    cfg.grid = Grid(16, 8);
    cfg.time_steps = 2;
    const auto dir = temp_dir("read");
    const std::vector<Sequence> data = generate_growth_dataset(cfg, 3, 5);
    write_dataset(data, dir);
    std::filesystem::create_directories(dir / "empty");
    const std::vector<Sequence> back = read_dataset(dir);
    REQUIRE(back.size() == 3u);
    for (std::size_t n = 0; n < 3; ++n) {
        CHECK(back[n].name == data[n].name);
        CHECK(back[n].text == data[n].text);
        REQUIRE(back[n].frames.size() == 3u);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < back[n].frames[t].size(); ++i)
                CHECK(std::abs(back[n].frames[t][i] - data[n].frames[t][i]) <= 0.5 / 65535.0 + 1e-15);
    }
    CHECK_THROWS_AS(read_dataset(dir / "empty"), DataError);
    CHECK_THROWS_AS(read_dataset(dir / "missing"), DataError);
}
