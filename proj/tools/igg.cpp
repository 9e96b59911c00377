#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "igg/config.hpp"
#include "igg/dataset.hpp"
#include "igg/diffusion.hpp"
#include "igg/epdiff.hpp"
#include "igg/flow.hpp"
#include "igg/io.hpp"
#include "igg/metrics.hpp"
#include "igg/pipeline.hpp"
#include "igg/registration.hpp"

namespace fs = std::filesystem;
using namespace igg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct ConfigOptions {
    std::string path;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;
};

// --config, repeated --set key=value and one --<key> flag per config key.
void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
    cmd->add_option("--config", opts.path, "key = value configuration file");
    cmd->add_option("--set", opts.sets, "override a configuration key (key=value)");
    for (const std::string& key : RunConfig::keys()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        cmd->add_option_function<std::string>(
            "--" + flag, [&opts, key](const std::string& v) { opts.flags.emplace_back(key, v); },
            "override config key " + key);
    }
}

RunConfig resolve_config(const ConfigOptions& opts) {
    RunConfig cfg = opts.path.empty() ? RunConfig{} : load_run_config(opts.path);
    for (const auto& [key, value] : opts.flags)
        cfg.set(key, value);
    apply_overrides(cfg, opts.sets);
    cfg.validate();
    return cfg;
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw DataError("cannot create directory " + dir.string());
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
    return buf;
}

void write_deformation_csv(const DeformationField& phi, const fs::path& path) {
    const Grid& g = phi.grid();
    std::vector<std::vector<std::string>> rows;
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            rows.push_back({std::to_string(ix), std::to_string(iy),
                            format_double(phi.displacement().x().at(ix, iy)),
                            format_double(phi.displacement().y().at(ix, iy))});
    write_csv(path, {"ix", "iy", "ux", "uy"}, rows);
}

// Gray level det/2, so identity maps to mid gray and folds to black.
ScalarField detjac_heatmap(const ScalarField& det) {
    ScalarField out(det.grid());
    for (std::size_t i = 0; i < det.size(); ++i)
        out[i] = std::clamp(0.5 * det[i], 0.0, 1.0);
    return out;
}

std::vector<std::string> detjac_row(const DetJacStats& s) {
    return {format_double(s.min), format_double(s.mean), format_double(s.negative_fraction)};
}

void write_detjac(const ScalarField& det, const fs::path& dir) {
    write_scalar_csv(det, dir / "detjac.csv", "detjac");
    pgm_write(detjac_heatmap(det), dir / "detjac.pgm", 65535);
    std::vector<std::string> row = detjac_row(detjac_stats(det));
    write_csv(dir / "detjac_stats.csv", {"min", "mean", "negative_fraction"}, {row});
}

GeodesicPath decode_path(const LatentGeodesic& latent, const RunConfig& cfg) {
    GeodesicPath path{latent.steps, 1.0, {}, cfg.op(), cfg.registration().form};
    for (const auto& z : latent.latents)
        path.velocities.push_back(decode(z));
    return path;
}

std::vector<fs::path> sample_dirs(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw DataError("sample directory " + dir.string() + " does not exist");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "latent.bin"))
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty())
        throw DataError(dir.string() + " holds no sample directories");
    return out;
}

int cmd_shoot(const RunConfig& cfg, const fs::path& v0_file, const std::string& tmpl, const fs::path& out) {
    const Grid grid(cfg.nx, cfg.ny);
    const VectorField v0 = read_velocity_csv(grid, v0_file);
    std::optional<ScalarField> image;
    if (!tmpl.empty()) {
        image = pgm_read(tmpl);
        require_same_grid(image->grid(), grid, "shoot template");
    }
    const RegistrationConfig rc = cfg.registration();
    const GeodesicPath path = shoot(v0, rc.op, cfg.time_steps, rc.integrator, rc.form);
    const DeformationPath flow = integrate_flow(path);
    make_dir(out);
    std::vector<std::vector<std::string>> energy;
    for (std::size_t t = 0; t < path.velocities.size(); ++t) {
        write_velocity_csv(path.velocities[t], out / numbered("velocity", t, ".csv"));
        write_deformation_csv(flow.deformations[t], out / numbered("deformation", t, ".csv"));
        if (image)
            pgm_write(warp(*image, flow.deformations[t]), out / numbered("warped", t, ".pgm"), 65535);
        energy.push_back({std::to_string(t), format_double(static_cast<double>(t) / cfg.time_steps),
                          format_double(kinetic_energy(path.velocities[t], rc.op))});
    }
    write_csv(out / "energy.csv", {"step", "t", "kinetic_energy"}, energy);
    write_detjac(det_jacobian(flow.final()), out);
    return kExitOk;
}

int cmd_register(const RunConfig& cfg, const fs::path& source, const fs::path& target, const fs::path& out) {
    const ScalarField s = pgm_read(source);
    const ScalarField t = pgm_read(target);
    require_same_grid(s.grid(), t.grid(), "register");
    if (!(s.grid() == Grid(cfg.nx, cfg.ny)))
        throw DataError("image size differs from the configured grid (nx, ny)");
    std::optional<RegistrationResult> result;
    int status = kExitOk;
    try {
        result = register_images(s, t, cfg.registration());
    } catch (const StallError& e) {
        std::cerr << "warning: " << e.what() << "; writing the last accepted iterate\n";
        result = e.partial();
        status = kExitNumeric;
    }
    make_dir(out);
    write_velocity_csv(result->v0, out / "v0.csv");
    write_deformation_csv(result->deformation.final(), out / "phi1.csv");
    pgm_write(warp(s, result->deformation.final()), out / "warped.pgm", 65535);
    std::vector<std::vector<std::string>> rows;
    for (const EnergyRecord& r : result->energy_history)
        rows.push_back({std::to_string(r.iteration), format_double(r.energy.total), format_double(r.energy.data),
                        format_double(r.energy.reg)});
    write_csv(out / "energy_history.csv", {"iteration", "total", "data", "reg"}, rows);
    write_detjac(det_jacobian(result->deformation.final()), out);
    const std::vector<std::string> summary{std::to_string(result->energy_history.size()),
                                           result->converged ? "1" : "0", format_double(ssd(s, t)),
                                           format_double(ssd(warp(s, result->deformation.final()), t))};
    write_csv(out / "summary.csv", {"iterations", "converged", "initial_ssd", "final_ssd"}, {summary});
    return status;
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
    const auto data = generate_growth_dataset(dataset_config(cfg), cfg.sequences, sub_seed(cfg.seed, SeedStream::Data));
    write_dataset(data, out);
    write_text(out / "config.txt", cfg.to_text());
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out, const std::string& resume,
              bool quiet) {
    const std::vector<Sequence> data = read_dataset(data_dir);
    std::optional<DiffusionModel> start;
    if (!resume.empty()) {
        start = load_checkpoint(resume);
        if (!(start->params.shape == cfg.denoiser_shape()))
            throw DataError("checkpoint network shape does not match the configuration");
    }
    make_dir(out);
    auto on_prepare = [&](std::size_t i, const PreparedSequence& p) {
        if (!quiet)
            std::cerr << "registered " << p.name << " (" << i + 1 << "/" << data.size() << "), ssim "
                      << p.ssim_final << ", min detjac " << p.min_detjac << "\n";
    };
    auto on_step = [&](int step, double loss) {
        if (!quiet && (step % 100 == 0 || step == cfg.train_steps))
            std::cerr << "step " << step << " loss " << loss << "\n";
    };
    const TrainOutcome result = train_model(data, cfg, start ? &start->params : nullptr, on_prepare, on_step);
    save_checkpoint(result.model, out / "checkpoint.iggc");
    std::vector<std::vector<std::string>> loss;
    for (std::size_t i = 0; i < result.result.loss_log.size(); ++i)
        loss.push_back({std::to_string(i + 1), format_double(result.result.loss_log[i])});
    write_csv(out / "loss.csv", {"step", "loss"}, loss);
    write_csv(out / "validation.csv", {"validation_start", "validation_end"},
              {{format_double(result.result.validation_start), format_double(result.result.validation_end)}});
    std::vector<std::vector<std::string>> prep;
    for (const PreparedSequence& p : result.set.sequences)
        prep.push_back({p.name, std::to_string(p.registration_iters), p.converged ? "1" : "0", p.stalled ? "1" : "0",
                        format_double(p.min_detjac), format_double(p.ssim_final)});
    write_csv(out / "registration.csv", {"sequence", "iterations", "converged", "stalled", "min_detjac", "ssim"}, prep);
    write_text(out / "config.txt", cfg.to_text());
    return kExitOk;
}

struct SampleOptions {
    std::string checkpoint;
    std::string tmpl;
    std::string text;
    std::string target;
    std::uint64_t seed = 0;
    int count = 1;
    std::optional<double> delta_i;
    std::optional<double> delta_t;
    bool conditional_only = false;
};

int cmd_sample(const SampleOptions& o, const fs::path& out) {
    if (o.count < 1)
        throw ConfigError("--count must be positive");
    const DiffusionModel model = load_checkpoint(o.checkpoint);
    const ScalarField tmpl = pgm_read(o.tmpl);
    if (!(tmpl.grid() == model.latent.grid()))
        throw DataError("template size differs from the checkpoint grid");
    std::optional<ScalarField> target;
    if (!o.target.empty()) {
        target = pgm_read(o.target);
        require_same_grid(target->grid(), tmpl.grid(), "sample target");
    }
    GuidanceConfig g;
    g.delta_i = o.delta_i.value_or(g.delta_i);
    g.delta_t = o.delta_t.value_or(g.delta_t);
    g.conditional_only = o.conditional_only;

    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(o.count));
    std::iota(seeds.begin(), seeds.end(), o.seed);
    const std::vector<SampleResult> results =
        sample(std::vector<ScalarField>(seeds.size(), tmpl), std::vector<std::string>(seeds.size(), o.text), model, g,
               seeds);

    make_dir(out);
    pgm_write(tmpl, out / "template.pgm", 65535);
    std::vector<std::vector<std::string>> metrics;
    for (std::size_t j = 0; j < results.size(); ++j) {
        const SampleResult& r = results[j];
        const fs::path dir = out / ("sample_" + std::to_string(seeds[j]));
        make_dir(dir);
        for (std::size_t t = 0; t < r.frames.size(); ++t)
            pgm_write(r.frames[t], dir / numbered("frame", t, ".pgm"), 65535);
        write_detjac(r.detjac, dir);
        write_file(dir / "latent.bin", latent_encode(r.latent));
        write_text(dir / "text.txt", o.text + "\n");
        write_text(dir / "seed.txt", std::to_string(seeds[j]) + "\n");
        std::vector<std::string> row{std::to_string(seeds[j])};
        for (auto& c : detjac_row(detjac_stats(r.detjac)))
            row.push_back(c);
        row.push_back(target ? format_double(ssim(r.frames.back(), *target)) : "");
        metrics.push_back(row);
    }
    write_csv(out / "metrics.csv", {"seed", "min_detjac", "mean_detjac", "negative_fraction", "ssim_final"}, metrics);
    std::size_t positive = 0;
    for (const SampleResult& r : results)
        positive += detjac_stats(r.detjac).min > 0.0;
    std::string manifest = "checkpoint = " + o.checkpoint + "\ntemplate = " + o.tmpl + "\ntext = " + o.text +
                           "\nseed = " + std::to_string(o.seed) + "\ncount = " + std::to_string(o.count) +
                           "\ndelta_i = " + format_double(g.delta_i) + "\ndelta_t = " + format_double(g.delta_t) +
                           "\nconditional_only = " + (g.conditional_only ? "1" : "0") + "\ntarget = " + o.target +
                           "\npositive_detjac = " + std::to_string(positive) + "/" + std::to_string(results.size()) +
                           "\n";
    write_text(out / "manifest.txt", manifest);
    return kExitOk;
}

int cmd_metrics(const RunConfig& cfg, const fs::path& dir, const std::string& target_path, const fs::path& out) {
    const std::vector<fs::path> dirs = sample_dirs(dir);
    std::optional<ScalarField> target;
    if (!target_path.empty())
        target = pgm_read(target_path);
    std::vector<std::vector<std::string>> table, curves;
    for (const fs::path& d : dirs) {
        const LatentGeodesic latent = latent_decode(read_file(d / "latent.bin"), (d / "latent.bin").string());
        const GeodesicPath path = decode_path(latent, cfg);
        const DeformationPath flow = integrate_flow(path);
        const DetJacStats stats = detjac_stats(flow.final());
        std::string ssim_cell;
        if (target) {
            const fs::path last = d / numbered("frame", static_cast<std::size_t>(latent.steps), ".pgm");
            const ScalarField frame = pgm_read(last);
            require_same_grid(frame.grid(), target->grid(), "metrics target");
            ssim_cell = format_double(ssim(frame, *target));
        }
        const std::string name = d.filename().string();
        std::vector<std::string> row{name};
        for (auto& c : detjac_row(stats))
            row.push_back(c);
        row.push_back(ssim_cell);
        table.push_back(row);

        const RegistrationConfig rc = cfg.registration();
        const GeodesicPath full = shoot(path.velocities.front(), rc.op, latent.steps, IntegratorKind::Euler, rc.form);
        const std::vector<double> mae = geodesic_mae_curve(latent, full);
        for (std::size_t t = 0; t < mae.size(); ++t)
            curves.push_back({name, std::to_string(t), format_double(mae[t])});
    }
    make_dir(out);
    write_csv(out / "metrics_table.csv", {"sample", "min_detjac", "mean_detjac", "negative_fraction", "ssim_final"},
              table);
    write_csv(out / "mae_curves.csv", {"sample", "step", "mae"}, curves);
    return kExitOk;
}

int cmd_confidence(const fs::path& dir, int frame, const fs::path& out) {
    const std::vector<fs::path> dirs = sample_dirs(dir);
    std::vector<ScalarField> frames;
    for (const fs::path& d : dirs) {
        std::size_t index = static_cast<std::size_t>(frame);
        if (frame < 0) {
            const LatentGeodesic latent = latent_decode(read_file(d / "latent.bin"), (d / "latent.bin").string());
            index = static_cast<std::size_t>(latent.steps);
        }
        frames.push_back(pgm_read(d / numbered("frame", index, ".pgm")));
        require_same_grid(frames.back().grid(), frames.front().grid(), "confidence");
    }
    const ConfidenceMaps maps = confidence_maps(frames);
    make_dir(out);
    pgm_write(maps.mean, out / "mean.pgm", 65535);
    pgm_write(maps.lower, out / "lower.pgm", 65535);
    pgm_write(maps.upper, out / "upper.pgm", 65535);
    pgm_write(maps.ci_width, out / "ci_width.pgm", 65535);
    const Grid& g = maps.mean.grid();
    std::vector<std::vector<std::string>> rows;
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            rows.push_back({std::to_string(ix), std::to_string(iy), format_double(maps.mean.at(ix, iy)),
                            format_double(maps.lower.at(ix, iy)), format_double(maps.upper.at(ix, iy)),
                            format_double(maps.ci_width.at(ix, iy))});
    write_csv(out / "confidence.csv", {"ix", "iy", "mean", "lower", "upper", "ci_width"}, rows);
    std::size_t inside = 0;
    for (const ScalarField& f : frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            inside += f[i] >= maps.lower[i] && f[i] <= maps.upper[i];
    const double coverage = static_cast<double>(inside) / static_cast<double>(frames.size() * g.size());
    double width = 0.0;
    for (double w : maps.ci_width.values())
        width += w;
    write_csv(out / "coverage.csv", {"samples", "coverage", "mean_ci_width"},
              {{std::to_string(frames.size()), format_double(coverage),
                format_double(width / static_cast<double>(g.size()))}});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image-conditioned geodesic generation on the 2D torus"};
    app.require_subcommand(1);

    std::function<int()> run;
    std::string out;

    ConfigOptions shoot_cfg;
    std::string v0_file, shoot_tmpl;
    auto* shoot_cmd = app.add_subcommand("shoot", "shoot a geodesic from an initial velocity CSV");
    add_config_options(shoot_cmd, shoot_cfg);
    shoot_cmd->add_option("--v0", v0_file, "velocity CSV with columns ix,iy,vx,vy")->required();
    shoot_cmd->add_option("--template", shoot_tmpl, "PGM image to warp along the path");
    shoot_cmd->add_option("--out", out, "output directory")->required();
    shoot_cmd->callback([&] { run = [&] { return cmd_shoot(resolve_config(shoot_cfg), v0_file, shoot_tmpl, out); }; });

    ConfigOptions reg_cfg;
    std::string source, target;
    auto* reg_cmd = app.add_subcommand("register", "register a source image to a target image");
    add_config_options(reg_cmd, reg_cfg);
    reg_cmd->add_option("--source", source, "source PGM")->required();
    reg_cmd->add_option("--target", target, "target PGM")->required();
    reg_cmd->add_option("--out", out, "output directory")->required();
    reg_cmd->callback([&] { run = [&] { return cmd_register(resolve_config(reg_cfg), source, target, out); }; });

    ConfigOptions gen_cfg;
    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic growth dataset");
    add_config_options(gen_cmd, gen_cfg);
    gen_cmd->add_option("--out", out, "output directory")->required();
    gen_cmd->callback([&] { run = [&] { return cmd_gen_data(resolve_config(gen_cfg), out); }; });

    ConfigOptions train_cfg;
    std::string data_dir, resume;
    bool quiet = false;
    auto* train_cmd = app.add_subcommand("train", "register sequences and train the latent diffusion model");
    add_config_options(train_cmd, train_cfg);
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--out", out, "output directory")->required();
    train_cmd->add_option("--resume", resume, "checkpoint whose weights start training");
    train_cmd->add_flag("--quiet", quiet, "no progress output");
    train_cmd->callback(
        [&] { run = [&] { return cmd_train(resolve_config(train_cfg), data_dir, out, resume, quiet); }; });

    SampleOptions so;
    double delta_i = 0.0, delta_t = 0.0;
    auto* sample_cmd = app.add_subcommand("sample", "sample deformations of a template");
    sample_cmd->add_option("--checkpoint", so.checkpoint, "trained checkpoint")->required();
    sample_cmd->add_option("--template", so.tmpl, "template PGM")->required();
    sample_cmd->add_option("--text", so.text, "text instruction");
    sample_cmd->add_option("--seed", so.seed, "seed of the first sample");
    sample_cmd->add_option("--count", so.count, "number of samples, seeds seed .. seed + count - 1");
    auto* di = sample_cmd->add_option("--delta-i", delta_i, "image guidance scale");
    auto* dt = sample_cmd->add_option("--delta-t", delta_t, "text guidance scale");
    sample_cmd->add_flag("--conditional-only", so.conditional_only, "skip guidance, use the conditional prediction");
    sample_cmd->add_option("--target", so.target, "ground-truth final frame for SSIM");
    sample_cmd->add_option("--out", out, "output directory")->required();
    sample_cmd->callback([&] {
        if (*di)
            so.delta_i = delta_i;
        if (*dt)
            so.delta_t = delta_t;
        run = [&] { return cmd_sample(so, out); };
    });

    ConfigOptions metrics_cfg;
    std::string metrics_dir, metrics_target;
    auto* metrics_cmd = app.add_subcommand("metrics", "DetJac, SSIM and latent MAE tables for a sample directory");
    add_config_options(metrics_cmd, metrics_cfg);
    metrics_cmd->add_option("--dir", metrics_dir, "directory written by sample")->required();
    metrics_cmd->add_option("--target", metrics_target, "ground-truth final frame for SSIM");
    metrics_cmd->add_option("--out", out, "output directory (default: --dir)");
    metrics_cmd->callback([&] {
        run = [&] {
            return cmd_metrics(resolve_config(metrics_cfg), metrics_dir, metrics_target,
                               out.empty() ? metrics_dir : out);
        };
    });

    std::string conf_dir;
    int frame = -1;
    auto* conf_cmd = app.add_subcommand("confidence", "pixel-wise mean and two-sigma bounds over samples");
    conf_cmd->add_option("--dir", conf_dir, "directory written by sample")->required();
    conf_cmd->add_option("--frame", frame, "frame index (default: last)");
    conf_cmd->add_option("--out", out, "output directory (default: --dir)");
    conf_cmd->callback([&] { run = [&] { return cmd_confidence(conf_dir, frame, out.empty() ? conf_dir : out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        return run();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}
