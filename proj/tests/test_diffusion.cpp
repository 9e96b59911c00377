#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "igg/diffusion.hpp"
#include "test_util.hpp"

using namespace igg;
using namespace igg::testing;

namespace {

DenoiserShape small_shape(std::size_t latent, std::size_t image, std::size_t text, std::vector<std::size_t> hidden) {
    DenoiserShape s;
    s.latent_dim = latent;
    s.image_dim = image;
    s.text_dim = text;
    s.time_dim = 8;
    s.hidden = std::move(hidden);
    return s;
}

Condition random_condition(const DenoiserShape& s, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Condition c;
    c.image_embed.resize(s.image_dim);
    c.text_embed.resize(s.text_dim);
    for (auto& v : c.image_embed)
        v = dist(rng);
    for (auto& v : c.text_embed)
        v = dist(rng);
    return c;
}

std::vector<double> normals(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out)
        v = dist(rng);
    return out;
}

// Perturbs every parameter with random normal noise.
void randomize(DenoiserParams& p, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
            p.weights[l].data()[i] = dist(rng);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
            p.biases[l].data()[i] = dist(rng);
    }
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("noise schedule") {
    const NoiseSchedule s = NoiseSchedule::linear();
    REQUIRE(s.T == 500);
    CHECK(s.beta_at(1) == 1e-4);
    CHECK(s.beta_at(500) == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(s.beta_at(250) == doctest::Approx(1e-4 + (0.02 - 1e-4) * 249.0 / 499.0).epsilon(1e-14));
    for (int t = 2; t <= s.T; ++t)
        CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    CHECK(s.alpha_bar_at(500) < 0.01);
    double prod = 1.0;
    for (int t = 1; t <= 500; ++t)
        prod *= 1.0 - s.beta_at(t);
    CHECK(s.alpha_bar_at(500) == doctest::Approx(prod).epsilon(1e-13));
    CHECK_THROWS_AS(s.beta_at(0), ConfigError);
    CHECK_THROWS_AS(s.alpha_bar_at(501), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.5, 0.1), ConfigError);
}

TEST_CASE("forward_diffuse") {
    const NoiseSchedule s = NoiseSchedule::linear();
    std::mt19937_64 rng(1);
    const std::vector<double> z0 = normals(16, rng);
    const std::vector<double> zero(16, 0.0);
    const std::vector<double> scaled = forward_diffuse(z0, 100, zero, s);
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(scaled[i] == std::sqrt(s.alpha_bar_at(100)) * z0[i]);

    // Unit-norm inputs barely move at tau = 1.
    std::vector<double> u = z0, e = normals(16, rng);
    auto normalize = [](std::vector<double>& v) {
        double n = 0;
        for (double x : v)
            n += x * x;
        for (auto& x : v)
            x /= std::sqrt(n);
    };
    normalize(u);
    normalize(e);
    const std::vector<double> first = forward_diffuse(u, 1, e, s);
    double diff = 0.0;
    for (std::size_t i = 0; i < 16; ++i)
        diff += (first[i] - u[i]) * (first[i] - u[i]);
    CHECK(std::sqrt(diff) <= 1e-2);

    // Exact inversion with known noise.
    const std::vector<double> noisy = forward_diffuse(z0, 321, e, s);
    const double ab = s.alpha_bar_at(321);
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(std::abs((noisy[i] - std::sqrt(1 - ab) * e[i]) / std::sqrt(ab) - z0[i]) <= 1e-10);

    CHECK_THROWS_AS(forward_diffuse(z0, 0, e, s), ConfigError);
    CHECK_THROWS_AS(forward_diffuse(z0, 1, std::vector<double>(3), s), ShapeError);
}

TEST_CASE("forward_diffuse variance from zero latents") {
    const NoiseSchedule s = NoiseSchedule::linear();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> dist(0.0, 1.0);
    const int n = 100000;
    const int tau = 40;
    const double expected = 1.0 - s.alpha_bar_at(tau);
    const std::vector<double> z0(4, 0.0);
    std::vector<double> sum(4, 0.0), sq(4, 0.0);
    for (int k = 0; k < n; ++k) {
        std::vector<double> eps(4);
        for (auto& e : eps)
            e = dist(rng);
        const std::vector<double> z = forward_diffuse(z0, tau, eps, s);
        for (int i = 0; i < 4; ++i) {
            sum[i] += z[i];
            sq[i] += z[i] * z[i];
        }
    }
    const double stderr_var = expected * std::sqrt(2.0 / (n - 1));
    for (int i = 0; i < 4; ++i) {
        const double mean = sum[i] / n;
        const double var = (sq[i] - n * mean * mean) / (n - 1);
        CHECK(std::abs(var - expected) <= 3 * stderr_var);
    }
}

TEST_CASE("embeddings") {
    // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c, which lands in bucket 12 of 64.
    const std::vector<double> a = text_embedding("A");
    REQUIRE(a.size() == 64u);
    CHECK(a[12] == 1.0);
    CHECK(text_embedding("  lobes: 2;\tgrowth ") == text_embedding("LOBES: 2; Growth"));
    for (double v : text_embedding(""))
        CHECK(v == 0.0);
    const std::vector<double> t = text_embedding("lobes: 3; growth: 12 percent per step; direction: 45 degrees");
    double norm = 0.0;
    for (double v : t)
        norm += v * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> twice = text_embedding("a a");
    CHECK(twice[12] == 1.0);

    const std::vector<double> te = time_embedding(7, 8);
    CHECK(te[0] == std::sin(7.0));
    CHECK(te[4] == std::cos(7.0));
    CHECK(te[1] == doctest::Approx(std::sin(7.0 * std::pow(10000.0, -0.25))).epsilon(1e-15));
    CHECK(te[7] == doctest::Approx(std::cos(7.0 * std::pow(10000.0, -0.75))).epsilon(1e-15));

    const Grid g(32, 32);
    for (double v : image_embedding(ScalarField(g, 0.4)))
        CHECK(v == 0.0);
    const ScalarField wave = mode_field(g, 1.0, 0.0, 1, 0, true).x();
    const std::vector<double> emb = image_embedding(wave);
    REQUIRE(emb.size() == 512u);
    // Pooled bin (bx, by) averages the central differences of cells 2bx, 2bx+1.
    const double c = std::sin(2 * std::numbers::pi / 32) / (1.0 / 32);
    for (int bx = 0; bx < 16; ++bx) {
        const double d0 = c * std::cos(2 * std::numbers::pi * (2 * bx) / 32);
        const double d1 = c * std::cos(2 * std::numbers::pi * (2 * bx + 1) / 32);
        CHECK(std::abs(emb[3 * 16 + bx] - 0.5 * (d0 + d1)) <= 1e-12);
        CHECK(std::abs(emb[256 + 3 * 16 + bx]) <= 1e-12);
    }
    CHECK(image_embedding(ScalarField(Grid(8, 8)), 8).size() == 128u);
    CHECK_THROWS_AS(image_embedding(ScalarField(Grid(8, 8)), 16), ConfigError);
}

TEST_CASE("denoiser forward") {
    std::mt19937_64 rng(3);
    const DenoiserShape shape = small_shape(6, 4, 3, {5, 7});
    const Condition cond = random_condition(shape, rng);
    const std::vector<double> z = normals(6, rng);
    for (double v : denoise_predict(z, cond, 10, DenoiserParams::zeros(shape)))
        CHECK(v == 0.0);

    DenoiserParams p = DenoiserParams::init(shape, 9);
    CHECK(p.parameter_count() == (5 * 21 + 5) + (7 * 5 + 7) + (6 * 7 + 6));
    randomize(p, rng, 0.5);
    const std::vector<double> out = denoise_predict(z, cond, 10, p);
    CHECK(out == denoise_predict(z, cond, 10, p));

    // Text content is irrelevant once the text condition is null.
    Condition other = cond;
    other.text_embed = {9.0, -9.0, 1.0};
    CHECK(denoise_predict(z, cond.with_nulls(false, true), 10, p) ==
          denoise_predict(z, other.with_nulls(false, true), 10, p));
    CHECK(denoise_predict(z, cond, 10, p) != denoise_predict(z, other, 10, p));

    // Direct evaluation of the same network.
    Eigen::VectorXd x(21);
    for (int i = 0; i < 6; ++i)
        x[i] = z[i];
    for (int i = 0; i < 4; ++i)
        x[6 + i] = cond.image_embed[i];
    for (int i = 0; i < 3; ++i)
        x[10 + i] = cond.text_embed[i];
    const std::vector<double> te = time_embedding(10, 8);
    for (int i = 0; i < 8; ++i)
        x[13 + i] = te[i];
    auto act = [](double v) { return v / (1.0 + std::exp(-v)); };
    Eigen::VectorXd h1 = (p.weights[0] * x + p.biases[0]).unaryExpr(act);
    Eigen::VectorXd h2 = (p.weights[1] * h1 + p.biases[1]).unaryExpr(act);
    Eigen::VectorXd y = p.weights[2] * h2 + p.biases[2];
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(out[i] - y[i]) <= 1e-12 * std::max(1.0, std::abs(y[i])));

    CHECK_THROWS_AS(denoise_predict(std::vector<double>(5), cond, 10, p), ShapeError);
    Condition wrong = cond;
    wrong.image_embed.push_back(0.0);
    CHECK_THROWS_AS(denoise_predict(z, wrong, 10, p), ShapeError);
}

TEST_CASE("guidance identities") {
    std::mt19937_64 rng(4);
    const DenoiserShape shape = small_shape(6, 4, 3, {8, 8});
    DenoiserParams p = DenoiserParams::init(shape, 1);
    randomize(p, rng, 0.7);
    const Condition c = random_condition(shape, rng);
    const std::vector<double> z = normals(6, rng);
    const int tau = 37;
    const auto full = denoise_predict(z, c, tau, p);
    const auto image = denoise_predict(z, c.with_nulls(false, true), tau, p);
    const auto none = denoise_predict(z, c.with_nulls(true, true), tau, p);
    CHECK(max_abs_diff(cfg_predict(z, c, tau, p, {1.0, 1.0}), full) <= 1e-12);
    CHECK(max_abs_diff(cfg_predict(z, c, tau, p, {1.0, 0.0}), image) <= 1e-12);
    CHECK(max_abs_diff(cfg_predict(z, c, tau, p, {0.0, 0.0}), none) <= 1e-12);

    const GuidanceConfig g{1.5, 2.0};
    const auto mixed = cfg_predict(z, c, tau, p, g);
    for (std::size_t i = 0; i < 6; ++i) {
        const double expected = -0.5 * none[i] - 0.5 * image[i] + 2.0 * full[i];
        CHECK(std::abs(mixed[i] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
    }
    CHECK(cfg_predict(z, c, tau, p, {1.5, 2.0, true}) == full);
}

TEST_CASE("loss gradient matches finite differences") {
    for (const auto& hidden : {std::vector<std::size_t>{2}, std::vector<std::size_t>{2, 2},
                               std::vector<std::size_t>{5, 4, 3}}) {
        std::mt19937_64 rng(5 + hidden.size());
        const DenoiserShape shape = small_shape(3, 2, 2, hidden);
        DenoiserParams p = DenoiserParams::init(shape, 2);
        randomize(p, rng, 0.8);
        const int batch = 4;
        Eigen::MatrixXd z(3, batch), cond(shape.condition_dim(), batch), eps(3, batch);
        for (int j = 0; j < batch; ++j) {
            for (int i = 0; i < 3; ++i) {
                z(i, j) = normals(1, rng)[0];
                eps(i, j) = normals(1, rng)[0];
            }
            cond.col(j) = condition_input(random_condition(shape, rng), 10 * (j + 1), shape);
        }
        const double wd = 1e-2;
        const LossGradient lg = loss_and_gradient(p, z, cond, eps, wd);
        double num = 0.0, den = 0.0;
        const double delta = 1e-6;
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            auto probe = [&](double& theta, double analytic) {
                const double saved = theta;
                theta = saved + delta;
                const double up = loss_and_gradient(p, z, cond, eps, wd).loss;
                theta = saved - delta;
                const double down = loss_and_gradient(p, z, cond, eps, wd).loss;
                theta = saved;
                const double fd = (up - down) / (2 * delta);
                num += (fd - analytic) * (fd - analytic);
                den += fd * fd;
            };
            for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
                probe(p.weights[l].data()[i], lg.gradient.weights[l].data()[i]);
            for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
                probe(p.biases[l].data()[i], lg.gradient.biases[l].data()[i]);
        }
        const double rel = std::sqrt(num / den);
        MESSAGE("hidden layers " << hidden.size() << ": relative error " << rel);
        CHECK(rel <= 1e-4);
    }
}

TEST_CASE("training") {
    std::mt19937_64 rng(6);
    const NoiseSchedule sched = NoiseSchedule::linear(50);
    const DenoiserShape shape = small_shape(4, 2, 2, {32, 32});
    TrainingExample ex{{0.5, -1.0, 0.25, 2.0}, random_condition(shape, rng)};
    const std::vector<TrainingExample> data{ex};

    SUBCASE("zero learning rate leaves parameters unchanged") {
        TrainConfig cfg;
        cfg.learning_rate = 0.0;
        cfg.steps = 5;
        cfg.batch_size = 4;
        const DenoiserParams init = DenoiserParams::init(shape, 3);
        const TrainResult r = train(data, sched, cfg, init);
        for (std::size_t l = 0; l < init.weights.size(); ++l) {
            CHECK((r.params.weights[l].array() == init.weights[l].array()).all());
            CHECK((r.params.biases[l].array() == init.biases[l].array()).all());
        }
        CHECK(r.loss_log.size() == 5u);
    }
    SUBCASE("overfits a single example") {
        TrainConfig cfg;
        cfg.learning_rate = 3e-3;
        cfg.steps = 600;
        cfg.batch_size = 16;
        cfg.seed = 7;
        const TrainResult r = train(data, sched, cfg, DenoiserParams::init(shape, 3));
        auto window = [&](int start) {
            double s = 0.0;
            for (int i = start; i < start + 100; ++i)
                s += r.loss_log[i];
            return s / 100;
        };
        MESSAGE("loss " << window(0) << " -> " << window(500) << ", validation " << r.validation_start << " -> "
                        << r.validation_end);
        CHECK(window(500) < 0.5 * window(0));
        CHECK(r.validation_end < r.validation_start);
    }
    SUBCASE("runs are reproducible") {
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.steps = 20;
        cfg.batch_size = 8;
        const TrainResult a = train(data, sched, cfg, DenoiserParams::init(shape, 3));
        const TrainResult b = train(data, sched, cfg, DenoiserParams::init(shape, 3));
        CHECK(a.loss_log == b.loss_log);
        CHECK((a.params.weights[1].array() == b.params.weights[1].array()).all());
    }
    SUBCASE("non-finite loss is reported with its step") {
        TrainingExample bad = ex;
        bad.latent[2] = std::nan("");
        TrainConfig cfg;
        cfg.steps = 3;
        try {
            train({bad}, sched, cfg, DenoiserParams::init(shape, 3));
            FAIL("expected divergence");
        } catch (const TrainingDivergenceError& e) {
            CHECK(e.step() == 1);
        }
    }
    SUBCASE("weight averaging and cosine decay") {
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        cfg.steps = 1;
        cfg.batch_size = 4;
        const DenoiserParams init = DenoiserParams::init(shape, 3);
        const TrainResult plain = train(data, sched, cfg, init);
        cfg.cosine_decay = true;
        const TrainResult cosine = train(data, sched, cfg, init);
        // The first step runs at the full rate.
        CHECK((cosine.params.weights[0].array() == plain.params.weights[0].array()).all());
        cfg.ema_decay = 0.25;
        const TrainResult averaged = train(data, sched, cfg, init);
        const Eigen::MatrixXd expected = 0.25 * init.weights[0] + 0.75 * plain.params.weights[0];
        CHECK((averaged.params.weights[0] - expected).cwiseAbs().maxCoeff() <= 1e-15);

        // With two steps the second one runs at half the rate.
        cfg.ema_decay = 0.0;
        cfg.steps = 2;
        const TrainResult two = train(data, sched, cfg, init);
        cfg.cosine_decay = false;
        const TrainResult two_plain = train(data, sched, cfg, init);
        const Eigen::MatrixXd first = plain.params.weights[0];
        const Eigen::MatrixXd full_step = two_plain.params.weights[0] - first;
        const Eigen::MatrixXd half_step = two.params.weights[0] - first;
        CHECK((half_step - 0.5 * full_step).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, full_step.cwiseAbs().maxCoeff()));
    }
    SUBCASE("invalid inputs") {
        TrainConfig cfg;
        CHECK_THROWS_AS(train({}, sched, cfg, DenoiserParams::init(shape, 3)), DataError);
        cfg.p_uncond = 1.5;
        CHECK_THROWS_AS(train(data, sched, cfg, DenoiserParams::init(shape, 3)), ConfigError);
        cfg.p_uncond = 0.1;
        cfg.ema_decay = 1.0;
        CHECK_THROWS_AS(train(data, sched, cfg, DenoiserParams::init(shape, 3)), ConfigError);
        cfg.ema_decay = 0.0;
        cfg.snr_gamma = -1.0;
        CHECK_THROWS_AS(train(data, sched, cfg, DenoiserParams::init(shape, 3)), ConfigError);
    }
}

TEST_CASE("min-SNR column weights") {
    CHECK(min_snr_weight(0.5, 5.0) == 1.0);
    CHECK(min_snr_weight(0.99, 5.0) == doctest::Approx(5.0 / 99.0).epsilon(1e-14));
    CHECK(min_snr_weight(0.99, 0.0) == 1.0);

    std::mt19937_64 rng(31);
    const DenoiserShape shape = small_shape(3, 2, 2, {4});
    DenoiserParams p = DenoiserParams::init(shape, 2);
    randomize(p, rng, 0.5);
    Eigen::MatrixXd z(3, 2), cond(shape.condition_dim(), 2), eps(3, 2);
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 3; ++i) {
            z(i, j) = normals(1, rng)[0];
            eps(i, j) = normals(1, rng)[0];
        }
        cond.col(j) = condition_input(random_condition(shape, rng), 5 + j, shape);
    }
    const std::vector<double> w{0.25, 2.0};
    const Eigen::MatrixXd r = denoise_batch(p, z, cond) - eps;
    const double expected = (w[0] * r.col(0).squaredNorm() + w[1] * r.col(1).squaredNorm()) / 6.0;
    CHECK(loss_and_gradient(p, z, cond, eps, 0.0, {}, w).loss == doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(loss_and_gradient(p, z, cond, eps, 0.0, {}, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("sampling with a zero network follows the linear recursion") {
    const NoiseSchedule sched = NoiseSchedule::linear(40);
    const DenoiserShape shape = small_shape(5, 2, 2, {4});
    std::mt19937_64 crng(8);
    const std::vector<Condition> conds{random_condition(shape, crng), random_condition(shape, crng)};
    const std::vector<std::uint64_t> seeds{11, 12};
    const Eigen::MatrixXd z = sample_latents(conds, seeds, DenoiserParams::zeros(shape), sched, GuidanceConfig{});
    for (int j = 0; j < 2; ++j) {
        std::mt19937_64 rng(seeds[j]);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<double> x(5);
        for (auto& v : x)
            v = dist(rng);
        for (int tau = 40; tau >= 1; --tau) {
            std::vector<double> noise(5, 0.0);
            if (tau > 1) {
                dist.reset();
                for (auto& v : noise)
                    v = dist(rng);
            }
            for (int i = 0; i < 5; ++i)
                x[i] = x[i] / std::sqrt(1 - sched.beta_at(tau)) + std::sqrt(sched.beta_at(tau)) * noise[i];
        }
        for (int i = 0; i < 5; ++i)
            CHECK(std::abs(z(i, j) - x[i]) <= 1e-8);
    }
}

TEST_CASE("sampling is deterministic and honours the guidance identity") {
    const NoiseSchedule sched = NoiseSchedule::linear(30);
    const DenoiserShape shape = small_shape(5, 2, 2, {6, 6});
    std::mt19937_64 rng(9);
    DenoiserParams p = DenoiserParams::init(shape, 4);
    randomize(p, rng, 0.3);
    const std::vector<Condition> conds{random_condition(shape, rng)};
    const Eigen::MatrixXd a = sample_latents(conds, {5}, p, sched, GuidanceConfig{});
    const Eigen::MatrixXd b = sample_latents(conds, {5}, p, sched, GuidanceConfig{});
    CHECK((a.array() == b.array()).all());
    const Eigen::MatrixXd c = sample_latents(conds, {6}, p, sched, GuidanceConfig{});
    CHECK((a.array() != c.array()).any());

    const Eigen::MatrixXd unit = sample_latents(conds, {5}, p, sched, GuidanceConfig{1.0, 1.0});
    const Eigen::MatrixXd pure = sample_latents(conds, {5}, p, sched, GuidanceConfig{1.0, 1.0, true});
    CHECK((unit.array() == pure.array()).all());

    DenoiserParams blow = p;
    blow.biases.back().setConstant(std::numeric_limits<double>::max());
    CHECK_THROWS_AS(sample_latents(conds, {5}, blow, sched, GuidanceConfig{}), SamplingDivergenceError);
}

TEST_CASE("data prediction maps the network output to a noise estimate") {
    const NoiseSchedule sched = NoiseSchedule::linear(50);
    DenoiserShape shape = small_shape(4, 2, 2, {5});
    shape.prediction = Prediction::Data;
    std::mt19937_64 rng(21);
    DenoiserParams p = DenoiserParams::init(shape, 6);
    randomize(p, rng, 0.5);
    DenoiserShape plain_shape = shape;
    plain_shape.prediction = Prediction::Noise;
    DenoiserParams plain = p;
    plain.shape = plain_shape;
    const Condition c = random_condition(shape, rng);
    const std::vector<double> z = normals(4, rng);
    for (int tau : {1, 17, 50}) {
        const double a = sched.alpha_bar_at(tau);
        const std::vector<double> x = denoise_predict(z, c, tau, plain);
        const std::vector<double> eps = denoise_predict(z, c, tau, p, &sched);
        for (int i = 0; i < 4; ++i)
            CHECK(eps[i] == doctest::Approx((z[i] - std::sqrt(a) * x[i]) / std::sqrt(1 - a)).epsilon(1e-12));
        const std::vector<double> unit = cfg_predict(z, c, tau, p, GuidanceConfig{1.0, 1.0}, &sched);
        CHECK(max_abs_diff(unit, eps) <= 1e-12);
    }
    CHECK_THROWS_AS(denoise_predict(z, c, 3, p), ConfigError);
    const Eigen::MatrixXd zm = Eigen::Map<const Eigen::VectorXd>(z.data(), 4);
    CHECK_THROWS_AS(denoise_batch(p, zm, condition_input(c, 3, shape)), ConfigError);

    // Zero network: the noise estimate is z / sqrt(1 - abar).
    const std::vector<double> zero = denoise_predict(z, c, 9, DenoiserParams::zeros(shape), &sched);
    for (int i = 0; i < 4; ++i)
        CHECK(zero[i] == doctest::Approx(z[i] / std::sqrt(1 - sched.alpha_bar_at(9))).epsilon(1e-14));
}

TEST_CASE("data prediction gradient matches finite differences") {
    const NoiseSchedule sched = NoiseSchedule::linear(100);
    DenoiserShape shape = small_shape(3, 2, 2, {4, 3});
    shape.prediction = Prediction::Data;
    std::mt19937_64 rng(31);
    DenoiserParams p = DenoiserParams::init(shape, 2);
    randomize(p, rng, 0.8);
    const int batch = 4;
    Eigen::MatrixXd z(3, batch), cond(shape.condition_dim(), batch), eps(3, batch);
    std::vector<double> abar;
    for (int j = 0; j < batch; ++j) {
        for (int i = 0; i < 3; ++i) {
            z(i, j) = normals(1, rng)[0];
            eps(i, j) = normals(1, rng)[0];
        }
        const int tau = 20 * (j + 1);
        cond.col(j) = condition_input(random_condition(shape, rng), tau, shape);
        abar.push_back(sched.alpha_bar_at(tau));
    }
    const double wd = 1e-2;
    const LossGradient lg = loss_and_gradient(p, z, cond, eps, wd, abar);
    CHECK(lg.loss == doctest::Approx((denoise_batch(p, z, cond, abar) - eps).squaredNorm() / eps.size() +
                                     wd * p.squared_norm())
                         .epsilon(1e-12));
    double num = 0.0, den = 0.0;
    const double delta = 1e-6;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        auto probe = [&](double& theta, double analytic) {
            const double saved = theta;
            theta = saved + delta;
            const double up = loss_and_gradient(p, z, cond, eps, wd, abar).loss;
            theta = saved - delta;
            const double down = loss_and_gradient(p, z, cond, eps, wd, abar).loss;
            theta = saved;
            const double fd = (up - down) / (2 * delta);
            num += (fd - analytic) * (fd - analytic);
            den += fd * fd;
        };
        for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
            probe(p.weights[l].data()[i], lg.gradient.weights[l].data()[i]);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
            probe(p.biases[l].data()[i], lg.gradient.biases[l].data()[i]);
    }
    const double rel = std::sqrt(num / den);
    MESSAGE("data prediction: relative error " << rel);
    CHECK(rel <= 1e-4);
}

TEST_CASE("data prediction training and sampling") {
    const NoiseSchedule sched = NoiseSchedule::linear(60);
    DenoiserShape shape = small_shape(6, 2, 2, {16});
    shape.prediction = Prediction::Data;
    std::mt19937_64 rng(41);
    const std::vector<double> target{0.5, -1.0, 1.5, 0.0, 2.0, -0.5};
    const std::vector<TrainingExample> data{TrainingExample{target, random_condition(shape, rng)}};
    TrainConfig cfg;
    cfg.steps = 400;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.weight_decay = 0.0;
    const TrainResult r = train(data, sched, cfg, DenoiserParams::init(shape, 1));
    CHECK(r.validation_end < 0.5 * r.validation_start);
    const Eigen::MatrixXd z = sample_latents({data[0].cond}, {3}, r.params, sched, GuidanceConfig{1.0, 1.0});
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(z(i, 0) - target[i]) < 0.2);
}

TEST_CASE("latent normalizer") {
    const std::vector<std::vector<double>> data{{1.0, 5.0, 2.0}, {3.0, 5.0, -2.0}};
    const LatentNormalizer n = LatentNormalizer::fit(data);
    CHECK(n.mean == std::vector<double>{2.0, 5.0, 0.0});
    CHECK(n.scale[0] == 1.0);
    CHECK(n.scale[2] == 2.0);
    CHECK(n.scale[1] == doctest::Approx(2e-12));
    const std::vector<double> z = n.normalize(data[1]);
    CHECK(z[0] == 1.0);
    CHECK(z[2] == -1.0);
    CHECK(n.denormalize(z) == data[1]);
    CHECK_THROWS_AS(LatentNormalizer::fit({}), DataError);
}
