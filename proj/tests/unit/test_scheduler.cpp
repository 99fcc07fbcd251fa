#include <doctest.h>

#include <cmath>

#include "adgen/errors.hpp"
#include "adgen/rng.hpp"
#include "adgen/scheduler.hpp"
#include "helpers.hpp"

using namespace adgen;

TEST_CASE("build_schedule: degenerate two-step case") {
    NoiseSchedule s = build_schedule(2, 0.5, 0.5);
    CHECK(s.alphas_cumprod[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.alphas_cumprod[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("build_schedule: default schedule matches independent cumulative product") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    // independent oracle: recompute the product directly
    double prod = 1.0;
    for (int t = 0; t < 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * t / 999.0;
        CHECK(s.betas[t] == doctest::Approx(beta).epsilon(1e-14));
        prod *= 1.0 - beta;
        CHECK(s.alphas_cumprod[t] == doctest::Approx(prod).epsilon(1e-12));
    }
    CHECK(s.alphas_cumprod[0] > 0.99);
    CHECK(s.alphas_cumprod[999] < 0.01);
    for (int t = 1; t < 1000; ++t) CHECK(s.alphas_cumprod[t] < s.alphas_cumprod[t - 1]);
}

TEST_CASE("build_schedule rejects bad ranges") {
    CHECK_THROWS_AS(build_schedule(1, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(build_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(build_schedule(10, 0.5, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(10, 0.1, 1.0), ConfigError);
}

TEST_CASE("forward_diffuse closed-form cases") {
    NoiseSchedule s;
    s.num_steps = 1;
    s.betas = {0.25};
    s.alphas_cumprod = {0.75};

    Rng rng(5);
    Tensor x0 = testutil::random_tensor({2, 3, 3}, rng);
    Tensor zero = Tensor::zeros({2, 3, 3});
    Tensor out = forward_diffuse(x0, zero, 0, s);
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out[i] == doctest::Approx(std::sqrt(0.75) * x0[i]).epsilon(1e-15));

    Tensor ones = Tensor::full({2, 3, 3}, 1.0);
    out = forward_diffuse(zero, ones, 0, s);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.5).epsilon(1e-15));

    Tensor bad = Tensor::zeros({2, 3, 4});
    CHECK_THROWS_AS(forward_diffuse(x0, bad, 0, s), InputError);
}

TEST_CASE("forward_diffuse at final timestep is near-unit-variance noise (Monte-Carlo)") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    Rng rng(99);
    const int draws = 10000;
    const int pixels = 16;
    double sum = 0.0, sumsq = 0.0;
    for (int d = 0; d < draws; ++d) {
        Tensor x0({pixels});
        for (double& v : x0.data) v = rng.uniform(-1.0, 1.0);
        Tensor eps = rng.normal_tensor({pixels});
        Tensor xt = forward_diffuse(x0, eps, 999, s);
        for (double v : xt.data) {
            sum += v;
            sumsq += v * v;
        }
    }
    const double n = static_cast<double>(draws) * pixels;
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double ab = s.alphas_cumprod[999];
    const double expect_var = ab / 3.0 + (1.0 - ab);  // U(-1,1) has variance 1/3
    // 3-sigma bands for the sample mean and variance of iid draws
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(n));
    CHECK(std::fabs(var - expect_var) < 3.0 * expect_var * std::sqrt(2.0 / n));
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("forward_diffuse variance identity holds across timesteps (property)") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    Rng rng(123);
    for (int t : {0, 250, 500, 750, 999}) {
        const int n = 200000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x0 = rng.uniform(-1.0, 1.0);
            const double eps = rng.normal();
            Tensor a = Tensor::from({1}, {x0});
            Tensor b = Tensor::from({1}, {eps});
            const double v = forward_diffuse(a, b, t, s)[0];
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        const double expect = s.alphas_cumprod[t] / 3.0 + (1.0 - s.alphas_cumprod[t]);
        CHECK(std::fabs(var - expect) < 3.0 * expect * std::sqrt(2.0 / n));
    }
}

TEST_CASE("tdw_alpha matches the truncated-linear definition") {
    TDWConfig cfg{400};
    CHECK(tdw_alpha(900, cfg) == 0.0);
    CHECK(tdw_alpha(400, cfg) == 1.0);
    CHECK(tdw_alpha(600, cfg) == 0.5);
    CHECK(tdw_alpha(0, cfg) == 1.0);
    CHECK(tdw_alpha(800, cfg) == 0.0);
    CHECK(tdw_alpha(1000, cfg) == 0.0);

    // nonincreasing, continuous, piecewise linear
    double prev = 1.0;
    for (int t = 0; t <= 1000; ++t) {
        const double a = tdw_alpha(t, cfg);
        CHECK(a <= prev + 1e-15);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        prev = a;
    }
    for (int t = 401; t < 799; ++t) {
        const double second_diff =
            tdw_alpha(t + 1, cfg) - 2.0 * tdw_alpha(t, cfg) + tdw_alpha(t - 1, cfg);
        CHECK(std::fabs(second_diff) < 1e-12);
    }

    validate_tdw(cfg, 1000);
    CHECK_THROWS_AS(validate_tdw(TDWConfig{600}, 1000), ConfigError);
    CHECK_THROWS_AS(validate_tdw(TDWConfig{0}, 1000), ConfigError);
}

TEST_CASE("cfg_combine special and affine cases") {
    Rng rng(7);
    Tensor u = testutil::random_tensor({3, 4}, rng);
    Tensor c = testutil::random_tensor({3, 4}, rng);

    Tensor r1 = cfg_combine(u, c, 1.0);
    CHECK(max_abs_diff(r1, c) == 0.0);

    Tensor r0 = cfg_combine(u, c, 0.0);
    CHECK(max_abs_diff(r0, u) == 0.0);

    Tensor zero = Tensor::zeros({2, 2});
    Tensor ones = Tensor::full({2, 2}, 1.0);
    Tensor r7 = cfg_combine(zero, ones, 7.0);
    for (int64_t i = 0; i < r7.numel(); ++i) CHECK(r7[i] == 7.0);

    CHECK_THROWS_AS(cfg_combine(zero, c, 2.0), InputError);
}

TEST_CASE("ddim single step recovers the closed-form clean image") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    TDWConfig tdw{400};
    Rng rng(55);
    Tensor eps_known = rng.normal_tensor({1, 4, 4});

    SamplerConfig cfg;
    cfg.num_inference_steps = 1;
    cfg.cfg_scale = 1.0;
    cfg.seed = 1234;

    auto denoise = [&](const Tensor&, int, double, bool) { return eps_known; };
    Tensor out = ddim_sample(denoise, {1, 4, 4}, cfg, s, tdw);

    // oracle: reproduce x_T from the same seed and apply the update by hand
    Rng rng2(cfg.seed);
    Tensor xt = rng2.normal_tensor({1, 4, 4});
    const double ab = s.alphas_cumprod[0];
    for (int64_t i = 0; i < out.numel(); ++i) {
        double x0hat = (xt[i] - std::sqrt(1.0 - ab) * eps_known[i]) / std::sqrt(ab);
        x0hat = std::min(1.0, std::max(-1.0, x0hat));
        CHECK(out[i] == doctest::Approx(x0hat).epsilon(1e-14));
    }
}

TEST_CASE("ddim trajectory matches a hand-rolled two-step oracle") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    TDWConfig tdw{400};
    Rng rng(66);
    Tensor eps_known = rng.normal_tensor({1, 3, 3});
    for (double& v : eps_known.data) v *= 0.1;

    SamplerConfig cfg;
    cfg.num_inference_steps = 2;
    cfg.cfg_scale = 1.0;
    cfg.seed = 77;
    auto denoise = [&](const Tensor&, int, double, bool) { return eps_known; };
    Tensor out = ddim_sample(denoise, {1, 3, 3}, cfg, s, tdw);

    Rng rng2(cfg.seed);
    Tensor x = rng2.normal_tensor({1, 3, 3});
    const int ts[2] = {0, 500};
    for (int i = 1; i >= 0; --i) {
        const double ab = s.alphas_cumprod[ts[i]];
        const double abp = (i > 0) ? s.alphas_cumprod[ts[i - 1]] : 1.0;
        for (int64_t j = 0; j < x.numel(); ++j) {
            double x0hat = (x[j] - std::sqrt(1.0 - ab) * eps_known[j]) / std::sqrt(ab);
            x0hat = std::min(1.0, std::max(-1.0, x0hat));
            x[j] = std::sqrt(abp) * x0hat + std::sqrt(1.0 - abp) * eps_known[j];
        }
    }
    CHECK(max_abs_diff(out, x) < 1e-13);
}

TEST_CASE("ddim is deterministic and honors the cfg=1 single-pass contract") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    TDWConfig tdw{400};
    SamplerConfig cfg;
    cfg.num_inference_steps = 5;
    cfg.cfg_scale = 1.0;
    cfg.seed = 99;

    int uncond_calls = 0;
    auto denoise = [&](const Tensor& x, int t, double alpha, bool with_caption) {
        if (!with_caption) uncond_calls++;
        Tensor e = x;
        const double cond_shift = with_caption ? 0.02 : -0.02;
        for (double& v : e.data) v = 0.05 * v + 0.01 * t / 1000.0 + 0.001 * alpha + cond_shift;
        return e;
    };

    Tensor a = ddim_sample(denoise, {1, 4, 4}, cfg, s, tdw);
    Tensor b = ddim_sample(denoise, {1, 4, 4}, cfg, s, tdw);
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(uncond_calls == 0);  // cfg == 1 never evaluates the unconditional pass

    Tensor c = ddim_sample(denoise, {1, 4, 4}, cfg, s, tdw, /*conditional_only=*/true);
    CHECK(max_abs_diff(a, c) == 0.0);

    // the guided path evaluates both passes and differs in general
    cfg.cfg_scale = 7.0;
    Tensor d = ddim_sample(denoise, {1, 4, 4}, cfg, s, tdw);
    CHECK(uncond_calls == 5);
    CHECK(max_abs_diff(a, d) > 0.0);

    // the appearance weight seen by the denoiser follows tdw_alpha(t)
    std::vector<std::pair<int, double>> seen;
    auto record = [&](const Tensor& x, int t, double alpha, bool) {
        seen.emplace_back(t, alpha);
        return Tensor::zeros(x.shape);
    };
    cfg.cfg_scale = 1.0;
    (void)ddim_sample(record, {1, 2, 2}, cfg, s, tdw);
    for (auto& [t, alpha] : seen) CHECK(alpha == tdw_alpha(t, tdw));
}

TEST_CASE("ddim output stays within [-1, 1]") {
    NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    TDWConfig tdw{400};
    SamplerConfig cfg;
    cfg.num_inference_steps = 10;
    cfg.cfg_scale = 7.0;
    cfg.seed = 3;
    auto denoise = [&](const Tensor& x, int, double, bool cond) {
        Tensor e = x;
        for (double& v : e.data) v = cond ? 0.3 * v : -0.2 * v;
        return e;
    };
    Tensor out = ddim_sample(denoise, {3, 8, 8}, cfg, s, tdw);
    for (double v : out.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}
