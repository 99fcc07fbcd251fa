#include "adgen/scheduler.hpp"

#include <cmath>
#include <string>

#include "adgen/errors.hpp"
#include "adgen/rng.hpp"

namespace adgen {

NoiseSchedule build_schedule(int num_steps, double beta_start, double beta_end) {
    if (num_steps < 2) throw ConfigError("build_schedule: need at least 2 steps");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.betas.resize(static_cast<size_t>(num_steps));
    s.alphas_cumprod.resize(static_cast<size_t>(num_steps));
    double prod = 1.0;
    for (int t = 0; t < num_steps; ++t) {
        const double b =
            beta_start + (beta_end - beta_start) * static_cast<double>(t) / (num_steps - 1);
        s.betas[static_cast<size_t>(t)] = b;
        prod *= (1.0 - b);
        s.alphas_cumprod[static_cast<size_t>(t)] = prod;
    }
    return s;
}

Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    if (!x0.same_shape(eps))
        throw InputError("forward_diffuse: x0/eps shape mismatch " + x0.shape_str() + " vs " +
                         eps.shape_str());
    if (t < 0 || t >= sched.num_steps)
        throw InputError("forward_diffuse: timestep out of range");
    const double ab = sched.alphas_cumprod[static_cast<size_t>(t)];
    const double ca = std::sqrt(ab), ce = std::sqrt(1.0 - ab);
    Tensor out = x0;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = ca * x0.data[i] + ce * eps.data[i];
    return out;
}

void validate_tdw(const TDWConfig& cfg, int num_steps) {
    if (cfg.gamma <= 0) throw ConfigError("tdw: gamma must be positive");
    if (2 * cfg.gamma > num_steps)
        throw ConfigError("tdw: 2*gamma exceeds schedule length (" +
                          std::to_string(2 * cfg.gamma) + " > " + std::to_string(num_steps) +
                          ")");
}

double tdw_alpha(int t, const TDWConfig& cfg) {
    const double g = static_cast<double>(cfg.gamma);
    if (t >= 2 * cfg.gamma) return 0.0;
    if (t <= cfg.gamma) return 1.0;
    return 1.0 - (static_cast<double>(t) - g) / g;
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double s) {
    if (!eps_uncond.same_shape(eps_cond))
        throw InputError("cfg_combine: shape mismatch");
    if (s == 1.0) return eps_cond;
    Tensor out = eps_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = eps_uncond.data[i] + s * (eps_cond.data[i] - eps_uncond.data[i]);
    return out;
}

Tensor ddim_sample(const DenoiseFn& denoise, const std::vector<int>& shape,
                   const SamplerConfig& cfg, const NoiseSchedule& sched, const TDWConfig& tdw,
                   bool conditional_only) {
    if (cfg.num_inference_steps < 1 || cfg.num_inference_steps > sched.num_steps)
        throw ConfigError("ddim_sample: bad num_inference_steps");
    if (cfg.cfg_scale < 0.0) throw ConfigError("ddim_sample: negative cfg scale");

    const int S = cfg.num_inference_steps;
    std::vector<int> ts(static_cast<size_t>(S));
    for (int i = 0; i < S; ++i) ts[static_cast<size_t>(i)] = i * sched.num_steps / S;

    Rng rng(cfg.seed);
    Tensor x = rng.normal_tensor(shape);

    for (int i = S - 1; i >= 0; --i) {
        const int t = ts[static_cast<size_t>(i)];
        const double alpha = tdw_alpha(t, tdw);
        Tensor eps_cond = denoise(x, t, alpha, true);
        Tensor eps;
        if (conditional_only || cfg.cfg_scale == 1.0) {
            eps = std::move(eps_cond);
        } else {
            Tensor eps_uncond = denoise(x, t, alpha, false);
            eps = cfg_combine(eps_uncond, eps_cond, cfg.cfg_scale);
        }
        const double ab = sched.alphas_cumprod[static_cast<size_t>(t)];
        const double sab = std::sqrt(ab), seb = std::sqrt(1.0 - ab);
        Tensor x0hat = x;
        for (size_t j = 0; j < x.data.size(); ++j)
            x0hat.data[j] = (x.data[j] - seb * eps.data[j]) / sab;
        x0hat = clamp(x0hat, -1.0, 1.0);
        const double ab_prev =
            (i > 0) ? sched.alphas_cumprod[static_cast<size_t>(ts[static_cast<size_t>(i - 1)])]
                    : 1.0;
        const double sp = std::sqrt(ab_prev), se = std::sqrt(1.0 - ab_prev);
        for (size_t j = 0; j < x.data.size(); ++j)
            x.data[j] = sp * x0hat.data[j] + se * eps.data[j];
    }
    return x;
}

}  // namespace adgen
