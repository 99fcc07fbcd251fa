#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "adgen/tensor.hpp"

namespace adgen {

// Per-timestep diffusion coefficients. alphas_cumprod[t] is the running
// product of (1 - beta) up to and including t; strictly decreasing.
struct NoiseSchedule {
    int num_steps = 0;
    std::vector<double> betas;
    std::vector<double> alphas_cumprod;
};

// Truncated-linear time weight for the appearance branch: 1 up to gamma,
// linear down to 0 at 2*gamma, 0 beyond.
struct TDWConfig {
    int gamma = 400;
};

struct SamplerConfig {
    int num_inference_steps = 30;
    double cfg_scale = 7.0;
    uint64_t seed = 0;
};

NoiseSchedule build_schedule(int num_steps, double beta_start, double beta_end);

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched);

// Rejects configurations where the linear ramp does not fit inside the
// schedule (2*gamma must not exceed num_steps).
void validate_tdw(const TDWConfig& cfg, int num_steps);

double tdw_alpha(int t, const TDWConfig& cfg);

// eps_uncond + s * (eps_cond - eps_uncond); s == 1 returns eps_cond verbatim
// so guided and unguided paths can be compared bit-for-bit.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double s);

// One denoiser evaluation: predicted noise for x at timestep t. `alpha` is the
// appearance weight for this step; `with_caption=false` is the unconditional
// pass (caption dropped, spatial/visual conditions kept).
using DenoiseFn = std::function<Tensor(const Tensor& x, int t, double alpha, bool with_caption)>;

// Deterministic DDIM (eta = 0) over a uniformly spaced timestep subsequence,
// with classifier-free guidance. conditional_only is a test hook that forces
// the single-pass path regardless of cfg_scale.
Tensor ddim_sample(const DenoiseFn& denoise, const std::vector<int>& shape,
                   const SamplerConfig& cfg, const NoiseSchedule& sched, const TDWConfig& tdw,
                   bool conditional_only = false);

}  // namespace adgen
