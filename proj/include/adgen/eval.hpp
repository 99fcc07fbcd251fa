#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adgen/denoiser.hpp"
#include "adgen/scheduler.hpp"
#include "adgen/synthdata.hpp"
#include "adgen/tensor.hpp"
#include "adgen/training.hpp"

namespace adgen::eval {

// |m1 & m2| / |m1 | m2|; 1.0 when both masks are empty.
double mask_iou(const Tensor& m1, const Tensor& m2);

// Pixels within the accessory color tolerance (any of the accessory colors).
// Valid on the synthetic domain because accessory colors are disjoint from
// face palettes by construction.
Tensor detect_accessory_mask(const Tensor& image);

struct Classification {
    std::optional<synth::ScaleClass> scale;
    std::optional<PoseClass> pose;
    std::optional<int> palette_id;
    bool face_found = false;
};

// Scale from the detected face-band height ratio, pose from the nose-marker
// horizontal offset, palette from the nearest face-region mean color.
Classification classify_generated(const Tensor& image);

struct LayerStdSummary {
    std::string layer;
    double std_text = 0.0, std_pose = 0.0;
    double std_appearance_raw = 0.0, std_appearance_post = 0.0;
    double ratio_raw = 0.0;   // mean std(Y_a)/std(Y_t) before normalization
    double ratio_post = 0.0;  // after STD-Norm
};

struct ProbeReport {
    int t = 0;
    int n_samples = 0;
    std::vector<LayerStdSummary> layers;
};

// Raw residual statistics of every multi-branch layer at one timestep,
// averaged over a batch of noised samples.
ProbeReport branch_std_probe(const Denoiser& model, const std::vector<train::TrainItem>& items,
                             int t, const NoiseSchedule& sched, const TDWConfig& tdw,
                             uint64_t seed, bool appearance_enabled = true);

struct EvalReport {
    int n_samples = 0;
    double mask_iou_mean = 0.0;
    double scale_alignment_rate = 0.0;
    double pose_alignment_rate = 0.0;
    double appearance_alignment_rate = 0.0;
    double composite_id_exactness = 0.0;  // fraction of samples bit-exact inside the mask
    std::vector<LayerStdSummary> branch_stds;
};

struct EvalOptions {
    SamplerConfig sampler;
    int threads = 1;
    std::string out_dir;       // when set: per-sample JSONL + generated PNGs
    int probe_samples = 8;     // 0 disables the std probe
    int probe_t = 200;
};

// Generates every eval sample with DDIM from its own conditions, then scores
// mask IoU on the raw generation and ID-exactness on the composite.
EvalReport evaluate(const Denoiser& model, const synth::Dataset& eval_set,
                    const NoiseSchedule& sched, const TDWConfig& tdw, const EvalOptions& opt);

std::string report_to_json(const EvalReport& r);

}  // namespace adgen::eval
