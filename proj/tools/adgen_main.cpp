#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "adgen/checkpoint.hpp"
#include "adgen/conditioning.hpp"
#include "adgen/config.hpp"
#include "adgen/denoiser.hpp"
#include "adgen/errors.hpp"
#include "adgen/eval.hpp"
#include "adgen/image_io.hpp"
#include "adgen/rng.hpp"
#include "adgen/scheduler.hpp"
#include "adgen/synthdata.hpp"
#include "adgen/training.hpp"

namespace fs = std::filesystem;
using namespace adgen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

void require_path(const std::string& p, const std::string& what) {
    if (!fs::exists(p)) throw UsageError(what + " does not exist: " + p);
}

Denoiser load_model(const std::string& ckpt, RunConfig& cfg_out) {
    require_path(ckpt, "checkpoint");
    const std::string cfg_path = ckpt + ".config.ini";
    require_path(cfg_path, "checkpoint config");
    cfg_out = load_config_file(cfg_path);
    cfg_out.validate();
    Denoiser model(cfg_out.denoiser, /*init_seed=*/0);
    load_params(ckpt, model.params());
    return model;
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "config_echo.ini");
    f << serialize_config(cfg);
}

/*--------------------------------- gen-data ----------------------------------*/

int cmd_gen_data(int n, uint64_t seed, const std::string& out, int size) {
    if (n < 1) throw UsageError("--n must be >= 1");
    const uint64_t checksum = synth::generate_dataset(out, n, seed, size);
    std::printf("wrote %d samples to %s\n", n, out.c_str());
    std::printf("manifest checksum: %s\n", checksum_hex(checksum).c_str());
    return kExitOk;
}

/*----------------------------------- train -----------------------------------*/

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<uint64_t> seed,
              std::optional<int> epochs, std::optional<int> threads) {
    require_path(config_path, "config file");
    require_path(data_dir, "dataset");
    RunConfig cfg = load_config_file(config_path);
    if (seed) cfg.train.seed = *seed;
    if (epochs) cfg.train.epochs = *epochs;
    if (threads) cfg.train.threads = *threads;
    cfg.validate();

    synth::Dataset data = synth::Dataset::load(data_dir);
    if (data.canvas() != cfg.denoiser.image_size)
        throw UsageError("dataset canvas " + std::to_string(data.canvas()) +
                         " does not match denoiser.image_size " +
                         std::to_string(cfg.denoiser.image_size));

    NoiseSchedule sched =
        build_schedule(cfg.schedule.num_steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    Denoiser model(cfg.denoiser, mix_seed(cfg.train.seed, 0x696e6974ULL));
    echo_config(cfg, out_dir);
    train::TrainResult res =
        train::train(data, model, sched, cfg.tdw, cfg.train, out_dir, serialize_config(cfg));
    std::printf("steps: %lld\n", static_cast<long long>(res.steps));
    std::printf("first-100-step mean loss: %.6f\n", res.first100_mean);
    std::printf("final-epoch mean loss:    %.6f\n", res.final_epoch_mean);
    std::printf("checkpoint: %s\n", res.final_checkpoint.c_str());
    return kExitOk;
}

/*----------------------------------- sample ----------------------------------*/

struct SampleArgs {
    std::string checkpoint, accessory, mask, appearance, caption, out;
    double scale_ratio = 0.0;
    bool has_scale_ratio = false;
    std::string keypoints;
    double pose_yaw = 0.0;
    int steps = 0;
    double cfg_scale = -1.0;
    int gamma = 0;
    uint64_t seed = 0;
};

AccessoryCondition load_accessory(const std::string& acc_path, const std::string& mask_path,
                                  int expect_size) {
    Image8 acc_img = read_png(acc_path);
    Image8 mask_img = read_png(mask_path);
    if (acc_img.c != 3) throw InputError("accessory PNG must be RGB");
    if (acc_img.w != expect_size || acc_img.h != expect_size)
        throw InputError("accessory PNG must be " + std::to_string(expect_size) + "x" +
                         std::to_string(expect_size));
    if (mask_img.w != acc_img.w || mask_img.h != acc_img.h || mask_img.c != 1)
        throw InputError("mask PNG must be single-channel and match the accessory size");
    AccessoryCondition acc;
    acc.mask = mask_to_tensor(mask_img);
    acc.rgb = Tensor::zeros({3, acc_img.h, acc_img.w});
    for (int y = 0; y < acc_img.h; ++y)
        for (int x = 0; x < acc_img.w; ++x) {
            if (acc.mask.at(y, x) == 1.0) {
                for (int c = 0; c < 3; ++c)
                    acc.rgb.at(c, y, x) = byte_to_unit(acc_img.at(y, x, c));
            } else {
                for (int c = 0; c < 3; ++c)
                    if (acc_img.at(y, x, c) != 0)
                        throw InputError(
                            "accessory PNG has nonzero pixels outside the mask at (" +
                            std::to_string(x) + "," + std::to_string(y) + ")");
            }
        }
    validate_accessory(acc);
    return acc;
}

int cmd_sample(const SampleArgs& a) {
    RunConfig cfg;
    Denoiser model = load_model(a.checkpoint, cfg);
    if (a.steps > 0) cfg.sampler.num_inference_steps = a.steps;
    if (a.cfg_scale >= 0.0) cfg.sampler.cfg_scale = a.cfg_scale;
    if (a.gamma > 0) cfg.tdw.gamma = a.gamma;
    cfg.sampler.seed = a.seed;
    cfg.validate();
    const int S = cfg.denoiser.image_size;
    const int vis = cfg.denoiser.vis_input_size;

    AccessoryCondition acc = load_accessory(a.accessory, a.mask, S);

    ScaleMap smap;
    double ratio_for_caption = 0.5;
    if (a.has_scale_ratio) {
        int top_row = -1;
        for (int y = 0; y < S && top_row < 0; ++y)
            for (int x = 0; x < S; ++x)
                if (acc.mask.at(y, x) == 1.0) {
                    top_row = y;
                    break;
                }
        if (top_row < 0) throw InputError("mask is empty; cannot anchor the scale map");
        smap = scale_map_from_ratio(top_row, a.scale_ratio, S, S);
        ratio_for_caption = a.scale_ratio;
    } else {
        int x1, y1, x2, y2;
        if (std::sscanf(a.keypoints.c_str(), "%d,%d,%d,%d", &x1, &y1, &x2, &y2) != 4)
            throw UsageError("--keypoints expects x1,y1,x2,y2");
        smap = scale_map_from_keypoints({x1, y1, x2, y2}, S, S);
        ratio_for_caption = static_cast<double>(y2 - y1 + 1) / S;
    }

    Tensor pose_img = render_pose_proxy({a.pose_yaw}, vis, vis);

    ConditionBundle base;
    base.cond_image = assemble_condition(acc, smap);
    base.pose_image = pose_img;
    base.appearance_enabled = false;
    if (!a.appearance.empty()) {
        Image8 app = read_png(a.appearance);
        if (app.c != 3) throw InputError("appearance PNG must be RGB");
        base.appearance_image = resize_bilinear(image_to_tensor(app), vis, vis);
        base.appearance_enabled = true;
    }

    std::string caption = a.caption;
    if (caption.empty()) {
        caption = std::string("a woman wears earring ") +
                  synth::scale_class_name(synth::scale_class_of(std::min(1.0, ratio_for_caption))) +
                  " face facing " + pose_class_name(pose_class_of(a.pose_yaw)) +
                  " best quality";
    }
    base.caption_tokens = model.padded_caption(synth::Vocab::get().tokenize(caption));

    NoiseSchedule sched =
        build_schedule(cfg.schedule.num_steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    DenoiseFn fn = [&](const Tensor& x, int t, double alpha, bool with_caption) {
        ConditionBundle b = base;
        b.alpha = base.appearance_enabled ? alpha : 0.0;
        if (!with_caption) b.caption_tokens = model.empty_caption();
        return model.denoise(x, t, b);
    };
    Tensor gen = ddim_sample(fn, {3, S, S}, cfg.sampler, sched, cfg.tdw);
    Tensor final_img = composite(acc, gen);

    fs::create_directories(a.out);
    const std::string gen_path = (fs::path(a.out) / "gen.png").string();
    const std::string final_path = (fs::path(a.out) / "final.png").string();
    write_png(gen_path, tensor_to_image(gen));
    write_png(final_path, tensor_to_image(final_img));
    echo_config(cfg, a.out);
    std::printf("raw generation: %s\n", gen_path.c_str());
    std::printf("composited:     %s\n", final_path.c_str());
    return kExitOk;
}

/*------------------------------------ eval -----------------------------------*/

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
             uint64_t seed, std::optional<int> steps, std::optional<double> cfg_scale,
             int threads) {
    require_path(data_dir, "dataset");
    RunConfig cfg;
    Denoiser model = load_model(ckpt, cfg);
    synth::Dataset data = synth::Dataset::load(data_dir);
    if (data.canvas() != cfg.denoiser.image_size)
        throw UsageError("dataset canvas does not match the checkpoint's image size");

    NoiseSchedule sched =
        build_schedule(cfg.schedule.num_steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    eval::EvalOptions opt;
    opt.sampler = cfg.sampler;
    if (steps) opt.sampler.num_inference_steps = *steps;
    if (cfg_scale) opt.sampler.cfg_scale = *cfg_scale;
    opt.sampler.seed = seed;
    opt.threads = threads;
    opt.out_dir = out_dir;
    opt.probe_t = cfg.tdw.gamma / 2;

    eval::EvalReport rep = eval::evaluate(model, data, sched, cfg.tdw, opt);
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "report.json");
        f << eval::report_to_json(rep) << "\n";
    }
    echo_config(cfg, out_dir);
    std::printf("samples:                %d\n", rep.n_samples);
    std::printf("mask IoU (mean):        %.4f\n", rep.mask_iou_mean);
    std::printf("scale alignment:        %.4f\n", rep.scale_alignment_rate);
    std::printf("pose alignment:         %.4f\n", rep.pose_alignment_rate);
    std::printf("appearance alignment:   %.4f\n", rep.appearance_alignment_rate);
    std::printf("composite ID exactness: %.4f\n", rep.composite_id_exactness);
    return kExitOk;
}

/*----------------------------------- probe -----------------------------------*/

int cmd_probe(const std::string& ckpt, const std::string& data_dir, int t,
              const std::string& out_dir, int n, uint64_t seed) {
    require_path(data_dir, "dataset");
    RunConfig cfg;
    Denoiser model = load_model(ckpt, cfg);
    synth::Dataset data = synth::Dataset::load(data_dir);
    if (t < 0 || t >= cfg.schedule.num_steps) throw UsageError("--t outside the schedule");

    NoiseSchedule sched =
        build_schedule(cfg.schedule.num_steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    std::vector<train::TrainItem> items;
    for (size_t i = 0; i < std::min<size_t>(data.size(), static_cast<size_t>(n)); ++i)
        items.push_back(train::make_train_item(data.at(i), cfg.denoiser.vis_input_size));
    eval::ProbeReport rep = eval::branch_std_probe(model, items, t, sched, cfg.tdw, seed);

    nlohmann::json j;
    j["t"] = rep.t;
    j["n_samples"] = rep.n_samples;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : rep.layers)
        layers.push_back({{"layer", l.layer},
                          {"std_text", l.std_text},
                          {"std_pose", l.std_pose},
                          {"std_appearance_raw", l.std_appearance_raw},
                          {"std_appearance_post", l.std_appearance_post},
                          {"ratio_raw", l.ratio_raw},
                          {"ratio_post", l.ratio_post}});
    j["layers"] = layers;
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "probe.json");
    f << j.dump(2) << "\n";
    for (const auto& l : rep.layers)
        std::printf("%-22s std_t %.5f  std_p %.5f  std_a %.5f  raw a/t %.3f  post a/t %.3f\n",
                    l.layer.c_str(), l.std_text, l.std_pose, l.std_appearance_raw, l.ratio_raw,
                    l.ratio_post);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"controllable accessory-on-face diffusion toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    int gd_n = 0, gd_size = 64;
    uint64_t gd_seed = 0;
    std::string gd_out;
    gd->add_option("--n", gd_n, "number of samples")->required();
    gd->add_option("--seed", gd_seed, "base seed")->required();
    gd->add_option("--out", gd_out, "output directory")->required();
    gd->add_option("--size", gd_size, "canvas size");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_config, tr_data, tr_out;
    std::optional<uint64_t> tr_seed;
    std::optional<int> tr_epochs, tr_threads;
    tr->add_option("--config", tr_config, "run configuration file")->required();
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--seed", tr_seed, "override train.seed");
    tr->add_option("--epochs", tr_epochs, "override train.epochs");
    tr->add_option("--threads", tr_threads, "override train.threads");

    // sample
    auto* sa = app.add_subcommand("sample", "generate one image from conditions");
    SampleArgs s;
    sa->add_option("--checkpoint", s.checkpoint, "model checkpoint")->required();
    sa->add_option("--accessory", s.accessory, "accessory PNG (black outside mask)")->required();
    sa->add_option("--mask", s.mask, "mask PNG {0,255}")->required();
    auto* ratio_opt = sa->add_option("--scale-ratio", s.scale_ratio, "face height ratio (0,1]");
    sa->add_option("--keypoints", s.keypoints, "face keypoints x1,y1,x2,y2");
    sa->add_option("--pose-yaw", s.pose_yaw, "head yaw in degrees [-90,90]")->required();
    sa->add_option("--appearance", s.appearance, "appearance reference PNG (optional)");
    sa->add_option("--caption", s.caption, "caption text (default derived from conditions)");
    sa->add_option("--steps", s.steps, "sampler steps");
    sa->add_option("--cfg", s.cfg_scale, "guidance scale");
    sa->add_option("--gamma", s.gamma, "appearance time-weight knee");
    sa->add_option("--seed", s.seed, "sampling seed")->required();
    sa->add_option("--out", s.out, "output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out;
    uint64_t ev_seed = 0;
    std::optional<int> ev_steps;
    std::optional<double> ev_cfg;
    int ev_threads = 1;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--seed", ev_seed)->required();
    ev->add_option("--steps", ev_steps);
    ev->add_option("--cfg", ev_cfg);
    ev->add_option("--threads", ev_threads);

    // probe
    auto* pr = app.add_subcommand("probe", "per-layer branch std statistics");
    std::string pr_ckpt, pr_data, pr_out;
    int pr_t = 0, pr_n = 8;
    uint64_t pr_seed = 0;
    pr->add_option("--checkpoint", pr_ckpt)->required();
    pr->add_option("--data", pr_data)->required();
    pr->add_option("--t", pr_t, "probe timestep")->required();
    pr->add_option("--out", pr_out)->required();
    pr->add_option("--n", pr_n, "samples to probe");
    pr->add_option("--seed", pr_seed)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gd->parsed()) return cmd_gen_data(gd_n, gd_seed, gd_out, gd_size);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out, tr_seed, tr_epochs, tr_threads);
        if (sa->parsed()) {
            s.has_scale_ratio = ratio_opt->count() > 0;
            if (s.has_scale_ratio == !s.keypoints.empty())
                throw UsageError("exactly one of --scale-ratio or --keypoints is required");
            return cmd_sample(s);
        }
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_seed, ev_steps, ev_cfg, ev_threads);
        if (pr->parsed()) return cmd_probe(pr_ckpt, pr_data, pr_t, pr_out, pr_n, pr_seed);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
