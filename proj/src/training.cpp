#include "adgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "adgen/checkpoint.hpp"
#include "adgen/errors.hpp"
#include "adgen/image_io.hpp"
#include "adgen/parallel.hpp"
#include "adgen/rng.hpp"

namespace adgen::train {

namespace fs = std::filesystem;
using ad::GradSink;
using ad::Tape;
using ad::Var;
using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("train: epochs/batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (appearance_dropout_p < 0.0 || appearance_dropout_p > 1.0 || caption_dropout_p < 0.0 ||
        caption_dropout_p > 1.0)
        throw ConfigError("train: dropout probabilities must lie in [0,1]");
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
    if (ema_enabled) throw ConfigError("train: ema is a config stub and not supported");
}

TrainItem make_train_item(const synth::SampleRecord& rec, int vis_size) {
    TrainItem it;
    it.x0 = image_to_tensor(rec.image);
    Tensor mask = mask_to_tensor(rec.mask);
    AccessoryCondition acc = accessory_from_scene(it.x0, mask);
    ScaleMap smap = scale_map_from_keypoints(rec.meta.kps, rec.image.h, rec.image.w);
    it.cond_image = assemble_condition(acc, smap);
    it.caption = rec.meta.caption;
    it.pose_image = render_pose_proxy({rec.meta.yaw_deg}, vis_size, vis_size);
    it.appearance_ref = image_to_tensor(rec.appearance);
    it.identity = rec.meta.seed;
    return it;
}

Adam::Adam(ad::ParamStore& params, double lr) : params_(&params), lr_(lr) {}

void Adam::step(const GradSink& grads, const std::function<bool(const ad::Parameter&)>& skip) {
    t_++;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (ad::Parameter* p : params_->ordered()) {
        if (skip && skip(*p)) continue;
        const Tensor* g = grads.find(*p);
        auto it = moments_.find(p);
        if (!g && it == moments_.end()) continue;  // never touched: no update either way
        if (it == moments_.end())
            it = moments_
                     .emplace(p, std::make_pair(Tensor::zeros(p->value.shape),
                                                Tensor::zeros(p->value.shape)))
                     .first;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double gi = g ? g->data[i] : 0.0;
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

struct SampleDraw {
    int t = 0;
    Tensor eps;
    bool drop_appearance = false;
    bool drop_caption = false;
    AugmentDraws aug;
};

// All randomness of one sample in one step, keyed by identity rather than
// batch position so loss is invariant under batch permutation.
SampleDraw draw_sample(const TrainConfig& cfg, const NoiseSchedule& sched, int64_t step_index,
                       uint64_t identity, const std::vector<int>& shape) {
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(step_index) ^ 0x7261696eULL, identity));
    SampleDraw d;
    d.t = rng.uniform_int(0, sched.num_steps - 1);
    d.eps = rng.normal_tensor(shape);
    d.drop_appearance = rng.bernoulli(cfg.appearance_dropout_p);
    d.drop_caption = rng.bernoulli(cfg.caption_dropout_p);
    d.aug = sample_augment_draws(rng);
    return d;
}

Var build_sample_loss(Tape& tape, const EpsGraphFn& eps, const TrainItem& item,
                      const SampleDraw& draw, const NoiseSchedule& sched, const TDWConfig& tdw,
                      const TrainConfig& cfg, int vis_size) {
    ConditionBundle b;
    b.cond_image = item.cond_image;
    b.caption_tokens = item.caption;
    if (draw.drop_caption)
        b.caption_tokens.assign(b.caption_tokens.size(), 0);
    b.pose_image = item.pose_image;
    if (draw.drop_appearance) {
        b.appearance_enabled = false;
        b.alpha = 0.0;
    } else {
        b.appearance_enabled = true;
        b.alpha = cfg.tdw_enabled ? tdw_alpha(draw.t, tdw) : 1.0;
        b.appearance_image = augment_appearance_with(item.appearance_ref, vis_size, draw.aug);
    }
    Tensor x_t = forward_diffuse(item.x0, draw.eps, draw.t, sched);
    Var pred = eps(tape, x_t, draw.t, b);
    return tape.mse_against(pred, draw.eps);
}

}  // namespace

double batch_loss(const EpsGraphFn& eps, const std::vector<TrainItem>& batch,
                  const NoiseSchedule& sched, const TDWConfig& tdw, const TrainConfig& cfg,
                  int64_t step_index, int vis_size) {
    double total = 0.0;
    for (const TrainItem& item : batch) {
        Tape tape;
        SampleDraw d = draw_sample(cfg, sched, step_index, item.identity, item.x0.shape);
        total += tape.val(build_sample_loss(tape, eps, item, d, sched, tdw, cfg, vis_size))[0];
    }
    return total / static_cast<double>(batch.size());
}

double training_gradients(const EpsGraphFn& eps, const std::vector<TrainItem>& batch,
                          const NoiseSchedule& sched, const TDWConfig& tdw,
                          const TrainConfig& cfg, int64_t step_index, int vis_size,
                          GradSink& sink) {
    if (batch.empty()) throw InputError("training_gradients: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const TrainItem& item : batch) {
        Tape tape;
        SampleDraw d = draw_sample(cfg, sched, step_index, item.identity, item.x0.shape);
        Var loss = build_sample_loss(tape, eps, item, d, sched, tdw, cfg, vis_size);
        total += tape.val(loss)[0];
        tape.backward(loss, sink, inv_b);
    }
    return total * inv_b;
}

StepStats training_step(const EpsGraphFn& eps, ad::ParamStore& params, Adam& opt,
                        const std::vector<TrainItem>& batch, const NoiseSchedule& sched,
                        const TDWConfig& tdw, const TrainConfig& cfg, int64_t step_index,
                        int vis_size, const std::function<bool(const ad::Parameter&)>& freeze) {
    if (batch.empty()) throw InputError("training_step: empty batch");
    const int n = static_cast<int>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(n);
    const int nthreads = std::min(cfg.threads, n);

    std::vector<GradSink> sinks(static_cast<size_t>(std::max(1, nthreads)));
    std::vector<double> losses(static_cast<size_t>(n), 0.0);
    std::vector<int> ts(static_cast<size_t>(n), 0);
    std::vector<std::string> errors(static_cast<size_t>(std::max(1, nthreads)));

    parallel_for(n, nthreads, [&](int i, int thread_id) {
        try {
            const TrainItem& item = batch[static_cast<size_t>(i)];
            SampleDraw d = draw_sample(cfg, sched, step_index, item.identity, item.x0.shape);
            ts[static_cast<size_t>(i)] = d.t;
            Tape tape;
            Var loss = build_sample_loss(tape, eps, item, d, sched, tdw, cfg, vis_size);
            losses[static_cast<size_t>(i)] = tape.val(loss)[0];
            tape.backward(loss, sinks[static_cast<size_t>(thread_id)], inv_b);
        } catch (const std::exception& e) {
            if (errors[static_cast<size_t>(thread_id)].empty())
                errors[static_cast<size_t>(thread_id)] = e.what();
        }
    });
    for (const std::string& err : errors)
        if (!err.empty()) throw InputError("training_step: " + err);

    StepStats stats;
    stats.t_values = ts;
    for (double l : losses) stats.loss += l;
    stats.loss *= inv_b;
    if (!std::isfinite(stats.loss)) {
        std::ostringstream os;
        os << "training_step: non-finite loss at step " << step_index << "; sample seeds/t:";
        for (int i = 0; i < n; ++i)
            os << " (" << batch[static_cast<size_t>(i)].identity << ", t=" << ts[static_cast<size_t>(i)]
               << ", loss=" << losses[static_cast<size_t>(i)] << ")";
        throw InputError(os.str());
    }

    // fold thread-local gradients in thread order
    GradSink& total = sinks[0];
    for (size_t s = 1; s < sinks.size(); ++s) {
        for (ad::Parameter* p : params.ordered()) {
            const Tensor* g = sinks[s].find(*p);
            if (g) axpy(total.of(*p), 1.0, *g);
        }
    }
    opt.step(total, freeze);
    return stats;
}

TrainResult train(const synth::Dataset& data, Denoiser& model, const NoiseSchedule& sched,
                  const TDWConfig& tdw, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& config_echo) {
    cfg.validate();
    if (data.size() == 0) throw InputError("train: empty dataset");
    fs::create_directories(out_dir);

    const int vis = model.config().vis_input_size;
    EpsGraphFn eps = [&model](Tape& t, const Tensor& x_t, int tt, const ConditionBundle& b) {
        return model.build_eps(t, x_t, tt, b);
    };
    Adam opt(model.params(), cfg.lr);

    std::ofstream log(fs::path(out_dir) / "loss_log.jsonl");
    if (!log) throw IoError("train: cannot write loss log");

    const int n = static_cast<int>(data.size());
    const int steps_per_epoch = n / cfg.batch_size;
    if (steps_per_epoch < 1) throw ConfigError("train: batch size exceeds dataset");

    std::function<bool(const ad::Parameter&)> freeze;
    TrainResult result;
    double first100_sum = 0.0;
    int first100_count = 0;
    double initial_loss = -1.0;
    int divergence_streak = 0;
    double final_epoch_sum = 0.0;
    int final_epoch_count = 0;
    int64_t step_index = 0;

    const std::string config_path = (fs::path(out_dir) / "config_echo.ini").string();
    {
        std::ofstream cf(config_path);
        cf << config_echo;
    }
    const uint64_t config_hash = fnv1a64(config_echo.data(), config_echo.size());

    auto save_checkpoint = [&](const std::string& name, int epoch) {
        const std::string path = (fs::path(out_dir) / name).string();
        save_params(path, model.params());
        json side;
        side["step"] = step_index;
        side["epoch"] = epoch;
        side["config_hash"] = checksum_hex(config_hash);
        std::ofstream sf(path + ".json");
        sf << side.dump(2) << "\n";
        std::ofstream cf(path + ".config.ini");
        cf << config_echo;
        return path;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.freeze_base_after_epoch >= 0 && epoch >= cfg.freeze_base_after_epoch && !freeze)
            freeze = [](const ad::Parameter& p) { return p.name.rfind("base.", 0) == 0; };

        // deterministic shuffle per (seed, epoch)
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x65706f63ULL, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

        const bool last_epoch = epoch == cfg.epochs - 1;
        for (int bstep = 0; bstep < steps_per_epoch; ++bstep) {
            std::vector<TrainItem> batch;
            batch.reserve(static_cast<size_t>(cfg.batch_size));
            for (int k = 0; k < cfg.batch_size; ++k)
                batch.push_back(make_train_item(
                    data.at(static_cast<size_t>(order[static_cast<size_t>(bstep * cfg.batch_size + k)])),
                    vis));
            StepStats stats =
                training_step(eps, model.params(), opt, batch, sched, tdw, cfg, step_index, vis, freeze);

            if (initial_loss < 0.0) initial_loss = stats.loss;
            if (stats.loss > 10.0 * initial_loss) {
                if (++divergence_streak >= 100)
                    throw InputError("train: diverged (loss above 10x initial for 100 steps)");
            } else {
                divergence_streak = 0;
            }
            if (first100_count < 100) {
                first100_sum += stats.loss;
                first100_count++;
            }
            if (last_epoch) {
                final_epoch_sum += stats.loss;
                final_epoch_count++;
            }

            // t histogram in 10 buckets
            std::vector<int> hist(10, 0);
            for (int tv : stats.t_values)
                hist[static_cast<size_t>(std::min(9, tv * 10 / sched.num_steps))]++;
            json line;
            line["step"] = step_index;
            line["epoch"] = epoch;
            line["loss"] = stats.loss;
            line["t_hist"] = hist;
            log << line.dump() << "\n";
            step_index++;
        }
        if (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0 &&
            epoch + 1 < cfg.epochs) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03d.adgn", epoch + 1);
            save_checkpoint(buf, epoch + 1);
        }
    }
    log.close();

    result.final_checkpoint = save_checkpoint("checkpoint_final.adgn", cfg.epochs);
    result.first100_mean = first100_count ? first100_sum / first100_count : 0.0;
    result.final_epoch_mean = final_epoch_count ? final_epoch_sum / final_epoch_count : 0.0;
    result.steps = step_index;
    return result;
}

}  // namespace adgen::train
