#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "adgen/autodiff.hpp"
#include "adgen/conditioning.hpp"
#include "adgen/denoiser.hpp"
#include "adgen/scheduler.hpp"
#include "adgen/synthdata.hpp"
#include "adgen/tensor.hpp"

namespace adgen::train {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-4;
    double appearance_dropout_p = 0.3;
    double caption_dropout_p = 0.1;
    uint64_t seed = 0;
    int checkpoint_every_epochs = 5;
    int threads = 1;
    int freeze_base_after_epoch = -1;  // <0: co-train the base throughout
    bool tdw_enabled = true;           // when off, the appearance weight is 1 at every t
    bool ema_enabled = false;          // config stub; rejected when set
    void validate() const;
};

// One sample's pre-assembled training inputs. Noise, dropout and appearance
// augmentation are drawn per (run seed, step, identity) inside the step.
struct TrainItem {
    Tensor x0;
    Tensor cond_image;
    std::vector<int> caption;
    Tensor pose_image;
    Tensor appearance_ref;  // raw reference; augmented per step
    uint64_t identity = 0;
};

TrainItem make_train_item(const synth::SampleRecord& rec, int vis_size);

using EpsGraphFn =
    std::function<ad::Var(ad::Tape&, const Tensor& x_t, int t, const ConditionBundle&)>;

class Adam {
  public:
    Adam(ad::ParamStore& params, double lr);
    void set_lr(double lr) { lr_ = lr; }
    // Applies one update from accumulated gradients; `skip` filters parameters
    // (used by the frozen-base mode).
    void step(const ad::GradSink& grads,
              const std::function<bool(const ad::Parameter&)>& skip = {});

  private:
    ad::ParamStore* params_;
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::unordered_map<const ad::Parameter*, std::pair<Tensor, Tensor>> moments_;
};

struct StepStats {
    double loss = 0.0;
    std::vector<int> t_values;
};

// Forward+backward+update over one batch. Deterministic given (cfg.seed,
// step_index, item identities); independent of the thread count for the
// forward values and of scheduling for the gradients at a fixed thread count.
StepStats training_step(const EpsGraphFn& eps, ad::ParamStore& params, Adam& opt,
                        const std::vector<TrainItem>& batch, const NoiseSchedule& sched,
                        const TDWConfig& tdw, const TrainConfig& cfg, int64_t step_index,
                        int vis_size,
                        const std::function<bool(const ad::Parameter&)>& freeze = {});

// Loss of the same batch without any update (finite-difference oracle hook).
double batch_loss(const EpsGraphFn& eps, const std::vector<TrainItem>& batch,
                  const NoiseSchedule& sched, const TDWConfig& tdw, const TrainConfig& cfg,
                  int64_t step_index, int vis_size);

// Loss plus accumulated parameter gradients, no optimizer update.
double training_gradients(const EpsGraphFn& eps, const std::vector<TrainItem>& batch,
                          const NoiseSchedule& sched, const TDWConfig& tdw,
                          const TrainConfig& cfg, int64_t step_index, int vis_size,
                          ad::GradSink& sink);

struct TrainResult {
    double first100_mean = 0.0;
    double final_epoch_mean = 0.0;
    int64_t steps = 0;
    std::string final_checkpoint;
};

// Full training run: shuffled epochs, loss log (JSONL), periodic checkpoints.
// `config_echo` is stored alongside checkpoints and hashed into the sidecar.
TrainResult train(const synth::Dataset& data, Denoiser& model, const NoiseSchedule& sched,
                  const TDWConfig& tdw, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& config_echo);

}  // namespace adgen::train
