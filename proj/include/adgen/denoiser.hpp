#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adgen/attention.hpp"
#include "adgen/autodiff.hpp"
#include "adgen/tensor.hpp"

namespace adgen {

struct DenoiserConfig {
    int image_size = 64;
    std::vector<int> channels = {64, 128, 256};   // per encoder level
    std::vector<int> attn_resolutions = {16, 8};  // feature-map sizes with cross-attention
    int groups = 8;                               // group-norm groups
    int d_ctx = 64;                               // context token width
    int temb_dim = 128;
    int vocab_size = 28;
    int caption_len = 16;
    int patch_grid = 4;  // visual encoder emits patch_grid^2 patch tokens
    int d_enc = 64;
    int vis_input_size = 64;
    int vis_channels = 32;
    int enc_kernel = 3;  // 1 selects the pointwise (flip-equivariant) encoder
    int heads = 1;
    bool separate_visual_encoders = false;  // default: shared encoder, separate projections
    bool control_middle_multibranch = false;
    bool std_norm_enabled = true;
    bool std_norm_detach = false;
    double std_norm_floor = 1e-8;

    int levels() const { return static_cast<int>(channels.size()); }
    void validate() const;
};

// Everything the denoiser is conditioned on for one sample.
struct ConditionBundle {
    Tensor cond_image;               // 4 x H x W: accessory rgb + binary scale map
    std::vector<int> caption_tokens; // length caption_len, pad id 0
    Tensor pose_image;               // 3 x vis x vis
    Tensor appearance_image;         // 3 x vis x vis; ignored when disabled
    bool appearance_enabled = false;
    double alpha = 0.0;              // appearance time weight for this step
};

using DenoiseProbe = std::vector<attn::LayerProbe>;

// Pixel-space UNet noise predictor with a control branch: the conditioning
// image feeds a copy of the encoder whose features are injected into the
// decoder through zero-initialized 1x1 convolutions, so the control branch
// contributes exactly nothing until trained. Text cross-attention lives in
// both branches; pose/appearance branches only in the control encoder.
class Denoiser {
  public:
    Denoiser(DenoiserConfig cfg, uint64_t init_seed);

    const DenoiserConfig& config() const { return cfg_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }

    // Builds the full prediction graph on the caller's tape (training path).
    ad::Var build_eps(ad::Tape& t, const Tensor& x_t, int timestep, const ConditionBundle& b,
                      DenoiseProbe* probe = nullptr) const;

    // Forward-only evaluation.
    Tensor denoise(const Tensor& x_t, int timestep, const ConditionBundle& b,
                   DenoiseProbe* probe = nullptr) const;

    // Base UNet alone, no control branch (zero-init contract checks).
    Tensor denoise_base_only(const Tensor& x_t, int timestep,
                             const std::vector<int>& caption_tokens) const;

    // Caption tokens -> caption_len x d_ctx (learned embedding + position).
    ad::Var encode_text(ad::Tape& t, const std::vector<int>& ids) const;
    Tensor encode_text_value(const std::vector<int>& ids) const;

    // 3 x vis x vis image -> (1 + patch_grid^2) x d_enc features: pooled class
    // token followed by the patch tokens.
    ad::Var encode_visual(ad::Tape& t, ad::Var image, bool appearance_encoder) const;
    Tensor encode_visual_value(const Tensor& image, bool appearance_encoder) const;

    std::vector<int> padded_caption(const std::vector<int>& ids) const;
    std::vector<int> empty_caption() const;  // the unconditional context

  private:
    struct ResBlock {
        const ad::Parameter *gn1_g, *gn1_b, *conv1_w, *conv1_b;
        const ad::Parameter *temb_w, *temb_b;
        const ad::Parameter *gn2_g, *gn2_b, *conv2_w, *conv2_b;
        const ad::Parameter *skip_w = nullptr, *skip_b = nullptr;
        int in_ch = 0, out_ch = 0;
    };
    struct ConvLayer {
        const ad::Parameter *w = nullptr, *b = nullptr;
    };
    struct VisEncoder {
        ConvLayer conv1, conv2, proj;
    };
    struct Branch {  // one UNet encoder (base or control)
        ConvLayer stem;
        std::vector<ResBlock> level_res;
        std::vector<attn::MultiBranchParams> level_attn;  // empty marker via has_attn
        std::vector<bool> has_attn;
        std::vector<ConvLayer> downs;
        ResBlock mid_res1, mid_res2;
        attn::MultiBranchParams mid_attn;
        bool mid_has_attn = false;
    };

    DenoiserConfig cfg_;
    ad::ParamStore params_;

    Branch base_, ctrl_;
    ConvLayer cond_stem1_, cond_stem2_;
    std::vector<ConvLayer> inject_skips_;
    ConvLayer inject_mid_;
    std::vector<ResBlock> dec_res_;
    std::vector<ConvLayer> dec_ups_;
    const ad::Parameter *head_gn_g_, *head_gn_b_;
    ConvLayer head_conv_;
    const ad::Parameter *temb_w1_, *temb_b1_, *temb_w2_, *temb_b2_;
    const ad::Parameter *text_embed_, *text_pos_;
    const ad::Parameter *vis_pos_;
    const ad::Parameter *proj_pose_, *proj_appearance_;
    VisEncoder vis_shared_, vis_appearance_;

    ResBlock make_res_block(const std::string& prefix, int in_ch, int out_ch, Rng& rng);
    ConvLayer make_conv(const std::string& prefix, int in_ch, int out_ch, int k, Rng& rng,
                        bool zero_init = false);
    VisEncoder make_vis_encoder(const std::string& prefix, Rng& rng);
    Branch make_unet_encoder(const std::string& prefix, bool multibranch, Rng& rng);

    ad::Var apply_res_block(ad::Tape& t, const ResBlock& rb, ad::Var h, ad::Var temb) const;
    ad::Var apply_attn(ad::Tape& t, const attn::MultiBranchParams& mb, ad::Var h, int hw,
                       ad::Var t_text, ad::Var t_pose, ad::Var t_app, bool full, double alpha,
                       bool appearance_on, DenoiseProbe* probe, const std::string& name) const;
    ad::Var run_encoder(ad::Tape& t, const Branch& br, ad::Var h0, ad::Var temb, ad::Var t_text,
                        ad::Var t_pose, ad::Var t_app, bool full, double alpha,
                        bool appearance_on, DenoiseProbe* probe, const std::string& name,
                        std::vector<ad::Var>& skips) const;
    ad::Var build_impl(ad::Tape& t, const Tensor& x_t, int timestep, const ConditionBundle& b,
                       bool with_control, DenoiseProbe* probe) const;
    void validate_bundle(const ConditionBundle& b) const;
};

}  // namespace adgen
