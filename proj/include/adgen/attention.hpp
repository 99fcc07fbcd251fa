#pragma once

#include <string>
#include <vector>

#include "adgen/autodiff.hpp"
#include "adgen/rng.hpp"
#include "adgen/tensor.hpp"

namespace adgen::attn {

// Parameters of one cross-attention branch: pre-attention LayerNorm affine,
// query/key/value projections and the output projection. The three branches
// of a layer are structurally identical instances of this group.
struct BranchParams {
    const ad::Parameter* ln_gamma = nullptr;  // c
    const ad::Parameter* ln_beta = nullptr;   // c
    const ad::Parameter* w_q = nullptr;       // c x d
    const ad::Parameter* w_k = nullptr;       // d_ctx x d
    const ad::Parameter* w_v = nullptr;       // d_ctx x d
    const ad::Parameter* w_out = nullptr;     // d x c
    const ad::Parameter* b_out = nullptr;     // c
};

struct StdNormOptions {
    bool enabled = true;
    double floor = 1e-8;
    // Treat std(Y_a), std(Y_t) as constants in backward when set.
    bool detach_stats = false;
};

struct BranchFlags {
    bool text = true;
    bool pose = false;
    bool appearance = false;
};

struct MultiBranchParams {
    BranchParams text, pose, appearance;
    int heads = 1;
    StdNormOptions std_norm;
};

// Raw (pre-normalization) residual statistics of one layer evaluation.
struct LayerProbe {
    std::string layer;
    double std_text = 0.0;
    double std_pose = 0.0;
    double std_appearance_raw = 0.0;
    double std_appearance_post = 0.0;  // after STD-Norm, before the time weight
    double alpha = 0.0;
    bool degenerate = false;
};

// Softmax(Q K^T / sqrt(d_head)) V followed by the output projection. Q comes
// from the (already normalized) spatial tokens, K and V from the context
// tokens. `logit_bias`, when given, is added per context token to every
// attention row (test hook for masked-token checks).
ad::Var cross_attention(ad::Tape& t, ad::Var x_normed, ad::Var ctx, const BranchParams& p,
                        int heads, const Tensor* logit_bias = nullptr);

// Y'_a = Y_a / std(Y_a) * std(Y_t). Below the floor the input passes through
// unchanged and a degenerate-branch diagnostic is emitted.
ad::Var std_norm(ad::Tape& t, ad::Var y_a, ad::Var y_t, const StdNormOptions& opt,
                 bool* out_degenerate = nullptr);

// Y_t + Y_p + alpha * Y'_a
ad::Var combine_branches(ad::Tape& t, ad::Var y_t, ad::Var y_p, ad::Var y_a_normed,
                         double alpha);
Tensor combine_branches(const Tensor& y_t, const Tensor& y_p, const Tensor& y_a_normed,
                        double alpha);

// Full residual block: per-branch LayerNorm + cross-attention, STD-Norm on the
// appearance residual, time-weighted combination, residual add. Disabled
// branches contribute exactly zero; with every branch disabled the input var
// is returned as-is.
ad::Var multi_branch_layer(ad::Tape& t, ad::Var x, ad::Var tokens_text, ad::Var tokens_pose,
                           ad::Var tokens_appearance, double alpha, const BranchFlags& flags,
                           const MultiBranchParams& p, LayerProbe* probe = nullptr);

// (1+P) x d_enc encoder features -> (1+P) x d_ctx tokens via one projection.
ad::Var project_visual_tokens(ad::Tape& t, ad::Var features, const ad::Parameter& proj);

// Creates one branch's parameter group under `prefix.` with Xavier-initialized
// projections and identity LayerNorm affine.
BranchParams create_branch_params(ad::ParamStore& store, const std::string& prefix, int c,
                                  int d_ctx, int d, Rng& rng);

}  // namespace adgen::attn
