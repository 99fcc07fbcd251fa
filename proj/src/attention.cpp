#include "adgen/attention.hpp"

#include <cmath>
#include <cstdio>

#include "adgen/errors.hpp"

namespace adgen::attn {

using ad::Tape;
using ad::Var;

namespace {

void check_branch_dims(const Tensor& x, const Tensor& ctx, const BranchParams& p, int heads) {
    const int c = x.dim(1);
    const int d_ctx = ctx.dim(1);
    const int d = p.w_q->value.dim(1);
    if (p.w_q->value.dim(0) != c)
        throw ConfigError("cross_attention: query projection expects width " +
                          std::to_string(p.w_q->value.dim(0)) + ", tokens have " +
                          std::to_string(c));
    if (p.w_k->value.dim(0) != d_ctx || p.w_v->value.dim(0) != d_ctx)
        throw ConfigError("cross_attention: context width mismatch");
    if (p.w_k->value.dim(1) != d || p.w_v->value.dim(1) != d)
        throw ConfigError("cross_attention: inconsistent attention dim");
    if (p.w_out->value.dim(0) != d || p.w_out->value.dim(1) != c)
        throw ConfigError("cross_attention: output projection shape mismatch");
    if (heads < 1 || d % heads != 0)
        throw ConfigError("cross_attention: heads must divide attention dim");
}

}  // namespace

Var cross_attention(Tape& t, Var x_normed, Var ctx, const BranchParams& p, int heads,
                    const Tensor* logit_bias) {
    const Tensor& xv = t.val(x_normed);
    const Tensor& cv = t.val(ctx);
    if (xv.rank() != 2 || cv.rank() != 2)
        throw ConfigError("cross_attention: token matrices required");
    check_branch_dims(xv, cv, p, heads);
    if (logit_bias && logit_bias->numel() != cv.dim(0))
        throw ConfigError("cross_attention: logit bias length mismatch");

    Var q = t.matmul(x_normed, t.param(*p.w_q));
    Var k = t.matmul(ctx, t.param(*p.w_k));
    Var v = t.matmul(ctx, t.param(*p.w_v));
    const int d = p.w_q->value.dim(1);
    const int dh = d / heads;

    Var bias_var;
    if (logit_bias) {
        Tensor b({1, cv.dim(0)});
        std::copy(logit_bias->data.begin(), logit_bias->data.end(), b.data.begin());
        b.shape = {cv.dim(0)};
        bias_var = t.constant(std::move(b));
    }

    std::vector<Var> outs;
    for (int hidx = 0; hidx < heads; ++hidx) {
        Var qh = heads == 1 ? q : t.slice_cols(q, hidx * dh, (hidx + 1) * dh);
        Var kh = heads == 1 ? k : t.slice_cols(k, hidx * dh, (hidx + 1) * dh);
        Var vh = heads == 1 ? v : t.slice_cols(v, hidx * dh, (hidx + 1) * dh);
        Var scores = t.scale(t.matmul(qh, kh, false, true), 1.0 / std::sqrt(double(dh)));
        if (logit_bias) scores = t.add_row_vec(scores, bias_var);
        Var attnw = t.softmax_rows(scores);
        outs.push_back(t.matmul(attnw, vh));
    }
    Var o = heads == 1 ? outs[0] : t.concat_cols(outs);
    return t.add_row_vec(t.matmul(o, t.param(*p.w_out)), t.param(*p.b_out));
}

Var std_norm(Tape& t, Var y_a, Var y_t, const StdNormOptions& opt, bool* out_degenerate) {
    bool degenerate = false;
    Var out = t.std_norm(y_a, y_t, opt.floor, opt.detach_stats, &degenerate);
    if (degenerate)
        std::fprintf(stderr,
                     "[adgen] degenerate appearance branch: std below %.3g, passing through\n",
                     opt.floor);
    if (out_degenerate) *out_degenerate = degenerate;
    return out;
}

Var combine_branches(Tape& t, Var y_t, Var y_p, Var y_a_normed, double alpha) {
    return t.add(t.add(y_t, y_p), t.scale(y_a_normed, alpha));
}

Tensor combine_branches(const Tensor& y_t, const Tensor& y_p, const Tensor& y_a_normed,
                        double alpha) {
    if (!y_t.same_shape(y_p) || !y_t.same_shape(y_a_normed))
        throw InputError("combine_branches: shape mismatch");
    Tensor out = y_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] += y_p.data[i] + alpha * y_a_normed.data[i];
    return out;
}

Var multi_branch_layer(Tape& t, Var x, Var tokens_text, Var tokens_pose, Var tokens_appearance,
                       double alpha, const BranchFlags& flags, const MultiBranchParams& p,
                       LayerProbe* probe) {
    if (flags.text && !tokens_text.valid())
        throw InputError("multi_branch_layer: text branch enabled without tokens");
    if (flags.pose && !tokens_pose.valid())
        throw InputError("multi_branch_layer: pose branch enabled without tokens");
    if (flags.appearance && !tokens_appearance.valid())
        throw InputError("multi_branch_layer: appearance branch enabled without tokens");
    if (alpha < 0.0 || alpha > 1.0)
        throw InputError("multi_branch_layer: alpha outside [0,1]");
    if (probe) {
        probe->std_text = probe->std_pose = 0.0;
        probe->std_appearance_raw = probe->std_appearance_post = 0.0;
        probe->alpha = alpha;
        probe->degenerate = false;
    }
    if (!flags.text && !flags.pose && !flags.appearance) return x;

    Var acc;
    auto accumulate = [&](Var r) { acc = acc.valid() ? t.add(acc, r) : r; };

    Var y_text;  // STD-Norm target; valid only when the text branch runs
    if (flags.text) {
        Var xn = t.layer_norm(x, t.param(*p.text.ln_gamma), t.param(*p.text.ln_beta));
        y_text = cross_attention(t, xn, tokens_text, p.text, p.heads);
        if (probe) probe->std_text = std_all(t.val(y_text));
        accumulate(y_text);
    }
    if (flags.pose) {
        Var xn = t.layer_norm(x, t.param(*p.pose.ln_gamma), t.param(*p.pose.ln_beta));
        Var y = cross_attention(t, xn, tokens_pose, p.pose, p.heads);
        if (probe) probe->std_pose = std_all(t.val(y));
        accumulate(y);
    }
    if (flags.appearance) {
        Var xn = t.layer_norm(x, t.param(*p.appearance.ln_gamma), t.param(*p.appearance.ln_beta));
        Var y = cross_attention(t, xn, tokens_appearance, p.appearance, p.heads);
        if (probe) probe->std_appearance_raw = std_all(t.val(y));
        Var y_post = y;
        if (p.std_norm.enabled && flags.text) {
            bool degen = false;
            y_post = std_norm(t, y, y_text, p.std_norm, &degen);
            if (probe) probe->degenerate = degen;
        }
        if (probe) probe->std_appearance_post = std_all(t.val(y_post));
        accumulate(t.scale(y_post, alpha));
    }
    return t.add(x, acc);
}

Var project_visual_tokens(Tape& t, Var features, const ad::Parameter& proj) {
    const Tensor& f = t.val(features);
    if (f.rank() != 2) throw ConfigError("project_visual_tokens: token matrix required");
    if (!all_finite(f)) throw InputError("project_visual_tokens: non-finite features");
    if (proj.value.rank() != 2 || proj.value.dim(0) != f.dim(1))
        throw ConfigError("project_visual_tokens: projection shape mismatch (" +
                          proj.value.shape_str() + " vs features " + f.shape_str() + ")");
    return t.matmul(features, t.param(proj));
}

BranchParams create_branch_params(ad::ParamStore& store, const std::string& prefix, int c,
                                  int d_ctx, int d, Rng& rng) {
    auto xavier = [&rng](Tensor& w, int fan_in, int fan_out) {
        const double lim = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w.data) v = rng.uniform(-lim, lim);
    };
    BranchParams p;
    ad::Parameter& lg = store.create(prefix + ".ln.gamma", {c});
    std::fill(lg.value.data.begin(), lg.value.data.end(), 1.0);
    p.ln_gamma = &lg;
    p.ln_beta = &store.create(prefix + ".ln.beta", {c});
    ad::Parameter& wq = store.create(prefix + ".wq", {c, d});
    xavier(wq.value, c, d);
    p.w_q = &wq;
    ad::Parameter& wk = store.create(prefix + ".wk", {d_ctx, d});
    xavier(wk.value, d_ctx, d);
    p.w_k = &wk;
    ad::Parameter& wv = store.create(prefix + ".wv", {d_ctx, d});
    xavier(wv.value, d_ctx, d);
    p.w_v = &wv;
    ad::Parameter& wo = store.create(prefix + ".wout", {d, c});
    xavier(wo.value, d, c);
    p.w_out = &wo;
    p.b_out = &store.create(prefix + ".bout", {c});
    return p;
}

}  // namespace adgen::attn
