#include "adgen/denoiser.hpp"

#include <cmath>

#include "adgen/errors.hpp"
#include "adgen/rng.hpp"

namespace adgen {

using ad::Parameter;
using ad::Tape;
using ad::Var;

void DenoiserConfig::validate() const {
    if (channels.empty()) throw ConfigError("denoiser: channels must be non-empty");
    const int L = levels();
    if (image_size < (1 << L) || image_size % (1 << L) != 0)
        throw ConfigError("denoiser: image_size must be divisible by 2^levels");
    for (int c : channels)
        if (c <= 0 || c % groups != 0)
            throw ConfigError("denoiser: every channel count must be a positive multiple of groups");
    for (int r : attn_resolutions) {
        bool found = false;
        for (int i = 0; i <= L; ++i)
            if (image_size >> i == r) found = true;
        if (!found)
            throw ConfigError("denoiser: attention resolution " + std::to_string(r) +
                              " does not occur in the level set");
    }
    for (size_t i = 0; i < channels.size(); ++i) {
        const int r = image_size >> i;
        for (int ar : attn_resolutions)
            if (ar == r && channels[i] % heads != 0)
                throw ConfigError("denoiser: heads must divide attention channels");
    }
    if (d_ctx <= 0 || temb_dim <= 0 || temb_dim % 2 != 0)
        throw ConfigError("denoiser: bad context/time dims");
    if (vocab_size < 2 || caption_len < 1) throw ConfigError("denoiser: bad text config");
    if (patch_grid < 1 || d_enc <= 0 || vis_channels <= 0)
        throw ConfigError("denoiser: bad visual encoder config");
    if (enc_kernel != 1 && enc_kernel != 3)
        throw ConfigError("denoiser: enc_kernel must be 1 or 3");
    const int vis_final = enc_kernel == 1 ? vis_input_size : vis_input_size / 4;
    if (vis_final < patch_grid)
        throw ConfigError("denoiser: patch grid exceeds encoder feature map");
    if (heads < 1) throw ConfigError("denoiser: heads must be positive");
}

namespace {

Tensor sinusoidal_embedding(int t, int dim) {
    Tensor e({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e.data[static_cast<size_t>(i)] = std::sin(t * freq);
        e.data[static_cast<size_t>(half + i)] = std::cos(t * freq);
    }
    return e;
}

void he_init(Tensor& w, int fan_in, Rng& rng) {
    const double s = std::sqrt(2.0 / fan_in);
    for (double& v : w.data) v = rng.normal() * s;
}

void xavier_init(Tensor& w, int fan_in, int fan_out, Rng& rng) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-lim, lim);
}

}  // namespace

Denoiser::ConvLayer Denoiser::make_conv(const std::string& prefix, int in_ch, int out_ch, int k,
                                        Rng& rng, bool zero_init) {
    ConvLayer c;
    Parameter& w = params_.create(prefix + ".w", {out_ch, in_ch, k, k});
    if (!zero_init) he_init(w.value, in_ch * k * k, rng);
    c.w = &w;
    c.b = &params_.create(prefix + ".b", {out_ch});
    return c;
}

Denoiser::ResBlock Denoiser::make_res_block(const std::string& prefix, int in_ch, int out_ch,
                                            Rng& rng) {
    ResBlock r;
    r.in_ch = in_ch;
    r.out_ch = out_ch;
    Parameter& g1 = params_.create(prefix + ".gn1.gamma", {in_ch});
    std::fill(g1.value.data.begin(), g1.value.data.end(), 1.0);
    r.gn1_g = &g1;
    r.gn1_b = &params_.create(prefix + ".gn1.beta", {in_ch});
    Parameter& c1 = params_.create(prefix + ".conv1.w", {out_ch, in_ch, 3, 3});
    he_init(c1.value, in_ch * 9, rng);
    r.conv1_w = &c1;
    r.conv1_b = &params_.create(prefix + ".conv1.b", {out_ch});
    Parameter& tw = params_.create(prefix + ".temb.w", {cfg_.temb_dim, out_ch});
    xavier_init(tw.value, cfg_.temb_dim, out_ch, rng);
    r.temb_w = &tw;
    r.temb_b = &params_.create(prefix + ".temb.b", {out_ch});
    Parameter& g2 = params_.create(prefix + ".gn2.gamma", {out_ch});
    std::fill(g2.value.data.begin(), g2.value.data.end(), 1.0);
    r.gn2_g = &g2;
    r.gn2_b = &params_.create(prefix + ".gn2.beta", {out_ch});
    Parameter& c2 = params_.create(prefix + ".conv2.w", {out_ch, out_ch, 3, 3});
    he_init(c2.value, out_ch * 9, rng);
    r.conv2_w = &c2;
    r.conv2_b = &params_.create(prefix + ".conv2.b", {out_ch});
    if (in_ch != out_ch) {
        Parameter& sw = params_.create(prefix + ".skip.w", {out_ch, in_ch, 1, 1});
        he_init(sw.value, in_ch, rng);
        r.skip_w = &sw;
        r.skip_b = &params_.create(prefix + ".skip.b", {out_ch});
    }
    return r;
}

Denoiser::VisEncoder Denoiser::make_vis_encoder(const std::string& prefix, Rng& rng) {
    VisEncoder e;
    const int k = cfg_.enc_kernel;
    e.conv1 = make_conv(prefix + ".conv1", 3, cfg_.vis_channels, k, rng);
    e.conv2 = make_conv(prefix + ".conv2", cfg_.vis_channels, cfg_.vis_channels, k, rng);
    e.proj = make_conv(prefix + ".proj", cfg_.vis_channels, cfg_.d_enc, 1, rng);
    return e;
}

Denoiser::Branch Denoiser::make_unet_encoder(const std::string& prefix, bool multibranch,
                                             Rng& rng) {
    Branch br;
    const int L = cfg_.levels();
    br.stem = make_conv(prefix + ".stem", 3, cfg_.channels[0], 3, rng);
    for (int i = 0; i < L; ++i) {
        const int c = cfg_.channels[static_cast<size_t>(i)];
        br.level_res.push_back(
            make_res_block(prefix + ".enc" + std::to_string(i) + ".res", c, c, rng));
        const int res = cfg_.image_size >> i;
        bool attn_here = false;
        for (int r : cfg_.attn_resolutions) attn_here = attn_here || (r == res);
        br.has_attn.push_back(attn_here);
        attn::MultiBranchParams mb;
        mb.heads = cfg_.heads;
        mb.std_norm.enabled = cfg_.std_norm_enabled;
        mb.std_norm.detach_stats = cfg_.std_norm_detach;
        mb.std_norm.floor = cfg_.std_norm_floor;
        if (attn_here) {
            const std::string ap = prefix + ".enc" + std::to_string(i) + ".attn";
            mb.text = attn::create_branch_params(params_, ap + ".text", c, cfg_.d_ctx, c, rng);
            if (multibranch) {
                mb.pose = attn::create_branch_params(params_, ap + ".pose", c, cfg_.d_ctx, c, rng);
                mb.appearance =
                    attn::create_branch_params(params_, ap + ".appearance", c, cfg_.d_ctx, c, rng);
            }
        }
        br.level_attn.push_back(mb);
        const int out = i < L - 1 ? cfg_.channels[static_cast<size_t>(i + 1)]
                                  : cfg_.channels[static_cast<size_t>(L - 1)];
        br.downs.push_back(make_conv(prefix + ".down" + std::to_string(i), c, out, 3, rng));
    }
    const int cl = cfg_.channels.back();
    br.mid_res1 = make_res_block(prefix + ".mid.res1", cl, cl, rng);
    br.mid_res2 = make_res_block(prefix + ".mid.res2", cl, cl, rng);
    const int mid_res = cfg_.image_size >> L;
    for (int r : cfg_.attn_resolutions) br.mid_has_attn = br.mid_has_attn || (r == mid_res);
    br.mid_attn.heads = cfg_.heads;
    br.mid_attn.std_norm.enabled = cfg_.std_norm_enabled;
    br.mid_attn.std_norm.detach_stats = cfg_.std_norm_detach;
    br.mid_attn.std_norm.floor = cfg_.std_norm_floor;
    if (br.mid_has_attn) {
        const bool mid_mb = multibranch && cfg_.control_middle_multibranch;
        br.mid_attn.text =
            attn::create_branch_params(params_, prefix + ".mid.attn.text", cl, cfg_.d_ctx, cl, rng);
        if (mid_mb) {
            br.mid_attn.pose = attn::create_branch_params(params_, prefix + ".mid.attn.pose", cl,
                                                          cfg_.d_ctx, cl, rng);
            br.mid_attn.appearance = attn::create_branch_params(
                params_, prefix + ".mid.attn.appearance", cl, cfg_.d_ctx, cl, rng);
        }
    }
    return br;
}

Denoiser::Denoiser(DenoiserConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(init_seed);
    const int L = cfg_.levels();

    Parameter& tw1 = params_.create("temb.w1", {cfg_.temb_dim, cfg_.temb_dim});
    xavier_init(tw1.value, cfg_.temb_dim, cfg_.temb_dim, rng);
    temb_w1_ = &tw1;
    temb_b1_ = &params_.create("temb.b1", {cfg_.temb_dim});
    Parameter& tw2 = params_.create("temb.w2", {cfg_.temb_dim, cfg_.temb_dim});
    xavier_init(tw2.value, cfg_.temb_dim, cfg_.temb_dim, rng);
    temb_w2_ = &tw2;
    temb_b2_ = &params_.create("temb.b2", {cfg_.temb_dim});

    Parameter& te = params_.create("text.embed", {cfg_.vocab_size, cfg_.d_ctx});
    for (double& v : te.value.data) v = rng.normal() * 0.02;
    text_embed_ = &te;
    Parameter& tp = params_.create("text.pos", {cfg_.caption_len, cfg_.d_ctx});
    for (double& v : tp.value.data) v = rng.normal() * 0.02;
    text_pos_ = &tp;

    vis_shared_ = make_vis_encoder("vis.shared", rng);
    if (cfg_.separate_visual_encoders)
        vis_appearance_ = make_vis_encoder("vis.appearance", rng);
    const int tokens = 1 + cfg_.patch_grid * cfg_.patch_grid;
    Parameter& vp = params_.create("vis.pos", {tokens, cfg_.d_enc});
    for (double& v : vp.value.data) v = rng.normal() * 0.02;
    vis_pos_ = &vp;
    // scaled down so visual tokens start at the same magnitude as the text
    // embeddings; without this the appearance branch dominates from step 0
    Parameter& pp = params_.create("vis.proj_pose", {cfg_.d_enc, cfg_.d_ctx});
    xavier_init(pp.value, cfg_.d_enc, cfg_.d_ctx, rng);
    for (double& v : pp.value.data) v *= 0.1;
    proj_pose_ = &pp;
    Parameter& pa = params_.create("vis.proj_appearance", {cfg_.d_enc, cfg_.d_ctx});
    xavier_init(pa.value, cfg_.d_enc, cfg_.d_ctx, rng);
    for (double& v : pa.value.data) v *= 0.1;
    proj_appearance_ = &pa;

    base_ = make_unet_encoder("base", /*multibranch=*/false, rng);
    ctrl_ = make_unet_encoder("ctrl", /*multibranch=*/true, rng);
    cond_stem1_ = make_conv("ctrl.cond_stem.conv1", 4, cfg_.channels[0], 3, rng);
    cond_stem2_ = make_conv("ctrl.cond_stem.conv2", cfg_.channels[0], cfg_.channels[0], 3, rng);

    // one zero-initialized 1x1 injection per encoder skip, plus the middle
    std::vector<int> skip_ch;
    skip_ch.push_back(cfg_.channels[0]);  // stem
    for (int i = 0; i < L; ++i) {
        skip_ch.push_back(cfg_.channels[static_cast<size_t>(i)]);  // level res
        skip_ch.push_back(i < L - 1 ? cfg_.channels[static_cast<size_t>(i + 1)]
                                    : cfg_.channels.back());  // down
    }
    for (size_t i = 0; i < skip_ch.size(); ++i)
        inject_skips_.push_back(make_conv("inject.skip" + std::to_string(i), skip_ch[i],
                                          skip_ch[i], 1, rng, /*zero_init=*/true));
    inject_mid_ =
        make_conv("inject.mid", cfg_.channels.back(), cfg_.channels.back(), 1, rng, true);

    // decoder: one res block per skip, one upsample conv per level
    const int cl = cfg_.channels.back();
    int idx = 0;
    dec_res_.push_back(make_res_block("dec.res" + std::to_string(idx++), 2 * cl, cl, rng));
    dec_ups_.push_back(make_conv("dec.up0", cl, cl, 3, rng));
    for (int i = L - 1; i >= 0; --i) {
        const int c = cfg_.channels[static_cast<size_t>(i)];
        dec_res_.push_back(make_res_block("dec.res" + std::to_string(idx++), 2 * c, c, rng));
        dec_res_.push_back(make_res_block("dec.res" + std::to_string(idx++), 2 * c, c, rng));
        if (i >= 1)
            dec_ups_.push_back(make_conv("dec.up" + std::to_string(L - i), c,
                                         cfg_.channels[static_cast<size_t>(i - 1)], 3, rng));
    }

    Parameter& hg = params_.create("head.gn.gamma", {cfg_.channels[0]});
    std::fill(hg.value.data.begin(), hg.value.data.end(), 1.0);
    head_gn_g_ = &hg;
    head_gn_b_ = &params_.create("head.gn.beta", {cfg_.channels[0]});
    // small but nonzero: a zero head would block every upstream gradient at
    // step 0 and make the zero-init control-branch check vacuous
    head_conv_ = make_conv("head.conv", cfg_.channels[0], 3, 3, rng);
    for (double& v : params_.find("head.conv.w")->value.data) v *= 0.2;
}

std::vector<int> Denoiser::padded_caption(const std::vector<int>& ids) const {
    if (static_cast<int>(ids.size()) > cfg_.caption_len)
        throw InputError("caption longer than caption_len");
    std::vector<int> out(static_cast<size_t>(cfg_.caption_len), 0);
    std::copy(ids.begin(), ids.end(), out.begin());
    return out;
}

std::vector<int> Denoiser::empty_caption() const {
    return std::vector<int>(static_cast<size_t>(cfg_.caption_len), 0);
}

Var Denoiser::encode_text(Tape& t, const std::vector<int>& ids) const {
    const std::vector<int> padded = padded_caption(ids);
    Var e = t.embedding(*text_embed_, padded);
    return t.add(e, t.param(*text_pos_));
}

Tensor Denoiser::encode_text_value(const std::vector<int>& ids) const {
    Tape t;
    return t.val(encode_text(t, ids));
}

Var Denoiser::encode_visual(Tape& t, Var image, bool appearance_encoder) const {
    const Tensor& img = t.val(image);
    if (img.rank() != 3 || img.dim(0) != 3)
        throw InputError("encode_visual: 3-channel image required");
    if (!all_finite(img)) throw InputError("encode_visual: non-finite pixels");
    const VisEncoder& e = (cfg_.separate_visual_encoders && appearance_encoder)
                              ? vis_appearance_
                              : vis_shared_;
    const int k = cfg_.enc_kernel;
    const int stride = k == 1 ? 1 : 2;
    const int pad = k == 1 ? 0 : 1;
    Var h = t.silu(t.conv2d(image, t.param(*e.conv1.w), t.param(*e.conv1.b), stride, pad));
    h = t.silu(t.conv2d(h, t.param(*e.conv2.w), t.param(*e.conv2.b), stride, pad));
    h = t.conv2d(h, t.param(*e.proj.w), t.param(*e.proj.b), 1, 0);
    h = t.avg_pool_cells(h, cfg_.patch_grid, cfg_.patch_grid);
    Var patches = t.chw_to_tokens(h);      // P x d_enc
    Var cls = t.mean_rows(patches);        // 1 x d_enc
    return t.concat_rows(cls, patches);    // (1+P) x d_enc
}

Tensor Denoiser::encode_visual_value(const Tensor& image, bool appearance_encoder) const {
    Tape t;
    return t.val(encode_visual(t, t.constant(image), appearance_encoder));
}

Var Denoiser::apply_res_block(Tape& t, const ResBlock& rb, Var h, Var temb) const {
    Var y = t.group_norm(h, t.param(*rb.gn1_g), t.param(*rb.gn1_b), cfg_.groups);
    y = t.conv2d(t.silu(y), t.param(*rb.conv1_w), t.param(*rb.conv1_b), 1, 1);
    Var tb = t.add_row_vec(t.matmul(temb, t.param(*rb.temb_w)), t.param(*rb.temb_b));
    y = t.add_channel_bias(y, tb);
    y = t.group_norm(y, t.param(*rb.gn2_g), t.param(*rb.gn2_b), cfg_.groups);
    y = t.conv2d(t.silu(y), t.param(*rb.conv2_w), t.param(*rb.conv2_b), 1, 1);
    Var skip = h;
    if (rb.skip_w) skip = t.conv2d(h, t.param(*rb.skip_w), t.param(*rb.skip_b), 1, 0);
    return t.add(y, skip);
}

Var Denoiser::apply_attn(Tape& t, const attn::MultiBranchParams& mb, Var h, int hw, Var t_text,
                         Var t_pose, Var t_app, bool full, double alpha, bool appearance_on,
                         DenoiseProbe* probe, const std::string& name) const {
    Var tokens = t.chw_to_tokens(h);
    attn::BranchFlags flags;
    flags.text = true;
    flags.pose = full && t_pose.valid();
    flags.appearance = full && appearance_on && t_app.valid();
    attn::LayerProbe lp;
    Var out = attn::multi_branch_layer(t, tokens, t_text, t_pose, t_app,
                                       flags.appearance ? alpha : 0.0, flags, mb,
                                       probe ? &lp : nullptr);
    if (probe) {
        lp.layer = name;
        probe->push_back(lp);
    }
    return t.tokens_to_chw(out, hw, hw);
}

Var Denoiser::run_encoder(Tape& t, const Branch& br, Var h0, Var temb, Var t_text, Var t_pose,
                          Var t_app, bool full, double alpha, bool appearance_on,
                          DenoiseProbe* probe, const std::string& name,
                          std::vector<Var>& skips) const {
    const int L = cfg_.levels();
    Var h = h0;
    skips.push_back(h);
    for (int i = 0; i < L; ++i) {
        h = apply_res_block(t, br.level_res[static_cast<size_t>(i)], h, temb);
        if (br.has_attn[static_cast<size_t>(i)])
            h = apply_attn(t, br.level_attn[static_cast<size_t>(i)], h, cfg_.image_size >> i,
                           t_text, t_pose, t_app, full, alpha, appearance_on, probe,
                           name + ".enc" + std::to_string(i) + ".attn");
        skips.push_back(h);
        h = t.conv2d(h, t.param(*br.downs[static_cast<size_t>(i)].w),
                     t.param(*br.downs[static_cast<size_t>(i)].b), 2, 1);
        skips.push_back(h);
    }
    h = apply_res_block(t, br.mid_res1, h, temb);
    if (br.mid_has_attn)
        h = apply_attn(t, br.mid_attn, h, cfg_.image_size >> L, t_text, t_pose, t_app,
                       full && cfg_.control_middle_multibranch, alpha, appearance_on, probe,
                       name + ".mid.attn");
    h = apply_res_block(t, br.mid_res2, h, temb);
    return h;
}

void Denoiser::validate_bundle(const ConditionBundle& b) const {
    const int H = cfg_.image_size;
    if (b.cond_image.rank() != 3 || b.cond_image.dim(0) != 4 || b.cond_image.dim(1) != H ||
        b.cond_image.dim(2) != H)
        throw InputError("bundle: conditioning image must be 4x" + std::to_string(H) + "x" +
                         std::to_string(H));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < H; ++x) {
            const double v = b.cond_image.at(3, y, x);
            if (v != 0.0 && v != 1.0)
                throw InputError("bundle: scale map channel must be binary");
        }
    const int V = cfg_.vis_input_size;
    if (b.pose_image.rank() != 3 || b.pose_image.dim(0) != 3 || b.pose_image.dim(1) != V ||
        b.pose_image.dim(2) != V)
        throw InputError("bundle: pose image must be 3x" + std::to_string(V) + "x" +
                         std::to_string(V));
    if (b.appearance_enabled &&
        (b.appearance_image.rank() != 3 || b.appearance_image.dim(0) != 3 ||
         b.appearance_image.dim(1) != V || b.appearance_image.dim(2) != V))
        throw InputError("bundle: appearance image must be 3x" + std::to_string(V) + "x" +
                         std::to_string(V));
    if (b.alpha < 0.0 || b.alpha > 1.0) throw InputError("bundle: alpha outside [0,1]");
}

Var Denoiser::build_impl(Tape& t, const Tensor& x_t, int timestep, const ConditionBundle& b,
                         bool with_control, DenoiseProbe* probe) const {
    if (x_t.rank() != 3 || x_t.dim(0) != 3 || x_t.dim(1) != cfg_.image_size ||
        x_t.dim(2) != cfg_.image_size)
        throw InputError("denoise: input must be 3x" + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.image_size));
    if (timestep < 0) throw InputError("denoise: negative timestep");

    Var temb = t.constant(sinusoidal_embedding(timestep, cfg_.temb_dim));
    temb = t.add_row_vec(t.matmul(temb, t.param(*temb_w1_)), t.param(*temb_b1_));
    temb = t.add_row_vec(t.matmul(t.silu(temb), t.param(*temb_w2_)), t.param(*temb_b2_));

    Var t_text = encode_text(t, b.caption_tokens);

    Var x = t.constant(x_t);
    Var t_pose, t_app;
    if (with_control) {
        Var pf = encode_visual(t, t.constant(b.pose_image), false);
        t_pose = attn::project_visual_tokens(t, t.add(pf, t.param(*vis_pos_)), *proj_pose_);
        if (b.appearance_enabled) {
            Var af = encode_visual(t, t.constant(b.appearance_image), true);
            t_app =
                attn::project_visual_tokens(t, t.add(af, t.param(*vis_pos_)), *proj_appearance_);
        }
    }

    // base encoder
    std::vector<Var> base_skips;
    Var h0 = t.conv2d(x, t.param(*base_.stem.w), t.param(*base_.stem.b), 1, 1);
    Var base_mid = run_encoder(t, base_, h0, temb, t_text, {}, {}, /*full=*/false, 0.0, false,
                               nullptr, "base", base_skips);

    Var mid = base_mid;
    std::vector<Var> skips = base_skips;
    if (with_control) {
        validate_bundle(b);
        Var c0 = t.conv2d(x, t.param(*ctrl_.stem.w), t.param(*ctrl_.stem.b), 1, 1);
        Var cc = t.conv2d(t.constant(b.cond_image), t.param(*cond_stem1_.w),
                          t.param(*cond_stem1_.b), 1, 1);
        cc = t.conv2d(t.silu(cc), t.param(*cond_stem2_.w), t.param(*cond_stem2_.b), 1, 1);
        std::vector<Var> ctrl_skips;
        Var ctrl_mid = run_encoder(t, ctrl_, t.add(c0, cc), temb, t_text, t_pose, t_app,
                                   /*full=*/true, b.alpha, b.appearance_enabled, probe, "ctrl",
                                   ctrl_skips);
        for (size_t i = 0; i < skips.size(); ++i) {
            Var inj = t.conv2d(ctrl_skips[i], t.param(*inject_skips_[i].w),
                               t.param(*inject_skips_[i].b), 1, 0);
            skips[i] = t.add(skips[i], inj);
        }
        mid = t.add(mid, t.conv2d(ctrl_mid, t.param(*inject_mid_.w), t.param(*inject_mid_.b), 1, 0));
    }

    // decoder: consume skips from the deepest level back to the stem
    Var h = mid;
    size_t dec_i = 0, up_i = 0;
    auto pop = [&skips]() {
        Var v = skips.back();
        skips.pop_back();
        return v;
    };
    h = apply_res_block(t, dec_res_[dec_i++], t.concat_channels(h, pop()), temb);
    h = t.upsample_nearest_2x(h);
    h = t.conv2d(h, t.param(*dec_ups_[up_i].w), t.param(*dec_ups_[up_i].b), 1, 1);
    up_i++;
    for (int i = cfg_.levels() - 1; i >= 0; --i) {
        h = apply_res_block(t, dec_res_[dec_i++], t.concat_channels(h, pop()), temb);
        h = apply_res_block(t, dec_res_[dec_i++], t.concat_channels(h, pop()), temb);
        if (i >= 1) {
            h = t.upsample_nearest_2x(h);
            h = t.conv2d(h, t.param(*dec_ups_[up_i].w), t.param(*dec_ups_[up_i].b), 1, 1);
            up_i++;
        }
    }

    h = t.group_norm(h, t.param(*head_gn_g_), t.param(*head_gn_b_), cfg_.groups);
    return t.conv2d(t.silu(h), t.param(*head_conv_.w), t.param(*head_conv_.b), 1, 1);
}

Var Denoiser::build_eps(Tape& t, const Tensor& x_t, int timestep, const ConditionBundle& b,
                        DenoiseProbe* probe) const {
    return build_impl(t, x_t, timestep, b, /*with_control=*/true, probe);
}

Tensor Denoiser::denoise(const Tensor& x_t, int timestep, const ConditionBundle& b,
                         DenoiseProbe* probe) const {
    Tape t;
    return t.val(build_eps(t, x_t, timestep, b, probe));
}

Tensor Denoiser::denoise_base_only(const Tensor& x_t, int timestep,
                                   const std::vector<int>& caption_tokens) const {
    Tape t;
    ConditionBundle b;
    b.caption_tokens = caption_tokens;
    return t.val(build_impl(t, x_t, timestep, b, /*with_control=*/false, nullptr));
}

}  // namespace adgen
