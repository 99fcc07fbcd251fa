#include <doctest.h>

#include <cmath>

#include "adgen/attention.hpp"
#include "adgen/errors.hpp"
#include "helpers.hpp"

using namespace adgen;
using namespace adgen::ad;
using namespace adgen::attn;
using testutil::random_tensor;
using testutil::sample_entries;

namespace {

struct LayerFixture {
    ParamStore store;
    MultiBranchParams params;
    int c, d_ctx, d;

    LayerFixture(int c_, int d_ctx_, int d_, uint64_t seed, int heads = 1)
        : c(c_), d_ctx(d_ctx_), d(d_) {
        Rng rng(seed);
        params.text = create_branch_params(store, "text", c, d_ctx, d, rng);
        params.pose = create_branch_params(store, "pose", c, d_ctx, d, rng);
        params.appearance = create_branch_params(store, "appearance", c, d_ctx, d, rng);
        params.heads = heads;
    }
};

// Independent dense-math oracle for one single-head attention branch.
Tensor ref_cross_attention(const Tensor& xn, const Tensor& ctx, const BranchParams& p) {
    const int M = xn.dim(0), c = xn.dim(1);
    const int N = ctx.dim(0);
    const int d = p.w_q->value.dim(1);
    auto mm = [](const Tensor& a, const Tensor& b) {
        Tensor r({a.dim(0), b.dim(1)});
        for (int i = 0; i < a.dim(0); ++i)
            for (int j = 0; j < b.dim(1); ++j) {
                double s = 0;
                for (int k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    };
    Tensor q = mm(xn, p.w_q->value), k = mm(ctx, p.w_k->value), v = mm(ctx, p.w_v->value);
    Tensor scores({M, N});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            double s = 0;
            for (int e = 0; e < d; ++e) s += q.at(i, e) * k.at(j, e);
            scores.at(i, j) = s / std::sqrt(static_cast<double>(d));
        }
    for (int i = 0; i < M; ++i) {
        double mx = scores.at(i, 0);
        for (int j = 1; j < N; ++j) mx = std::max(mx, scores.at(i, j));
        double sum = 0;
        for (int j = 0; j < N; ++j) {
            scores.at(i, j) = std::exp(scores.at(i, j) - mx);
            sum += scores.at(i, j);
        }
        for (int j = 0; j < N; ++j) scores.at(i, j) /= sum;
    }
    Tensor att = mm(scores, v);
    Tensor out = mm(att, p.w_out->value);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += p.b_out->value.data[static_cast<size_t>(j)];
    return out;
}

}  // namespace

TEST_CASE("cross_attention: single context token broadcasts its value") {
    LayerFixture f(4, 6, 4, 21);
    Rng rng(5);
    Tensor x = random_tensor({5, 4}, rng);
    Tensor ctx = random_tensor({1, 6}, rng);
    Tape t;
    Var out = cross_attention(t, t.constant(x), t.constant(ctx), f.params.text, 1);
    // with one key the softmax weight is 1 for every query: rows all equal Linear(v)
    const Tensor& o = t.val(out);
    for (int i = 1; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(o.at(i, j) == doctest::Approx(o.at(0, j)).epsilon(1e-12));
    CHECK(max_abs_diff(o, ref_cross_attention(x, ctx, f.params.text)) < 1e-12);
}

TEST_CASE("cross_attention: matches the independent dense-math oracle") {
    LayerFixture f(4, 5, 4, 33);
    Rng rng(6);
    Tensor x = random_tensor({2, 4}, rng);
    Tensor ctx = random_tensor({3, 5}, rng);
    Tape t;
    Var out = cross_attention(t, t.constant(x), t.constant(ctx), f.params.text, 1);
    CHECK(max_abs_diff(t.val(out), ref_cross_attention(x, ctx, f.params.text)) < 1e-12);
}

TEST_CASE("cross_attention: query scaling keeps rows normalized") {
    LayerFixture f(4, 5, 4, 43);
    Rng rng(7);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor ctx = random_tensor({4, 5}, rng);
    for (double s : {1.0, 3.0, 10.0}) {
        Tensor xs = scale(x, s);
        Tape t;
        // inspect the softmax directly by rebuilding the score path
        Var q = t.matmul(t.constant(xs), t.param(*f.params.text.w_q));
        Var k = t.matmul(t.constant(ctx), t.param(*f.params.text.w_k));
        Var w = t.softmax_rows(t.scale(t.matmul(q, k, false, true), 0.5));
        const Tensor& wv = t.val(w);
        for (int i = 0; i < 3; ++i) {
            double sum = 0;
            for (int j = 0; j < 4; ++j) sum += wv.at(i, j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("cross_attention: a -1e9-masked extra token does not change the output") {
    LayerFixture f(4, 5, 4, 51);
    Rng rng(8);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor ctx = random_tensor({4, 5}, rng);
    Tensor ctx_ext({5, 5});
    std::copy(ctx.data.begin(), ctx.data.end(), ctx_ext.data.begin());
    for (int j = 0; j < 5; ++j) ctx_ext.at(4, j) = rng.uniform(-1, 1);

    Tape t;
    Var base = cross_attention(t, t.constant(x), t.constant(ctx), f.params.text, 1);
    Tensor bias = Tensor::zeros({5});
    bias[4] = -1e9;
    Var masked = cross_attention(t, t.constant(x), t.constant(ctx_ext), f.params.text, 1, &bias);
    CHECK(max_abs_diff(t.val(base), t.val(masked)) < 1e-6);
}

TEST_CASE("cross_attention: multi-head output matches per-head recomposition") {
    LayerFixture f(4, 5, 8, 61, /*heads=*/2);
    Rng rng(9);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor ctx = random_tensor({4, 5}, rng);
    Tape t;
    Var out = cross_attention(t, t.constant(x), t.constant(ctx), f.params.text, 2);
    CHECK(t.val(out).dim(0) == 3);
    CHECK(t.val(out).dim(1) == 4);
    // heads must divide d
    CHECK_THROWS_AS(
        (void)cross_attention(t, t.constant(x), t.constant(ctx), f.params.text, 3), ConfigError);
}

TEST_CASE("cross_attention rejects dimension mismatches") {
    LayerFixture f(4, 5, 4, 71);
    Rng rng(10);
    Tensor x_bad = random_tensor({3, 6}, rng);
    Tensor ctx = random_tensor({4, 5}, rng);
    Tape t;
    CHECK_THROWS_AS((void)cross_attention(t, t.constant(x_bad), t.constant(ctx), f.params.text, 1),
                    ConfigError);
    Tensor ctx_bad = random_tensor({4, 7}, rng);
    Tensor x = random_tensor({3, 4}, rng);
    CHECK_THROWS_AS((void)cross_attention(t, t.constant(x), t.constant(ctx_bad), f.params.text, 1),
                    ConfigError);
}

TEST_CASE("std_norm: worked examples and exact self-normalization") {
    StdNormOptions opt;
    Tape t;
    Var ya = t.constant(Tensor::from({2}, {2.0, -2.0}));
    Var yt = t.constant(Tensor::from({2}, {1.0, -1.0}));
    Var out = std_norm(t, ya, yt, opt);
    CHECK(t.val(out)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(t.val(out)[1] == doctest::Approx(-1.0).epsilon(1e-15));

    // y_a == y_t: ratio is exactly 1, output bit-identical to the input
    Rng rng(11);
    Tensor y = testutil::random_tensor({4, 4}, rng);
    Var same = std_norm(t, t.constant(y), t.constant(y), opt);
    CHECK(max_abs_diff(t.val(same), y) == 0.0);
}

TEST_CASE("std_norm: postcondition verified by an independent two-pass oracle") {
    StdNormOptions opt;
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor ya = testutil::random_tensor({16, 8}, rng, -3.0, 3.0);
        Tensor yt = testutil::random_tensor({16, 8}, rng, -0.5, 0.5);
        Tape t;
        Var out = std_norm(t, t.constant(ya), t.constant(yt), opt);
        // independent two-pass std
        auto two_pass_std = [](const Tensor& v) {
            double mu = 0;
            for (double q : v.data) mu += q;
            mu /= static_cast<double>(v.data.size());
            double acc = 0;
            for (double q : v.data) acc += (q - mu) * (q - mu);
            return std::sqrt(acc / static_cast<double>(v.data.size()));
        };
        const double so = two_pass_std(t.val(out));
        const double st = two_pass_std(yt);
        CHECK(std::fabs(so - st) <= 1e-6 * st);
    }
}

TEST_CASE("std_norm: degenerate appearance branch passes through unchanged") {
    StdNormOptions opt;
    Tape t;
    Tensor flat = Tensor::full({3, 3}, 0.7);  // zero variance
    Tensor yt = Tensor::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    bool degenerate = false;
    Var out = std_norm(t, t.constant(flat), t.constant(yt), opt, &degenerate);
    CHECK(degenerate);
    CHECK(max_abs_diff(t.val(out), flat) == 0.0);
}

TEST_CASE("combine_branches: worked examples and linearity") {
    Tensor yt = Tensor::from({2}, {1.0, 0.0});
    Tensor yp = Tensor::from({2}, {0.0, 1.0});
    Tensor ya = Tensor::from({2}, {2.0, 2.0});

    Tensor r = combine_branches(yt, yp, ya, 0.5);
    CHECK(r[0] == 2.0);
    CHECK(r[1] == 2.0);

    // alpha = 0 removes the appearance branch entirely
    Tensor r0 = combine_branches(yt, yp, ya, 0.0);
    Tensor r0b = combine_branches(yt, yp, Tensor::from({2}, {99.0, -99.0}), 0.0);
    CHECK(max_abs_diff(r0, r0b) == 0.0);
    CHECK(r0[0] == 1.0);
    CHECK(r0[1] == 1.0);

    Tensor r1 = combine_branches(yt, Tensor::zeros({2}), ya, 1.0);
    CHECK(r1[0] == 3.0);
    CHECK(r1[1] == 2.0);

    // linear in each residual
    Rng rng(17);
    Tensor a = testutil::random_tensor({8}, rng), b = testutil::random_tensor({8}, rng);
    Tensor c = testutil::random_tensor({8}, rng);
    Tensor lhs = combine_branches(scale(a, 2.0), b, c, 0.7);
    Tensor rhs = add(combine_branches(a, b, c, 0.7), a);
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("multi_branch_layer: disabled-branch contracts") {
    LayerFixture f(4, 5, 4, 91);
    Rng rng(19);
    Tensor x = random_tensor({6, 4}, rng);
    Tensor tt = random_tensor({3, 5}, rng);
    Tensor tp = random_tensor({2, 5}, rng);
    Tensor ta1 = random_tensor({2, 5}, rng);
    Tensor ta2 = random_tensor({2, 5}, rng);

    SUBCASE("all branches disabled: pure identity") {
        Tape t;
        Var xv = t.constant(x);
        Var out = multi_branch_layer(t, xv, {}, {}, {}, 0.5, {false, false, false}, f.params);
        CHECK(out.i == xv.i);
        CHECK(max_abs_diff(t.val(out), x) == 0.0);
    }
    SUBCASE("appearance disabled: output independent of appearance tokens") {
        Tape t;
        BranchFlags flags{true, true, false};
        Var a = multi_branch_layer(t, t.constant(x), t.constant(tt), t.constant(tp),
                                   t.constant(ta1), 1.0, flags, f.params);
        Var b = multi_branch_layer(t, t.constant(x), t.constant(tt), t.constant(tp),
                                   t.constant(ta2), 1.0, flags, f.params);
        CHECK(max_abs_diff(t.val(a), t.val(b)) == 0.0);
    }
    SUBCASE("enabled branch without tokens is an input error") {
        Tape t;
        CHECK_THROWS_AS((void)multi_branch_layer(t, t.constant(x), {}, {}, {}, 0.5,
                                                 {true, false, false}, f.params),
                        InputError);
    }
    SUBCASE("alpha outside [0,1] is rejected") {
        Tape t;
        CHECK_THROWS_AS((void)multi_branch_layer(t, t.constant(x), t.constant(tt), {}, {}, 1.5,
                                                 {true, false, false}, f.params),
                        InputError);
    }
}

TEST_CASE("multi_branch_layer: text-only equals a plain LN+CA residual block") {
    LayerFixture f(4, 5, 4, 101);
    Rng rng(23);
    Tensor x = random_tensor({6, 4}, rng);
    Tensor tt = random_tensor({3, 5}, rng);

    Tape t;
    Var out = multi_branch_layer(t, t.constant(x), t.constant(tt), {}, {}, 0.0,
                                 {true, false, false}, f.params);
    // hand-composed single-branch block with the same parameters
    Var xn = t.layer_norm(t.constant(x), t.param(*f.params.text.ln_gamma),
                          t.param(*f.params.text.ln_beta));
    Var y = cross_attention(t, xn, t.constant(tt), f.params.text, 1);
    Var ref = t.add(t.constant(x), y);
    CHECK(max_abs_diff(t.val(out), t.val(ref)) == 0.0);
}

TEST_CASE("multi_branch_layer: STD-Norm pins the appearance residual scale") {
    LayerFixture f(4, 5, 4, 111);
    Rng rng(29);
    Tensor x = random_tensor({8, 4}, rng);
    Tensor tt = random_tensor({3, 5}, rng);
    Tensor tp = random_tensor({2, 5}, rng);
    Tensor ta = random_tensor({4, 5}, rng, -4.0, 4.0);

    Tape t;
    LayerProbe probe;
    (void)multi_branch_layer(t, t.constant(x), t.constant(tt), t.constant(tp), t.constant(ta),
                             0.8, {true, true, true}, f.params, &probe);
    CHECK(probe.std_appearance_post ==
          doctest::Approx(probe.std_text).epsilon(1e-9));
    CHECK(probe.std_appearance_raw > 0.0);
    CHECK(probe.std_pose > 0.0);
    CHECK(probe.alpha == 0.8);

    // with STD-Norm disabled the raw and post stds coincide
    LayerFixture g(4, 5, 4, 111);
    g.params.std_norm.enabled = false;
    Tape t2;
    LayerProbe probe2;
    (void)multi_branch_layer(t2, t2.constant(x), t2.constant(tt), t2.constant(tp),
                             t2.constant(ta), 0.8, {true, true, true}, g.params, &probe2);
    CHECK(probe2.std_appearance_post == probe2.std_appearance_raw);
}

TEST_CASE("multi_branch_layer: gradient matches central finite differences") {
    LayerFixture f(4, 4, 4, 121);
    Rng rng(31);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor tt = random_tensor({3, 4}, rng);
    Tensor tp = random_tensor({2, 4}, rng);
    Tensor ta = random_tensor({2, 4}, rng);
    Tensor target = random_tensor({4, 4}, rng);
    const BranchFlags flags{true, true, true};

    auto build = [&](Tape& t) {
        Var out = multi_branch_layer(t, t.constant(x), t.constant(tt), t.constant(tp),
                                     t.constant(ta), 0.7, flags, f.params);
        return t.mse_against(out, target);
    };
    auto loss = [&]() {
        Tape t;
        return t.val(build(t))[0];
    };
    GradSink sink;
    {
        Tape t;
        t.backward(build(t), sink);
    }
    // every parameter of every branch participates
    std::vector<std::pair<Parameter*, int64_t>> entries;
    for (Parameter* p : f.store.ordered()) {
        auto e = sample_entries(*p, 2, rng);
        entries.insert(entries.end(), e.begin(), e.end());
    }
    // spec tolerance: relative error <= 1e-3 at step 1e-4
    CHECK(testutil::fd_max_rel_error(loss, sink, entries, 1e-4, 1e-6) < 1e-3);
}

TEST_CASE("project_visual_tokens: identity, zero, and random-oracle cases") {
    ParamStore store;
    Rng rng(37);

    Parameter& ident = store.create("ident", {4, 4});
    for (int i = 0; i < 4; ++i) ident.value.at(i, i) = 1.0;
    Tensor feats = random_tensor({5, 4}, rng);
    Tape t;
    Var out = project_visual_tokens(t, t.constant(feats), ident);
    CHECK(max_abs_diff(t.val(out), feats) == 0.0);

    Parameter& zero = store.create("zero", {4, 7});
    Var z = project_visual_tokens(t, t.constant(feats), zero);
    for (double v : t.val(z).data) CHECK(v == 0.0);

    Parameter& w = store.create("w", {32, 64});
    for (double& v : w.value.data) v = rng.uniform(-1, 1);
    Tensor f17 = random_tensor({17, 32}, rng);
    Var p = project_visual_tokens(t, t.constant(f17), w);
    // independent matrix-multiply oracle
    for (int i = 0; i < 17; ++i)
        for (int j = 0; j < 64; ++j) {
            double s = 0;
            for (int k = 0; k < 32; ++k) s += f17.at(i, k) * w.value.at(k, j);
            CHECK(t.val(p).at(i, j) == doctest::Approx(s).epsilon(1e-12));
        }

    Parameter& bad = store.create("bad", {5, 6});
    CHECK_THROWS_AS((void)project_visual_tokens(t, t.constant(feats), bad), ConfigError);

    Tensor nan_feats = feats;
    nan_feats[0] = std::nan("");
    CHECK_THROWS_AS((void)project_visual_tokens(t, t.constant(nan_feats), w), InputError);
}
