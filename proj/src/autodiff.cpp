#include "adgen/autodiff.hpp"

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>

#include "adgen/errors.hpp"

namespace adgen::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

Parameter& ParamStore::create(const std::string& name, std::vector<int> shape) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(std::move(shape));
    Parameter* raw = p.get();
    owned_.push_back(std::move(p));
    order_.push_back(raw);
    by_name_[name] = raw;
    return *raw;
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const Parameter* p : order_) n += p->value.numel();
    return n;
}

Tensor& GradSink::of(const Parameter& p) {
    auto it = grads_.find(&p);
    if (it == grads_.end())
        it = grads_.emplace(&p, Tensor::zeros(p.value.shape)).first;
    return it->second;
}

const Tensor* GradSink::find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
}

/*----------------------------------- nodes -----------------------------------*/

struct Tape::Node {
    enum class Op {
        Const, Param, Add, Sub, Scale, AddRowVec, AddChanBias, MatMul, Silu,
        Softmax, LayerNorm, GroupNorm, Conv2d, Upsample2x, AvgPool, ChwToTokens,
        TokensToChw, ConcatChannels, ConcatRows, SliceCols, ConcatCols, MeanRows,
        Embedding, StdNorm, Mse
    };
    Op op = Op::Const;
    int a = -1, b = -1, c = -1;
    std::vector<int> extra;      // ConcatCols inputs or Embedding ids
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    double d0 = 0.0;
    std::vector<double> saved;
    Tensor target;
    Tensor owned;
    // Set only for values living outside the tape (parameters, borrowed
    // constants); owned nodes keep vptr null so vector growth stays safe.
    const Tensor* vptr = nullptr;
    const Parameter* parameter = nullptr;
    Tensor grad;
    bool needs_grad = false;
    bool grad_set = false;
};

static const Tensor& node_value(const Tape::Node& n) { return n.vptr ? *n.vptr : n.owned; }

Tape::Tape() = default;
Tape::~Tape() = default;

size_t Tape::size() const { return nodes_.size(); }

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(Var v) { return nodes_[static_cast<size_t>(v.i)]; }
const Tape::Node& Tape::at(Var v) const { return nodes_[static_cast<size_t>(v.i)]; }

const Tensor& Tape::val(Var v) const { return node_value(at(v)); }

const Tensor& Tape::grad_of(Var v) const {
    const Node& n = at(v);
    if (!n.grad_set) throw InputError("grad_of: node has no gradient");
    return n.grad;
}

static void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw InputError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

Var Tape::constant(Tensor v) {
    Node n;
    n.op = Node::Op::Const;
    n.owned = std::move(v);
    return {push(std::move(n))};
}

Var Tape::constant_ref(const Tensor* v) {
    Node n;
    n.op = Node::Op::Const;
    n.vptr = v;
    return {push(std::move(n))};
}

Var Tape::param(const Parameter& p) {
    Node n;
    n.op = Node::Op::Param;
    n.vptr = &p.value;
    n.parameter = &p;
    n.needs_grad = true;
    return {push(std::move(n))};
}

/*--------------------------------- forward -----------------------------------*/

Var Tape::add(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same(x, y, "add");
    Node n;
    n.op = Node::Op::Add;
    n.a = a.i;
    n.b = b.i;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.owned = x;
    for (size_t i = 0; i < n.owned.data.size(); ++i) n.owned.data[i] += y.data[i];
    return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same(x, y, "sub");
    Node n;
    n.op = Node::Op::Sub;
    n.a = a.i;
    n.b = b.i;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.owned = x;
    for (size_t i = 0; i < n.owned.data.size(); ++i) n.owned.data[i] -= y.data[i];
    return {push(std::move(n))};
}

Var Tape::scale(Var a, double c) {
    Node n;
    n.op = Node::Op::Scale;
    n.a = a.i;
    n.d0 = c;
    n.needs_grad = at(a).needs_grad;
    n.owned = val(a);
    for (double& v : n.owned.data) v *= c;
    return {push(std::move(n))};
}

Var Tape::add_row_vec(Var x, Var v) {
    const Tensor& xm = val(x);
    const Tensor& vv = val(v);
    if (xm.rank() != 2 || vv.numel() != xm.dim(1))
        throw InputError("add_row_vec: need MxN plus length-N vector");
    Node n;
    n.op = Node::Op::AddRowVec;
    n.a = x.i;
    n.b = v.i;
    n.needs_grad = at(x).needs_grad || at(v).needs_grad;
    n.owned = xm;
    const int M = xm.dim(0), N = xm.dim(1);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) n.owned.data[static_cast<size_t>(i) * N + j] += vv.data[j];
    return {push(std::move(n))};
}

Var Tape::add_channel_bias(Var x, Var v) {
    const Tensor& xm = val(x);
    const Tensor& vv = val(v);
    if (xm.rank() != 3 || vv.numel() != xm.dim(0))
        throw InputError("add_channel_bias: need CxHxW plus length-C vector");
    Node n;
    n.op = Node::Op::AddChanBias;
    n.a = x.i;
    n.b = v.i;
    n.needs_grad = at(x).needs_grad || at(v).needs_grad;
    n.owned = xm;
    const int C = xm.dim(0);
    const int HW = xm.dim(1) * xm.dim(2);
    for (int c = 0; c < C; ++c) {
        double* p = n.owned.data.data() + static_cast<size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) p[i] += vv.data[c];
    }
    return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 2 || B.rank() != 2) throw InputError("matmul: rank-2 tensors required");
    const int m = trans_a ? A.dim(1) : A.dim(0);
    const int ka = trans_a ? A.dim(0) : A.dim(1);
    const int kb = trans_b ? B.dim(1) : B.dim(0);
    const int nn = trans_b ? B.dim(0) : B.dim(1);
    if (ka != kb)
        throw InputError("matmul: inner dimension mismatch " + A.shape_str() + " vs " +
                         B.shape_str());
    Node n;
    n.op = Node::Op::MatMul;
    n.a = a.i;
    n.b = b.i;
    n.i0 = trans_a;
    n.i1 = trans_b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.owned = Tensor::zeros({m, nn});
    MapC Am(A.data.data(), A.dim(0), A.dim(1));
    MapC Bm(B.data.data(), B.dim(0), B.dim(1));
    MapM Cm(n.owned.data.data(), m, nn);
    if (!trans_a && !trans_b) Cm.noalias() = Am * Bm;
    else if (!trans_a && trans_b) Cm.noalias() = Am * Bm.transpose();
    else if (trans_a && !trans_b) Cm.noalias() = Am.transpose() * Bm;
    else Cm.noalias() = Am.transpose() * Bm.transpose();
    return {push(std::move(n))};
}

Var Tape::silu(Var x) {
    Node n;
    n.op = Node::Op::Silu;
    n.a = x.i;
    n.needs_grad = at(x).needs_grad;
    n.owned = val(x);
    for (double& v : n.owned.data) v = v / (1.0 + std::exp(-v));
    return {push(std::move(n))};
}

Var Tape::softmax_rows(Var x) {
    const Tensor& xm = val(x);
    if (xm.rank() != 2) throw InputError("softmax_rows: rank-2 required");
    Node n;
    n.op = Node::Op::Softmax;
    n.a = x.i;
    n.needs_grad = at(x).needs_grad;
    n.owned = xm;
    const int M = xm.dim(0), N = xm.dim(1);
    for (int i = 0; i < M; ++i) {
        double* row = n.owned.data.data() + static_cast<size_t>(i) * N;
        double mx = row[0];
        for (int j = 1; j < N; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < N; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (int j = 0; j < N; ++j) row[j] /= s;
    }
    return {push(std::move(n))};
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xm = val(x);
    if (xm.rank() != 2) throw InputError("layer_norm: rank-2 required");
    const int M = xm.dim(0), D = xm.dim(1);
    if (val(gamma).numel() != D || val(beta).numel() != D)
        throw InputError("layer_norm: affine size mismatch");
    Node n;
    n.op = Node::Op::LayerNorm;
    n.a = x.i;
    n.b = gamma.i;
    n.c = beta.i;
    n.d0 = eps;
    n.needs_grad = at(x).needs_grad || at(gamma).needs_grad || at(beta).needs_grad;
    n.owned = Tensor::zeros({M, D});
    n.saved.resize(static_cast<size_t>(M) * 2);
    const double* g = val(gamma).data.data();
    const double* be = val(beta).data.data();
    for (int i = 0; i < M; ++i) {
        const double* row = xm.data.data() + static_cast<size_t>(i) * D;
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += row[j];
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= D;
        const double inv = 1.0 / std::sqrt(var + eps);
        n.saved[static_cast<size_t>(i) * 2] = mu;
        n.saved[static_cast<size_t>(i) * 2 + 1] = inv;
        double* out = n.owned.data.data() + static_cast<size_t>(i) * D;
        for (int j = 0; j < D; ++j) out[j] = g[j] * (row[j] - mu) * inv + be[j];
    }
    return {push(std::move(n))};
}

Var Tape::group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    const Tensor& xm = val(x);
    if (xm.rank() != 3) throw InputError("group_norm: rank-3 required");
    const int C = xm.dim(0), H = xm.dim(1), W = xm.dim(2);
    if (C % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
    if (val(gamma).numel() != C || val(beta).numel() != C)
        throw InputError("group_norm: affine size mismatch");
    Node n;
    n.op = Node::Op::GroupNorm;
    n.a = x.i;
    n.b = gamma.i;
    n.c = beta.i;
    n.i0 = groups;
    n.d0 = eps;
    n.needs_grad = at(x).needs_grad || at(gamma).needs_grad || at(beta).needs_grad;
    n.owned = Tensor::zeros({C, H, W});
    n.saved.resize(static_cast<size_t>(groups) * 2);
    const int gs = C / groups;
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t gn = gs * hw;
    const double* g = val(gamma).data.data();
    const double* be = val(beta).data.data();
    for (int gi = 0; gi < groups; ++gi) {
        const double* xs = xm.data.data() + static_cast<size_t>(gi) * gn;
        double mu = 0.0;
        for (int64_t i = 0; i < gn; ++i) mu += xs[i];
        mu /= static_cast<double>(gn);
        double var = 0.0;
        for (int64_t i = 0; i < gn; ++i) var += (xs[i] - mu) * (xs[i] - mu);
        var /= static_cast<double>(gn);
        const double inv = 1.0 / std::sqrt(var + eps);
        n.saved[static_cast<size_t>(gi) * 2] = mu;
        n.saved[static_cast<size_t>(gi) * 2 + 1] = inv;
        double* out = n.owned.data.data() + static_cast<size_t>(gi) * gn;
        for (int ci = 0; ci < gs; ++ci) {
            const int c = gi * gs + ci;
            for (int64_t i = 0; i < hw; ++i) {
                const double xh = (xs[ci * hw + i] - mu) * inv;
                out[ci * hw + i] = g[c] * xh + be[c];
            }
        }
    }
    return {push(std::move(n))};
}

// im2col-backed convolution: on this project's feature-map sizes the GEMM
// formulation is markedly faster than direct loops. The forward pass caches
// the column buffer on the node so backward does not rebuild it.
namespace conv_detail {

// col layout: (C*k*k) rows x (OH*OW) cols
void im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow,
            std::vector<double>& col) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    col.assign(static_cast<size_t>(C) * k * k * oh * ow, 0.0);
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                double* dst =
                    col.data() + (static_cast<size_t>(c) * k * k + ki * k + kj) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= H) continue;
                    const double* src = x.data.data() + (static_cast<size_t>(c) * H + iy) * W;
                    double* drow = dst + static_cast<size_t>(oy) * ow;
                    if (stride == 1) {
                        const int ox0 = std::max(0, pad - kj);
                        const int ox1 = std::min(ow - 1, W - 1 + pad - kj);
                        const int shift = kj - pad;
                        for (int ox = ox0; ox <= ox1; ++ox) drow[ox] = src[ox + shift];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kj - pad;
                            if (ix >= 0 && ix < W) drow[ox] = src[ix];
                        }
                    }
                }
            }
}

void col2im_add(const std::vector<double>& col, int C, int H, int W, int k, int stride, int pad,
                int oh, int ow, Tensor& dx) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const double* src =
                    col.data() + (static_cast<size_t>(c) * k * k + ki * k + kj) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= H) continue;
                    double* drow = dx.data.data() + (static_cast<size_t>(c) * H + iy) * W;
                    const double* srow = src + static_cast<size_t>(oy) * ow;
                    if (stride == 1) {
                        const int ox0 = std::max(0, pad - kj);
                        const int ox1 = std::min(ow - 1, W - 1 + pad - kj);
                        const int shift = kj - pad;
                        for (int ox = ox0; ox <= ox1; ++ox) drow[ox + shift] += srow[ox];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kj - pad;
                            if (ix >= 0 && ix < W) drow[ix] += srow[ox];
                        }
                    }
                }
            }
}

}  // namespace conv_detail

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& xm = val(x);
    const Tensor& wm = val(w);
    const Tensor& bm = val(b);
    if (xm.rank() != 3 || wm.rank() != 4) throw InputError("conv2d: bad ranks");
    const int C = xm.dim(0), H = xm.dim(1), W = xm.dim(2);
    const int O = wm.dim(0), k = wm.dim(2);
    if (wm.dim(1) != C || wm.dim(3) != k || bm.numel() != O)
        throw InputError("conv2d: weight shape mismatch");
    const int oh = (H + 2 * pad - k) / stride + 1;
    const int ow = (W + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw InputError("conv2d: empty output");
    Node n;
    n.op = Node::Op::Conv2d;
    n.a = x.i;
    n.b = w.i;
    n.c = b.i;
    n.i0 = stride;
    n.i1 = pad;
    n.needs_grad = at(x).needs_grad || at(w).needs_grad || at(b).needs_grad;
    n.owned = Tensor::zeros({O, oh, ow});
    conv_detail::im2col(xm, k, stride, pad, oh, ow, n.saved);
    const int ckk = C * k * k;
    const int ohw = oh * ow;
    MapC Wm(wm.data.data(), O, ckk);
    MapC Col(n.saved.data(), ckk, ohw);
    MapM Out(n.owned.data.data(), O, ohw);
    Out.noalias() = Wm * Col;
    for (int o = 0; o < O; ++o) {
        double* row = n.owned.data.data() + static_cast<size_t>(o) * ohw;
        for (int i = 0; i < ohw; ++i) row[i] += bm.data[o];
    }
    if (!n.needs_grad) n.saved.clear();  // forward-only: no reason to keep the col
    return {push(std::move(n))};
}

Var Tape::upsample_nearest_2x(Var x) {
    const Tensor& xm = val(x);
    if (xm.rank() != 3) throw InputError("upsample: rank-3 required");
    const int C = xm.dim(0), H = xm.dim(1), W = xm.dim(2);
    Node n;
    n.op = Node::Op::Upsample2x;
    n.a = x.i;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y) {
            const double* src = xm.data.data() + (static_cast<size_t>(c) * H + y / 2) * W;
            double* dst = n.owned.data.data() + (static_cast<size_t>(c) * 2 * H + y) * 2 * W;
            for (int xx = 0; xx < 2 * W; ++xx) dst[xx] = src[xx / 2];
        }
    return {push(std::move(n))};
}

Var Tape::avg_pool_cells(Var x, int gh, int gw) {
    const Tensor& xm = val(x);
    if (xm.rank() != 3) throw InputError("avg_pool_cells: rank-3 required");
    const int C = xm.dim(0), H = xm.dim(1), W = xm.dim(2);
    if (gh > H || gw > W) throw InputError("avg_pool_cells: grid larger than input");
    Node n;
    n.op = Node::Op::AvgPool;
    n.a = x.i;
    n.i0 = gh;
    n.i1 = gw;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({C, gh, gw});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < gh; ++i) {
            const int r0 = i * H / gh, r1 = (i + 1) * H / gh;
            for (int j = 0; j < gw; ++j) {
                const int c0 = j * W / gw, c1 = (j + 1) * W / gw;
                double s = 0.0;
                for (int y = r0; y < r1; ++y)
                    for (int xx = c0; xx < c1; ++xx) s += xm.at(c, y, xx);
                n.owned.at(c, i, j) = s / ((r1 - r0) * (c1 - c0));
            }
        }
    return {push(std::move(n))};
}

Var Tape::chw_to_tokens(Var x) {
    const Tensor& xm = val(x);
    if (xm.rank() != 3) throw InputError("chw_to_tokens: rank-3 required");
    const int C = xm.dim(0), H = xm.dim(1), W = xm.dim(2);
    Node n;
    n.op = Node::Op::ChwToTokens;
    n.a = x.i;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({H * W, C});
    for (int c = 0; c < C; ++c)
        for (int m = 0; m < H * W; ++m)
            n.owned.data[static_cast<size_t>(m) * C + c] =
                xm.data[static_cast<size_t>(c) * H * W + m];
    return {push(std::move(n))};
}

Var Tape::tokens_to_chw(Var x, int h, int w) {
    const Tensor& xm = val(x);
    if (xm.rank() != 2 || xm.dim(0) != h * w) throw InputError("tokens_to_chw: bad shape");
    const int C = xm.dim(1);
    Node n;
    n.op = Node::Op::TokensToChw;
    n.a = x.i;
    n.i0 = h;
    n.i1 = w;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int m = 0; m < h * w; ++m)
            n.owned.data[static_cast<size_t>(c) * h * w + m] =
                xm.data[static_cast<size_t>(m) * C + c];
    return {push(std::move(n))};
}

Var Tape::concat_channels(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    if (x.rank() != 3 || y.rank() != 3 || x.dim(1) != y.dim(1) || x.dim(2) != y.dim(2))
        throw InputError("concat_channels: spatial mismatch");
    Node n;
    n.op = Node::Op::ConcatChannels;
    n.a = a.i;
    n.b = b.i;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.owned = Tensor::zeros({x.dim(0) + y.dim(0), x.dim(1), x.dim(2)});
    std::copy(x.data.begin(), x.data.end(), n.owned.data.begin());
    std::copy(y.data.begin(), y.data.end(), n.owned.data.begin() + x.numel());
    return {push(std::move(n))};
}

Var Tape::concat_rows(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1))
        throw InputError("concat_rows: width mismatch");
    Node n;
    n.op = Node::Op::ConcatRows;
    n.a = a.i;
    n.b = b.i;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.owned = Tensor::zeros({x.dim(0) + y.dim(0), x.dim(1)});
    std::copy(x.data.begin(), x.data.end(), n.owned.data.begin());
    std::copy(y.data.begin(), y.data.end(), n.owned.data.begin() + x.numel());
    return {push(std::move(n))};
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const Tensor& xm = val(x);
    if (xm.rank() != 2 || c0 < 0 || c1 > xm.dim(1) || c0 >= c1)
        throw InputError("slice_cols: bad range");
    const int M = xm.dim(0), D = xm.dim(1), Dn = c1 - c0;
    Node n;
    n.op = Node::Op::SliceCols;
    n.a = x.i;
    n.i0 = c0;
    n.i1 = c1;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({M, Dn});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < Dn; ++j)
            n.owned.data[static_cast<size_t>(i) * Dn + j] =
                xm.data[static_cast<size_t>(i) * D + c0 + j];
    return {push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw InputError("concat_cols: empty input");
    const int M = val(xs[0]).dim(0);
    int D = 0;
    bool ng = false;
    for (Var v : xs) {
        const Tensor& t = val(v);
        if (t.rank() != 2 || t.dim(0) != M) throw InputError("concat_cols: row mismatch");
        D += t.dim(1);
        ng = ng || at(v).needs_grad;
    }
    Node n;
    n.op = Node::Op::ConcatCols;
    for (Var v : xs) n.extra.push_back(v.i);
    n.needs_grad = ng;
    n.owned = Tensor::zeros({M, D});
    int off = 0;
    for (Var v : xs) {
        const Tensor& t = val(v);
        const int d = t.dim(1);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < d; ++j)
                n.owned.data[static_cast<size_t>(i) * D + off + j] =
                    t.data[static_cast<size_t>(i) * d + j];
        off += d;
    }
    return {push(std::move(n))};
}

Var Tape::mean_rows(Var x) {
    const Tensor& xm = val(x);
    if (xm.rank() != 2) throw InputError("mean_rows: rank-2 required");
    const int N = xm.dim(0), D = xm.dim(1);
    Node n;
    n.op = Node::Op::MeanRows;
    n.a = x.i;
    n.needs_grad = at(x).needs_grad;
    n.owned = Tensor::zeros({1, D});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) n.owned.data[j] += xm.data[static_cast<size_t>(i) * D + j];
    for (int j = 0; j < D; ++j) n.owned.data[j] /= N;
    return {push(std::move(n))};
}

Var Tape::embedding(const Parameter& table, const std::vector<int>& ids) {
    const Tensor& tm = table.value;
    if (tm.rank() != 2) throw ConfigError("embedding: table must be VxD");
    const int V = tm.dim(0), D = tm.dim(1);
    for (int id : ids)
        if (id < 0 || id >= V)
            throw InputError("embedding: token id " + std::to_string(id) + " out of vocab");
    Node n;
    n.op = Node::Op::Embedding;
    n.parameter = &table;
    n.extra = ids;
    n.needs_grad = true;
    n.owned = Tensor::zeros({static_cast<int>(ids.size()), D});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(tm.data.begin() + static_cast<size_t>(ids[i]) * D,
                  tm.data.begin() + static_cast<size_t>(ids[i] + 1) * D,
                  n.owned.data.begin() + i * D);
    return {push(std::move(n))};
}

Var Tape::std_norm(Var y_a, Var y_t, double floor, bool detach_stats, bool* out_degenerate) {
    const Tensor& A = val(y_a);
    const Tensor& T = val(y_t);
    check_same(A, T, "std_norm");
    const double mu_a = mean_all(A), mu_t = mean_all(T);
    double va = 0.0, vt = 0.0;
    for (size_t i = 0; i < A.data.size(); ++i) {
        va += (A.data[i] - mu_a) * (A.data[i] - mu_a);
        vt += (T.data[i] - mu_t) * (T.data[i] - mu_t);
    }
    const double n_el = static_cast<double>(A.data.size());
    const double sa = std::sqrt(va / n_el);
    const double st = std::sqrt(vt / n_el);
    Node n;
    n.op = Node::Op::StdNorm;
    n.a = y_a.i;
    n.b = y_t.i;
    n.i1 = detach_stats ? 1 : 0;
    n.needs_grad = at(y_a).needs_grad || at(y_t).needs_grad;
    if (sa < floor) {
        n.i0 = 1;  // degenerate: pass through unchanged
        n.owned = A;
        if (out_degenerate) *out_degenerate = true;
    } else {
        n.i0 = 0;
        n.saved = {mu_a, sa, mu_t, st};
        n.owned = A;
        const double r = st / sa;
        for (double& v : n.owned.data) v *= r;
        if (out_degenerate) *out_degenerate = false;
    }
    return {push(std::move(n))};
}

Var Tape::mse_against(Var x, const Tensor& target) {
    const Tensor& xm = val(x);
    check_same(xm, target, "mse_against");
    Node n;
    n.op = Node::Op::Mse;
    n.a = x.i;
    n.target = target;
    n.needs_grad = at(x).needs_grad;
    double s = 0.0;
    for (size_t i = 0; i < xm.data.size(); ++i) {
        const double d = xm.data[i] - target.data[i];
        s += d * d;
    }
    n.owned = Tensor::from({1}, {s / static_cast<double>(xm.data.size())});
    return {push(std::move(n))};
}

/*--------------------------------- backward ----------------------------------*/

void Tape::backward(Var loss, GradSink& sink, double seed) {
    Node& ln = at(loss);
    if (node_value(ln).numel() != 1) throw InputError("backward: loss must be scalar");
    for (Node& n : nodes_) {
        n.grad_set = false;
    }
    auto ensure = [&](int id) -> Tensor& {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_set) {
            n.grad = Tensor::zeros(node_value(n).shape);
            n.grad_set = true;
        }
        return n.grad;
    };
    ensure(loss.i).data[0] = seed;

    for (int idx = static_cast<int>(nodes_.size()) - 1; idx >= 0; --idx) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        if (!n.grad_set || !n.needs_grad) continue;
        const Tensor& g = n.grad;
        auto wants = [&](int id) { return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad; };
        switch (n.op) {
            case Node::Op::Const:
                break;
            case Node::Op::Param:
                axpy(sink.of(*n.parameter), 1.0, g);
                break;
            case Node::Op::Add: {
                if (wants(n.a)) axpy(ensure(n.a), 1.0, g);
                if (wants(n.b)) axpy(ensure(n.b), 1.0, g);
                break;
            }
            case Node::Op::Sub: {
                if (wants(n.a)) axpy(ensure(n.a), 1.0, g);
                if (wants(n.b)) axpy(ensure(n.b), -1.0, g);
                break;
            }
            case Node::Op::Scale: {
                if (wants(n.a)) axpy(ensure(n.a), n.d0, g);
                break;
            }
            case Node::Op::AddRowVec: {
                if (wants(n.a)) axpy(ensure(n.a), 1.0, g);
                if (wants(n.b)) {
                    Tensor& gv = ensure(n.b);
                    const int M = g.dim(0), N = g.dim(1);
                    for (int i = 0; i < M; ++i)
                        for (int j = 0; j < N; ++j)
                            gv.data[j] += g.data[static_cast<size_t>(i) * N + j];
                }
                break;
            }
            case Node::Op::AddChanBias: {
                if (wants(n.a)) axpy(ensure(n.a), 1.0, g);
                if (wants(n.b)) {
                    Tensor& gv = ensure(n.b);
                    const int C = g.dim(0);
                    const int HW = g.dim(1) * g.dim(2);
                    for (int c = 0; c < C; ++c) {
                        const double* p = g.data.data() + static_cast<size_t>(c) * HW;
                        double s = 0.0;
                        for (int i = 0; i < HW; ++i) s += p[i];
                        gv.data[c] += s;
                    }
                }
                break;
            }
            case Node::Op::MatMul: {
                const Tensor& A = node_value(nodes_[static_cast<size_t>(n.a)]);
                const Tensor& B = node_value(nodes_[static_cast<size_t>(n.b)]);
                MapC Am(A.data.data(), A.dim(0), A.dim(1));
                MapC Bm(B.data.data(), B.dim(0), B.dim(1));
                MapC Gm(g.data.data(), g.dim(0), g.dim(1));
                const bool ta = n.i0, tb = n.i1;
                if (wants(n.a)) {
                    Tensor& da = ensure(n.a);
                    MapM Dam(da.data.data(), da.dim(0), da.dim(1));
                    if (!ta && !tb) Dam.noalias() += Gm * Bm.transpose();
                    else if (!ta && tb) Dam.noalias() += Gm * Bm;
                    else if (ta && !tb) Dam.noalias() += Bm * Gm.transpose();
                    else Dam.noalias() += Bm.transpose() * Gm.transpose();
                }
                if (wants(n.b)) {
                    Tensor& db = ensure(n.b);
                    MapM Dbm(db.data.data(), db.dim(0), db.dim(1));
                    if (!ta && !tb) Dbm.noalias() += Am.transpose() * Gm;
                    else if (!ta && tb) Dbm.noalias() += Gm.transpose() * Am;
                    else if (ta && !tb) Dbm.noalias() += Am * Gm;
                    else Dbm.noalias() += Gm.transpose() * Am.transpose();
                }
                break;
            }
            case Node::Op::Silu: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const Tensor& x = node_value(nodes_[static_cast<size_t>(n.a)]);
                    for (size_t i = 0; i < x.data.size(); ++i) {
                        const double s = 1.0 / (1.0 + std::exp(-x.data[i]));
                        dx.data[i] += g.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
                    }
                }
                break;
            }
            case Node::Op::Softmax: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int M = n.owned.dim(0), N = n.owned.dim(1);
                    for (int i = 0; i < M; ++i) {
                        const double* y = n.owned.data.data() + static_cast<size_t>(i) * N;
                        const double* gy = g.data.data() + static_cast<size_t>(i) * N;
                        double s = 0.0;
                        for (int j = 0; j < N; ++j) s += y[j] * gy[j];
                        double* d = dx.data.data() + static_cast<size_t>(i) * N;
                        for (int j = 0; j < N; ++j) d[j] += y[j] * (gy[j] - s);
                    }
                }
                break;
            }
            case Node::Op::LayerNorm: {
                const Tensor& x = node_value(nodes_[static_cast<size_t>(n.a)]);
                const Tensor& gamma = node_value(nodes_[static_cast<size_t>(n.b)]);
                const int M = x.dim(0), D = x.dim(1);
                const bool wx = wants(n.a), wg = wants(n.b), wb = wants(n.c);
                Tensor* dx = wx ? &ensure(n.a) : nullptr;
                Tensor* dg = wg ? &ensure(n.b) : nullptr;
                Tensor* db = wb ? &ensure(n.c) : nullptr;
                std::vector<double> xhat(static_cast<size_t>(D));
                for (int i = 0; i < M; ++i) {
                    const double mu = n.saved[static_cast<size_t>(i) * 2];
                    const double inv = n.saved[static_cast<size_t>(i) * 2 + 1];
                    const double* xr = x.data.data() + static_cast<size_t>(i) * D;
                    const double* gr = g.data.data() + static_cast<size_t>(i) * D;
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < D; ++j) {
                        xhat[static_cast<size_t>(j)] = (xr[j] - mu) * inv;
                        const double dxh = gr[j] * gamma.data[j];
                        m1 += dxh;
                        m2 += dxh * xhat[static_cast<size_t>(j)];
                    }
                    m1 /= D;
                    m2 /= D;
                    for (int j = 0; j < D; ++j) {
                        const double dxh = gr[j] * gamma.data[j];
                        if (wx)
                            dx->data[static_cast<size_t>(i) * D + j] +=
                                inv * (dxh - m1 - xhat[static_cast<size_t>(j)] * m2);
                        if (wg) dg->data[j] += gr[j] * xhat[static_cast<size_t>(j)];
                        if (wb) db->data[j] += gr[j];
                    }
                }
                break;
            }
            case Node::Op::GroupNorm: {
                const Tensor& x = node_value(nodes_[static_cast<size_t>(n.a)]);
                const Tensor& gamma = node_value(nodes_[static_cast<size_t>(n.b)]);
                const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
                const int groups = n.i0, gs = C / groups;
                const int64_t hw = static_cast<int64_t>(H) * W;
                const int64_t gn = gs * hw;
                const bool wx = wants(n.a), wg = wants(n.b), wb = wants(n.c);
                Tensor* dx = wx ? &ensure(n.a) : nullptr;
                Tensor* dg = wg ? &ensure(n.b) : nullptr;
                Tensor* db = wb ? &ensure(n.c) : nullptr;
                for (int gi = 0; gi < groups; ++gi) {
                    const double mu = n.saved[static_cast<size_t>(gi) * 2];
                    const double inv = n.saved[static_cast<size_t>(gi) * 2 + 1];
                    const double* xs = x.data.data() + static_cast<size_t>(gi) * gn;
                    const double* ggr = g.data.data() + static_cast<size_t>(gi) * gn;
                    double m1 = 0.0, m2 = 0.0;
                    for (int ci = 0; ci < gs; ++ci) {
                        const double gc = gamma.data[gi * gs + ci];
                        for (int64_t i = 0; i < hw; ++i) {
                            const double xh = (xs[ci * hw + i] - mu) * inv;
                            const double dxh = ggr[ci * hw + i] * gc;
                            m1 += dxh;
                            m2 += dxh * xh;
                        }
                    }
                    m1 /= static_cast<double>(gn);
                    m2 /= static_cast<double>(gn);
                    for (int ci = 0; ci < gs; ++ci) {
                        const int c = gi * gs + ci;
                        const double gc = gamma.data[c];
                        double sg = 0.0, sb = 0.0;
                        for (int64_t i = 0; i < hw; ++i) {
                            const double xh = (xs[ci * hw + i] - mu) * inv;
                            const double gy = ggr[ci * hw + i];
                            if (wx)
                                dx->data[static_cast<size_t>(gi) * gn + ci * hw + i] +=
                                    inv * (gy * gc - m1 - xh * m2);
                            sg += gy * xh;
                            sb += gy;
                        }
                        if (wg) dg->data[c] += sg;
                        if (wb) db->data[c] += sb;
                    }
                }
                break;
            }
            case Node::Op::Conv2d: {
                const Tensor& x = node_value(nodes_[static_cast<size_t>(n.a)]);
                const Tensor& w = node_value(nodes_[static_cast<size_t>(n.b)]);
                const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
                const int O = w.dim(0), k = w.dim(2);
                const int stride = n.i0, pad = n.i1;
                const int oh = n.owned.dim(1), ow = n.owned.dim(2);
                const int ckk = C * k * k, ohw = oh * ow;
                MapC Gm(g.data.data(), O, ohw);
                if (wants(n.c)) {
                    Tensor& db = ensure(n.c);
                    for (int o = 0; o < O; ++o) {
                        const double* row = g.data.data() + static_cast<size_t>(o) * ohw;
                        double s = 0.0;
                        for (int i = 0; i < ohw; ++i) s += row[i];
                        db.data[o] += s;
                    }
                }
                if (n.saved.empty())
                    conv_detail::im2col(x, k, stride, pad, oh, ow, n.saved);
                if (wants(n.b)) {
                    MapC Col(n.saved.data(), ckk, ohw);
                    Tensor& dw = ensure(n.b);
                    MapM Dwm(dw.data.data(), O, ckk);
                    Dwm.noalias() += Gm * Col.transpose();
                }
                if (wants(n.a)) {
                    std::vector<double> dcol(static_cast<size_t>(ckk) * ohw);
                    MapM Dcol(dcol.data(), ckk, ohw);
                    MapC Wm(w.data.data(), O, ckk);
                    Dcol.noalias() = Wm.transpose() * Gm;
                    conv_detail::col2im_add(dcol, C, H, W, k, stride, pad, oh, ow, ensure(n.a));
                }
                break;
            }
            case Node::Op::Upsample2x: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int C = dx.dim(0), H = dx.dim(1), W = dx.dim(2);
                    for (int c = 0; c < C; ++c)
                        for (int y = 0; y < 2 * H; ++y) {
                            const double* src =
                                g.data.data() + (static_cast<size_t>(c) * 2 * H + y) * 2 * W;
                            double* dst =
                                dx.data.data() + (static_cast<size_t>(c) * H + y / 2) * W;
                            for (int xx = 0; xx < 2 * W; ++xx) dst[xx / 2] += src[xx];
                        }
                }
                break;
            }
            case Node::Op::AvgPool: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int C = dx.dim(0), H = dx.dim(1), W = dx.dim(2);
                    const int gh = n.i0, gw = n.i1;
                    for (int c = 0; c < C; ++c)
                        for (int i = 0; i < gh; ++i) {
                            const int r0 = i * H / gh, r1 = (i + 1) * H / gh;
                            for (int j = 0; j < gw; ++j) {
                                const int c0 = j * W / gw, c1 = (j + 1) * W / gw;
                                const double gv =
                                    g.at(c, i, j) / ((r1 - r0) * (c1 - c0));
                                for (int y = r0; y < r1; ++y)
                                    for (int xx = c0; xx < c1; ++xx) dx.at(c, y, xx) += gv;
                            }
                        }
                }
                break;
            }
            case Node::Op::ChwToTokens: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int C = dx.dim(0), HW = dx.dim(1) * dx.dim(2);
                    for (int c = 0; c < C; ++c)
                        for (int m = 0; m < HW; ++m)
                            dx.data[static_cast<size_t>(c) * HW + m] +=
                                g.data[static_cast<size_t>(m) * C + c];
                }
                break;
            }
            case Node::Op::TokensToChw: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int HW = n.i0 * n.i1, C = dx.dim(1);
                    for (int c = 0; c < C; ++c)
                        for (int m = 0; m < HW; ++m)
                            dx.data[static_cast<size_t>(m) * C + c] +=
                                g.data[static_cast<size_t>(c) * HW + m];
                }
                break;
            }
            case Node::Op::ConcatChannels: {
                const int64_t na = node_value(nodes_[static_cast<size_t>(n.a)]).numel();
                if (wants(n.a)) {
                    Tensor& da = ensure(n.a);
                    for (int64_t i = 0; i < na; ++i) da.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
                }
                if (wants(n.b)) {
                    Tensor& db = ensure(n.b);
                    const int64_t nb = db.numel();
                    for (int64_t i = 0; i < nb; ++i)
                        db.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(na + i)];
                }
                break;
            }
            case Node::Op::ConcatRows: {
                const int64_t na = node_value(nodes_[static_cast<size_t>(n.a)]).numel();
                if (wants(n.a)) {
                    Tensor& da = ensure(n.a);
                    for (int64_t i = 0; i < na; ++i) da.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
                }
                if (wants(n.b)) {
                    Tensor& db = ensure(n.b);
                    const int64_t nb = db.numel();
                    for (int64_t i = 0; i < nb; ++i)
                        db.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(na + i)];
                }
                break;
            }
            case Node::Op::SliceCols: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int M = dx.dim(0), D = dx.dim(1), Dn = n.i1 - n.i0;
                    for (int i = 0; i < M; ++i)
                        for (int j = 0; j < Dn; ++j)
                            dx.data[static_cast<size_t>(i) * D + n.i0 + j] +=
                                g.data[static_cast<size_t>(i) * Dn + j];
                }
                break;
            }
            case Node::Op::ConcatCols: {
                const int M = n.owned.dim(0), D = n.owned.dim(1);
                int off = 0;
                for (int src : n.extra) {
                    const Tensor& t = node_value(nodes_[static_cast<size_t>(src)]);
                    const int d = t.dim(1);
                    if (nodes_[static_cast<size_t>(src)].needs_grad) {
                        Tensor& dx = ensure(src);
                        for (int i = 0; i < M; ++i)
                            for (int j = 0; j < d; ++j)
                                dx.data[static_cast<size_t>(i) * d + j] +=
                                    g.data[static_cast<size_t>(i) * D + off + j];
                    }
                    off += d;
                }
                break;
            }
            case Node::Op::MeanRows: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const int N = dx.dim(0), D = dx.dim(1);
                    for (int i = 0; i < N; ++i)
                        for (int j = 0; j < D; ++j)
                            dx.data[static_cast<size_t>(i) * D + j] += g.data[j] / N;
                }
                break;
            }
            case Node::Op::Embedding: {
                Tensor& dt = sink.of(*n.parameter);
                const int D = dt.dim(1);
                for (size_t i = 0; i < n.extra.size(); ++i) {
                    const int id = n.extra[i];
                    for (int j = 0; j < D; ++j)
                        dt.data[static_cast<size_t>(id) * D + j] += g.data[i * D + j];
                }
                break;
            }
            case Node::Op::StdNorm: {
                if (n.i0 == 1) {  // degenerate pass-through
                    if (wants(n.a)) axpy(ensure(n.a), 1.0, g);
                    break;
                }
                const Tensor& A = node_value(nodes_[static_cast<size_t>(n.a)]);
                const Tensor& T = node_value(nodes_[static_cast<size_t>(n.b)]);
                const double mu_a = n.saved[0], sa = n.saved[1];
                const double mu_t = n.saved[2], st = n.saved[3];
                const double n_el = static_cast<double>(A.data.size());
                const double ratio = st / sa;
                if (n.i1) {  // detached statistics
                    if (wants(n.a)) axpy(ensure(n.a), ratio, g);
                    break;
                }
                double S = 0.0;
                for (size_t i = 0; i < A.data.size(); ++i) S += g.data[i] * A.data[i];
                if (wants(n.a)) {
                    Tensor& da = ensure(n.a);
                    const double q = S / (n_el * sa * sa);
                    for (size_t i = 0; i < A.data.size(); ++i)
                        da.data[i] += ratio * (g.data[i] - (A.data[i] - mu_a) * q);
                }
                if (wants(n.b)) {
                    Tensor& dt = ensure(n.b);
                    const double q = S / (sa * n_el * st);
                    for (size_t i = 0; i < T.data.size(); ++i)
                        dt.data[i] += q * (T.data[i] - mu_t);
                }
                break;
            }
            case Node::Op::Mse: {
                if (wants(n.a)) {
                    Tensor& dx = ensure(n.a);
                    const Tensor& x = node_value(nodes_[static_cast<size_t>(n.a)]);
                    const double c = 2.0 * g.data[0] / static_cast<double>(x.data.size());
                    for (size_t i = 0; i < x.data.size(); ++i)
                        dx.data[i] += c * (x.data[i] - n.target.data[i]);
                }
                break;
            }
        }
    }
}

}  // namespace adgen::ad
