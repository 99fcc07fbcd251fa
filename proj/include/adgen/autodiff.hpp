#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "adgen/tensor.hpp"

namespace adgen::ad {

// Named trainable tensor. Owned by a ParamStore; gradients live in GradSink so
// forward passes stay read-only and concurrent callers never share mutable state.
struct Parameter {
    std::string name;
    Tensor value;
};

class ParamStore {
  public:
    Parameter& create(const std::string& name, std::vector<int> shape);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    // Creation order; stable across runs because construction code is deterministic.
    const std::vector<Parameter*>& ordered() const { return order_; }
    int64_t total_size() const;

  private:
    std::vector<std::unique_ptr<Parameter>> owned_;
    std::vector<Parameter*> order_;
    std::map<std::string, Parameter*> by_name_;
};

// Per-caller gradient accumulator.
class GradSink {
  public:
    Tensor& of(const Parameter& p);
    const Tensor* find(const Parameter& p) const;
    void clear() { grads_.clear(); }

  private:
    std::unordered_map<const Parameter*, Tensor> grads_;
};

struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Define-by-run reverse-mode tape. Values are computed eagerly at op insertion;
// backward() walks the recorded nodes in reverse.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v);
    Var constant_ref(const Tensor* v);  // borrowed; caller keeps it alive
    Var param(const Parameter& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    // x: MxN plus row vector v (length N) added to every row
    Var add_row_vec(Var x, Var v);
    // x: CxHxW plus per-channel bias v (length C)
    Var add_channel_bias(Var x, Var v);
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var silu(Var x);
    Var softmax_rows(Var x);
    // per-row normalization over the last dim, affine (gamma, beta length d)
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    // CxHxW group normalization, affine per channel
    Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    Var upsample_nearest_2x(Var x);
    // adaptive average pooling of CxHxW to a gh x gw grid
    Var avg_pool_cells(Var x, int gh, int gw);
    Var chw_to_tokens(Var x);              // CxHxW -> (H*W) x C
    Var tokens_to_chw(Var x, int h, int w);  // (h*w) x C -> C x h x w
    Var concat_channels(Var a, Var b);
    Var concat_rows(Var a, Var b);
    Var slice_cols(Var x, int c0, int c1);
    Var concat_cols(const std::vector<Var>& xs);
    Var mean_rows(Var x);  // NxD -> 1xD
    // table: (V x d) parameter; out: (ids.size() x d)
    Var embedding(const Parameter& table, const std::vector<int>& ids);
    // y'_a = y_a / std(y_a) * std(y_t); returns y_a unchanged when std(y_a) < floor
    // (degenerate flag reported via out_degenerate). detach_stats treats both
    // standard deviations as constants in backward.
    Var std_norm(Var y_a, Var y_t, double floor, bool detach_stats,
                 bool* out_degenerate = nullptr);
    Var mse_against(Var x, const Tensor& target);  // scalar: mean((x-t)^2)

    const Tensor& val(Var v) const;
    // Backward from a scalar node; parameter grads accumulate into sink
    // (+= seed * dL/dp). Node grads are available via grad_of until the next backward.
    void backward(Var loss, GradSink& sink, double seed = 1.0);
    const Tensor& grad_of(Var v) const;

    size_t size() const;

    struct Node;  // defined in autodiff.cpp

  private:
    std::vector<Node> nodes_;

    int push(Node n);
    Node& at(Var v);
    const Node& at(Var v) const;
};

}  // namespace adgen::ad
