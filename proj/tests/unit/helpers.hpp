#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "adgen/autodiff.hpp"
#include "adgen/rng.hpp"
#include "adgen/tensor.hpp"

namespace testutil {

inline adgen::Tensor random_tensor(std::vector<int> shape, adgen::Rng& rng, double lo = -1.0,
                                   double hi = 1.0) {
    adgen::Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Central-difference gradient check over selected parameter entries.
// `loss` must rebuild the forward pass from current parameter values.
// Returns the worst relative error across entries.
inline double fd_max_rel_error(
    const std::function<double()>& loss, adgen::ad::GradSink& analytic,
    const std::vector<std::pair<adgen::ad::Parameter*, int64_t>>& entries, double h = 1e-5,
    double floor = 1e-8) {
    double worst = 0.0;
    for (const auto& [p, idx] : entries) {
        double& slot = p->value.data[static_cast<size_t>(idx)];
        const double saved = slot;
        slot = saved + h;
        const double fp = loss();
        slot = saved - h;
        const double fm = loss();
        slot = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const adgen::Tensor* g = analytic.find(*p);
        const double ga = g ? g->data[static_cast<size_t>(idx)] : 0.0;
        const double rel = std::fabs(ga - fd) / std::max({std::fabs(ga), std::fabs(fd), floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

// Sample up to `count` entry indices spread across a parameter tensor.
inline std::vector<std::pair<adgen::ad::Parameter*, int64_t>> sample_entries(
    adgen::ad::Parameter& p, int count, adgen::Rng& rng) {
    std::vector<std::pair<adgen::ad::Parameter*, int64_t>> out;
    const int64_t n = p.value.numel();
    for (int i = 0; i < count && i < n; ++i)
        out.emplace_back(&p, rng.uniform_int(0, static_cast<int>(n - 1)));
    return out;
}

}  // namespace testutil
