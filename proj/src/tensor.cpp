#include "adgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adgen/errors.hpp"

namespace adgen {

int64_t shape_numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor Tensor::zeros(std::vector<int> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> v) {
    if (shape_numel(s) != static_cast<int64_t>(v.size()))
        throw InputError("Tensor::from: size mismatch");
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(v);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw InputError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor r = a;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor r = a;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

Tensor scale(const Tensor& a, double c) {
    Tensor r = a;
    for (double& v : r.data) v *= c;
    return r;
}

void axpy(Tensor& y, double a, const Tensor& x) {
    require_same_shape(y, x, "axpy");
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor r = a;
    for (double& v : r.data) v = std::min(hi, std::max(lo, v));
    return r;
}

double mean_all(const Tensor& a) {
    if (a.data.empty()) return 0.0;
    double s = 0.0;
    for (double v : a.data) s += v;
    return s / static_cast<double>(a.data.size());
}

double std_all(const Tensor& a) {
    if (a.data.empty()) return 0.0;
    const double mu = mean_all(a);
    double s = 0.0;
    for (double v : a.data) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(a.data.size()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace adgen
