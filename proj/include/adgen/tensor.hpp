#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace adgen {

// Dense row-major double tensor. Small fixed surface: this project only needs
// rank 1..3 (vectors, token matrices, CxHxW feature maps).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);
    static Tensor from(std::vector<int> s, std::vector<double> v);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 2D / 3D accessors (no bounds checks in release paths).
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

// Elementwise helpers used outside the autodiff graph (samplers, metrics, ...).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
void axpy(Tensor& y, double a, const Tensor& x);  // y += a*x
Tensor clamp(const Tensor& a, double lo, double hi);

double mean_all(const Tensor& a);
// Population standard deviation about the mean, over every entry.
double std_all(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

int64_t shape_numel(const std::vector<int>& s);

}  // namespace adgen
