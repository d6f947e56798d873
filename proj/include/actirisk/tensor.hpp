#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "actirisk/common.hpp"

namespace actirisk::nn {

inline std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (const int d : shape) {
        if (d <= 0) throw ValidationError("tensor shape: dimensions must be positive");
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape);

// Dense row-major double tensor.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
        t.shape = std::move(shape);
        return t;
    }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t = zeros(std::move(shape));
        for (double& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    static Tensor from(std::vector<int> shape, std::vector<double> values) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
            throw ValidationError("Tensor::from: data length does not match shape");
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(values);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

} // namespace actirisk::nn
