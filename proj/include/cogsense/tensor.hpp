#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/rng.hpp"

namespace cogsense {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of 64-bit floats. Everything in this project is a
// rank-2 matrix; scalars are 1x1 and vectors are 1xN rows.
struct Tensor {
    std::vector<int> shape;     // {rows, cols}
    std::vector<double> values; // row-major, size == rows*cols

    Tensor() : shape{0, 0} {}

    Tensor(int rows, int cols) : shape{rows, cols}, values(static_cast<size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw DimensionError("Tensor: negative dimension");
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.values[0] = v;
        return t;
    }

    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.shape = {1, static_cast<int>(v.size())};
        t.values = std::move(v);
        return t;
    }

    static Tensor from(int rows, int cols, std::vector<double> v) {
        if (static_cast<size_t>(rows) * cols != v.size()) {
            throw DimensionError("Tensor::from: value count does not match shape");
        }
        Tensor t;
        t.shape = {rows, cols};
        t.values = std::move(v);
        return t;
    }

    static Tensor randn(int rows, int cols, Rng& rng, double stddev = 1.0) {
        Tensor t(rows, cols);
        for (double& v : t.values) v = rng.normal(0.0, stddev);
        return t;
    }

    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }
    size_t size() const { return values.size(); }

    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

    // Value of a 1x1 tensor.
    double item() const {
        if (size() != 1) throw DimensionError("Tensor::item: not a scalar");
        return values[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const Tensor& o) const { return shape == o.shape && values == o.values; }

    std::string shape_str() const {
        return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
    }
};

}  // namespace cogsense
