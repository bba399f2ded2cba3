#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace oshape {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) and 2
// (matrix) are the only shapes the rest of the code uses.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}

    static Tensor scalar(double v) {
        Tensor t{{}, {}};
        t.data.assign(1, v);
        return t;
    }

    static Tensor vector(std::vector<double> v) {
        Tensor t;
        t.shape = {v.size()};
        t.data = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) {
        return Tensor({r, c}, fill);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }

    std::size_t rows() const {
        require_rank(2);
        return shape[0];
    }
    std::size_t cols() const {
        require_rank(2);
        return shape[1];
    }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    void require_rank(std::size_t r) const {
        if (shape.size() != r)
            throw std::invalid_argument("tensor rank " + std::to_string(shape.size()) +
                                        ", expected " + std::to_string(r));
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

} // namespace oshape
