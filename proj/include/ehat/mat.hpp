#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "ehat/errors.hpp"

namespace ehat {

// Dense row-major matrix of doubles. Plain storage; all graph semantics
// live in tensor.hpp.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    Mat(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        a.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols) throw DimensionError("Mat init: ragged rows");
            a.insert(a.end(), row.begin(), row.end());
        }
    }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    double* data() { return a.data(); }
    const double* data() const { return a.data(); }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    static Mat full(std::size_t r, std::size_t c, double v) { return Mat(r, c, v); }
};

inline std::string shape_str(const Mat& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

} // namespace ehat
