#include <algorithm>

#include "ehat/kernels.hpp"

namespace ehat::kernels {
namespace {

// Reference kernels. gemm runs i-k-j so the inner loop is a streaming
// axpy over a row of B; SIMD variants keep exactly this order.
void gemm_scalar(const double* A, const double* B, double* C,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::fill(C, C + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

void add_scalar(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void madd_scalar(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void relu_scalar(const double* a, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}

} // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",    gemm_scalar, add_scalar,  sub_scalar,
        mul_scalar,  scale_scalar, axpy_scalar, madd_scalar,
        relu_scalar,
    };
    return ops;
}

} // namespace ehat::kernels
