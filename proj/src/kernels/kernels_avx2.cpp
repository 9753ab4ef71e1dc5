// AVX2 variants of the dense kernels. Compiled with -mavx2 for this file
// only; selection happens at runtime, so the binary still runs on CPUs
// without AVX2. Element order matches the scalar reference (separate mul
// and add, 4-wide main loop, scalar tail), keeping results bitwise equal.

#if defined(__AVX2__)

#include <immintrin.h>

#include "ehat/kernels.hpp"

namespace ehat::kernels {
namespace {

void gemm_avx2(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        std::size_t j = 0;
        for (; j < n4; j += 4) _mm256_storeu_pd(c + j, _mm256_setzero_pd());
        for (; j < n; ++j) c[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d av = _mm256_set1_pd(A[i * k + p]);
            const double a = A[i * k + p];
            const double* b = B + p * n;
            for (j = 0; j < n4; j += 4) {
                __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(b + j));
                _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), prod));
            }
            for (; j < n; ++j) c[j] += a * b[j];
        }
    }
}

void add_avx2(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* c, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
    for (; i < n; ++i) c[i] = a[i] * s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void madd_avx2(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

void relu_avx2(const double* a, double* c, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}

} // namespace

const Ops* avx2_ops() {
    static const Ops ops = {
        "avx2",    gemm_avx2, add_avx2,  sub_avx2,
        mul_avx2,  scale_avx2, axpy_avx2, madd_avx2,
        relu_avx2,
    };
    return &ops;
}

} // namespace ehat::kernels

#else

#include "ehat/kernels.hpp"

namespace ehat::kernels {
const Ops* avx2_ops() { return nullptr; }
} // namespace ehat::kernels

#endif
