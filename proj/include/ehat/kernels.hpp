#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ehat::kernels {

// Dense double-precision kernels behind the tensor engine. Each entry has a
// scalar reference implementation and may have SIMD variants; the active
// backend is chosen once at startup from CPU features (override with the
// EHAT_KERNELS environment variable or force_backend()).
//
// Every variant performs the same per-element operations in the same order
// as the scalar reference (no FMA, no reordered reductions), so outputs are
// bitwise identical across backends. Reductions and transcendentals stay in
// the graph layer for the same reason.
struct Ops {
    const char* name;

    // C = A (m x k) * B (k x n), row-major, C overwritten.
    void (*gemm)(const double* A, const double* B, double* C,
                 std::size_t m, std::size_t k, std::size_t n);

    void (*add)(const double* a, const double* b, double* c, std::size_t n);
    void (*sub)(const double* a, const double* b, double* c, std::size_t n);
    void (*mul)(const double* a, const double* b, double* c, std::size_t n);
    void (*scale)(const double* a, double s, double* c, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y += a .* b
    void (*madd)(const double* a, const double* b, double* y, std::size_t n);
    void (*relu)(const double* a, double* c, std::size_t n);
};

const Ops& scalar_ops();

// Active backend (dispatch happens on first use).
const Ops& active();

// All backends usable on this machine, scalar first.
std::vector<const Ops*> available();

// Force a backend by name ("scalar", "avx2"); throws ConfigError if the
// backend is unknown or unsupported on this CPU.
void force_backend(const std::string& name);

} // namespace ehat::kernels
