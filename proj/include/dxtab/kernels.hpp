#pragma once

// Dense double-precision kernels used by the numeric core, t-SNE and the SVM
// solver. A scalar reference implementation always exists; an AVX2+FMA
// variant is compiled alongside it and selected at runtime when the CPU
// supports it. The two are equivalence-tested against each other.
//
// Matrix arguments are row-major.
//   matmul_nn: C = A(MxK) * B(KxN)
//   matmul_nt: C = A(MxK) * B(NxK)^T
//   matmul_tn: C = A(KxM)^T * B(KxN)
// With accumulate=true the product is added onto C instead of overwriting it.

#include <cstddef>

namespace dxtab::kern {

struct KernelTable {
    const char* name;
    double (*dot)(const double* x, const double* y, std::size_t n);
    void (*axpy)(double* y, double a, const double* x, std::size_t n);  // y += a*x
    void (*scale)(double* x, double a, std::size_t n);                  // x *= a
    void (*vadd)(double* y, const double* x, std::size_t n);            // y += x
    void (*vmul)(double* y, const double* x, std::size_t n);            // y *= x
    double (*sq_sum)(const double* x, std::size_t n);
    void (*matmul_nn)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    void (*matmul_nt)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    void (*matmul_tn)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
};

const KernelTable& scalar_table();

// Null when the binary was built without AVX2 support for this platform.
const KernelTable* avx2_table();

// Runtime selection: AVX2 when the CPU has it, else scalar. The environment
// variable DXTAB_KERNELS={auto,scalar,avx2} overrides the choice.
const KernelTable& active();

}  // namespace dxtab::kern
