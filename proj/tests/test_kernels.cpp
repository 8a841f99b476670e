#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "dxtab/kernels.hpp"

using dxtab::kern::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

void naive_matmul_nn(std::vector<double>& c, const std::vector<double>& a,
                     const std::vector<double>& b, std::size_t m, std::size_t k, std::size_t n) {
    c.assign(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
}

void check_tables_agree(const KernelTable& ref, const KernelTable& alt, std::size_t m,
                        std::size_t k, std::size_t n, std::uint64_t seed) {
    auto a = random_vec(m * k, seed);
    auto b = random_vec(k * n, seed + 1);
    auto bt = random_vec(n * k, seed + 2);
    auto at = random_vec(k * m, seed + 3);

    std::vector<double> c1(m * n), c2(m * n);
    ref.matmul_nn(c1.data(), a.data(), b.data(), m, k, n, false);
    alt.matmul_nn(c2.data(), a.data(), b.data(), m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));

    ref.matmul_nt(c1.data(), a.data(), bt.data(), m, k, n, false);
    alt.matmul_nt(c2.data(), a.data(), bt.data(), m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));

    ref.matmul_tn(c1.data(), at.data(), b.data(), m, k, n, false);
    alt.matmul_tn(c2.data(), at.data(), b.data(), m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("scalar matmul matches naive reference") {
    const auto& t = dxtab::kern::scalar_table();
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 4, 5}, {7, 9, 2}, {8, 8, 8}}) {
        auto a = random_vec(m * k, 11);
        auto b = random_vec(k * n, 13);
        std::vector<double> expect, got(m * n);
        naive_matmul_nn(expect, a, b, m, k, n);
        t.matmul_nn(got.data(), a.data(), b.data(), m, k, n, false);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-13));
    }
}

TEST_CASE("matmul accumulate adds onto destination") {
    const auto& t = dxtab::kern::scalar_table();
    auto a = random_vec(6, 3);
    auto b = random_vec(6, 4);
    std::vector<double> c(4, 1.0), expect;
    naive_matmul_nn(expect, a, b, 2, 3, 2);
    t.matmul_nn(c.data(), a.data(), b.data(), 2, 3, 2, true);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(1.0 + expect[i]));
}

TEST_CASE("nt and tn variants agree with explicit transposes") {
    const auto& t = dxtab::kern::scalar_table();
    const std::size_t m = 4, k = 5, n = 3;
    auto a = random_vec(m * k, 21);
    auto b = random_vec(k * n, 22);
    // Build B^T then check A*(B^T)^T == A*B via matmul_nt.
    std::vector<double> bt(n * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    std::vector<double> expect, got(m * n);
    naive_matmul_nn(expect, a, b, m, k, n);
    t.matmul_nt(got.data(), a.data(), bt.data(), m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(expect[i]));

    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    t.matmul_tn(got.data(), at.data(), b.data(), m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(expect[i]));
}

TEST_CASE("vector kernels: dot, axpy, scale, sq_sum") {
    const auto& t = dxtab::kern::scalar_table();
    auto x = random_vec(17, 31);
    auto y = random_vec(17, 32);
    double expect = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) expect += x[i] * y[i];
    CHECK(t.dot(x.data(), y.data(), x.size()) == doctest::Approx(expect));

    auto y2 = y;
    t.axpy(y2.data(), 0.5, x.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y2[i] == doctest::Approx(y[i] + 0.5 * x[i]));

    double ss = 0.0;
    for (double v : x) ss += v * v;
    CHECK(t.sq_sum(x.data(), x.size()) == doctest::Approx(ss));
}

TEST_CASE("avx2 variants agree with the scalar reference") {
    const KernelTable* avx2 = dxtab::kern::avx2_table();
    if (avx2 == nullptr || !__builtin_cpu_supports("avx2")) {
        MESSAGE("AVX2 unavailable; equivalence check skipped");
        return;
    }
    const auto& ref = dxtab::kern::scalar_table();
    // Sizes straddling vector-width remainders.
    for (auto [m, k, n] :
         {std::array<std::size_t, 3>{1, 1, 1}, {2, 3, 5}, {4, 8, 4}, {5, 7, 9}, {16, 33, 12}})
        check_tables_agree(ref, *avx2, m, k, n, 100 + m + k + n);

    for (std::size_t len : {1u, 3u, 4u, 7u, 8u, 9u, 31u, 64u, 129u}) {
        auto x = random_vec(len, 50 + len);
        auto y = random_vec(len, 60 + len);
        CHECK(ref.dot(x.data(), y.data(), len) ==
              doctest::Approx(avx2->dot(x.data(), y.data(), len)).epsilon(1e-12));
        CHECK(ref.sq_sum(x.data(), len) ==
              doctest::Approx(avx2->sq_sum(x.data(), len)).epsilon(1e-12));
        auto y1 = y, y2 = y;
        ref.axpy(y1.data(), -1.3, x.data(), len);
        avx2->axpy(y2.data(), -1.3, x.data(), len);
        for (std::size_t i = 0; i < len; ++i)
            CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
        auto s1 = x, s2 = x;
        ref.scale(s1.data(), 0.77, len);
        avx2->scale(s2.data(), 0.77, len);
        for (std::size_t i = 0; i < len; ++i) CHECK(s1[i] == doctest::Approx(s2[i]));
        auto v1 = y, v2 = y;
        ref.vmul(v1.data(), x.data(), len);
        avx2->vmul(v2.data(), x.data(), len);
        for (std::size_t i = 0; i < len; ++i) CHECK(v1[i] == doctest::Approx(v2[i]));
    }
}

TEST_CASE("active table selection honours the environment override") {
    // DXTAB_KERNELS is read once on first use; just assert active() is one of
    // the compiled tables and is stable across calls.
    const auto& a1 = dxtab::kern::active();
    const auto& a2 = dxtab::kern::active();
    CHECK(&a1 == &a2);
    const bool is_scalar = &a1 == &dxtab::kern::scalar_table();
    const bool is_avx2 = dxtab::kern::avx2_table() != nullptr && &a1 == dxtab::kern::avx2_table();
    CHECK((is_scalar || is_avx2));
}
