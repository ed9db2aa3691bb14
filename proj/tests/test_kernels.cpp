#include <vector>

#include "doctest.h"
#include "flowcap/kernels.hpp"
#include "flowcap/rng.hpp"

using namespace flowcap;

namespace {

template <class T>
std::vector<T> random_values(std::size_t n, Rng& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return v;
}

struct Dims {
    std::size_t m, k, n;
};

// Small, odd and above-threshold sizes.
const Dims kDims[] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 64, 64}, {96, 130, 70}, {257, 40, 31}};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE_TEMPLATE("parallel matmul variants match the serial reference bit for bit", T, float, double) {
    Rng rng(21);
    for (const auto& d : kDims) {
        for (bool acc : {false, true}) {
            const auto a = random_values<T>(d.m * d.k, rng);
            const auto b = random_values<T>(d.k * d.n, rng);
            const auto init = random_values<T>(d.m * d.n, rng);
            auto c1 = init, c2 = init;
            kernels::matmul(a.data(), b.data(), c1.data(), d.m, d.k, d.n, acc);
            kernels::reference::matmul(a.data(), b.data(), c2.data(), d.m, d.k, d.n, acc);
            CHECK(c1 == c2);

            const auto at = random_values<T>(d.k * d.m, rng);
            c1 = init;
            c2 = init;
            kernels::matmul_tn(at.data(), b.data(), c1.data(), d.m, d.k, d.n, acc);
            kernels::reference::matmul_tn(at.data(), b.data(), c2.data(), d.m, d.k, d.n, acc);
            CHECK(c1 == c2);

            const auto bt = random_values<T>(d.n * d.k, rng);
            c1 = init;
            c2 = init;
            kernels::matmul_nt(a.data(), bt.data(), c1.data(), d.m, d.k, d.n, acc);
            kernels::reference::matmul_nt(a.data(), bt.data(), c2.data(), d.m, d.k, d.n, acc);
            CHECK(c1 == c2);
        }
    }
}

TEST_CASE_TEMPLATE("parallel softmax matches the serial reference bit for bit", T, float, double) {
    Rng rng(22);
    for (const auto& d : kDims) {
        const auto x = random_values<T>(d.m * d.n, rng);
        std::vector<std::uint8_t> allowed(d.m * d.n);
        for (auto& a : allowed) a = rng.bernoulli(0.7) ? 1 : 0;
        const std::uint8_t* masks[] = {nullptr, allowed.data()};
        for (const std::uint8_t* mask : masks) {
            std::vector<T> y1(x.size()), y2(x.size());
            kernels::softmax_rows(x.data(), y1.data(), d.m, d.n, mask);
            kernels::reference::softmax_rows(x.data(), y2.data(), d.m, d.n, mask);
            CHECK(y1 == y2);
            if (mask) {
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (!mask[i]) CHECK(y1[i] == T(0));
                }
            }
        }
    }
}

TEST_CASE("matmul reference against a direct triple loop") {
    Rng rng(23);
    const std::size_t m = 5, k = 6, n = 4;
    const auto a = random_values<double>(m * k, rng), b = random_values<double>(k * n, rng);
    std::vector<double> c(m * n);
    kernels::matmul(a.data(), b.data(), c.data(), m, k, n, false);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

}
