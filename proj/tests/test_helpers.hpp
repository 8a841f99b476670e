#pragma once

// Shared test utilities: random fills and the central finite-difference
// gradient oracle used to check every autodiff operator. The oracle is
// independent of the backward implementations it verifies.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dxtab/autodiff.hpp"
#include "dxtab/tensor.hpp"

namespace testutil {

inline dxtab::nn::Tensor random_tensor(std::vector<std::int64_t> shape, std::mt19937_64& rng,
                                       double lo = -1.0, double hi = 1.0) {
    dxtab::nn::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// loss_fn() must rebuild the graph from the *current* parameter values and
// return the loss; grad_fn() must populate param.grad. Central differences
// with step h are compared element-wise at relative tolerance rel_tol.
inline double max_grad_rel_error(std::vector<dxtab::nn::Parameter*> params,
                                 const std::function<double()>& loss_fn,
                                 const std::function<void()>& grad_fn, double h = 1e-5) {
    for (auto* p : params) p->zero_grad();
    grad_fn();
    double worst = 0.0;
    for (auto* p : params) {
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double lp = loss_fn();
            p->value[i] = saved - h;
            const double lm = loss_fn();
            p->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = p->grad[i];
            // Denominator floor keeps analytically-zero gradients (for
            // example a key bias, which softmax cancels) from dividing
            // finite-difference noise by itself.
            const double rel = std::abs(ad - fd) / std::max(std::abs(ad) + std::abs(fd), 1e-6);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace testutil
