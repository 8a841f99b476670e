#include "dxtab/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "dxtab/kernels.hpp"

namespace dxtab::nn {

void AdamW::step(std::vector<Parameter*>& params, double lr_override) {
    const double lr = lr_override >= 0.0 ? lr_override : cfg_.lr;
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Parameter* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("AdamW: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            // Decoupled decay, independent of the moment update.
            p.value[i] -= lr * cfg_.weight_decay * p.value[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double lr_at(const LrSchedule& s, double epoch) {
    if (epoch < 0.0) throw std::invalid_argument("lr_at: epoch must be >= 0");
    double t_cur = epoch;
    double t_i = s.t0;
    while (t_cur >= t_i) {
        t_cur -= t_i;
        t_i *= s.t_mult;
    }
    constexpr double pi = 3.14159265358979323846;
    return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(pi * t_cur / t_i));
}

double clip_global_norm(std::vector<Parameter*>& params, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
    const auto& k = kern::active();
    double total = 0.0;
    for (const Parameter* p : params)
        total += k.sq_sum(p->grad.data(), static_cast<std::size_t>(p->grad.size()));
    const double norm = std::sqrt(total);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (Parameter* p : params)
            k.scale(p->grad.data(), f, static_cast<std::size_t>(p->grad.size()));
    }
    return norm;
}

double clip_global_norm(std::vector<std::vector<double>*>& grads, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
    const auto& k = kern::active();
    double total = 0.0;
    for (const auto* g : grads) total += k.sq_sum(g->data(), g->size());
    const double norm = std::sqrt(total);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (auto* g : grads) k.scale(g->data(), f, g->size());
    }
    return norm;
}

}  // namespace dxtab::nn
