#pragma once

// AdamW with decoupled weight decay, cosine-annealing-with-warm-restarts
// learning rate schedule, and global gradient-norm clipping.

#include <cstdint>
#include <vector>

#include "dxtab/autodiff.hpp"

namespace dxtab::nn {

struct AdamWConfig {
    double lr = 5e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update using params[i].grad. lr_override < 0 keeps cfg.lr.
    void step(std::vector<Parameter*>& params, double lr_override = -1.0);

    std::int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct LrSchedule {
    double eta_max = 5e-5;
    double eta_min = 0.0;
    double t0 = 25.0;      // initial cycle length, epochs
    double t_mult = 2.0;   // cycle growth factor
};

// Cosine annealing with warm restarts evaluated at a (real-valued) epoch.
double lr_at(const LrSchedule& s, double epoch);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<Parameter*>& params, double max_norm);
double clip_global_norm(std::vector<std::vector<double>*>& grads, double max_norm);

}  // namespace dxtab::nn
