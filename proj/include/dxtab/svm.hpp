#pragma once

// Soft-margin RBF-kernel SVM trained with sequential minimal optimization,
// plus Platt-style probability calibration. Shared by the SVM baseline and
// the SVM-SMOTE seed selection.

#include <cstdint>
#include <vector>

#include "dxtab/matrix.hpp"

namespace dxtab::svm {

struct SvmConfig {
    double c = 1.0;
    double gamma = -1.0;  // <= 0 means 1 / (p * mean feature variance)
    double tol = 1e-3;
    int max_passes = 5;
    std::size_t max_iterations = 0;  // 0 = 200 * n
    double positive_weight = 1.0;    // per-class C multipliers
    double negative_weight = 1.0;
};

class SvmModel {
public:
    // labels in {0,1}; throws on a single-class input.
    static SvmModel fit(const Matrix& x, const std::vector<int>& y, const SvmConfig& cfg = {});

    double decision(const double* row, std::size_t p) const;
    std::vector<double> decision(const Matrix& x) const;
    // Platt-calibrated probability of class 1.
    std::vector<double> predict_proba(const Matrix& x) const;

    // Indices (into the training set) of support vectors with alpha > 1e-8.
    const std::vector<std::size_t>& support_indices() const { return support_; }
    double gamma() const { return gamma_; }
    double bias() const { return b_; }
    double platt_a() const { return platt_a_; }
    double platt_b() const { return platt_b_; }
    const Matrix& support_vectors() const { return sv_; }
    const std::vector<double>& dual_coef() const { return coef_; }

    static SvmModel from_parts(Matrix sv, std::vector<double> coef, double b, double gamma,
                               double platt_a, double platt_b);

private:
    Matrix sv_;                 // support vectors, row-major
    std::vector<double> coef_;  // alpha_i * y_i
    std::vector<std::size_t> support_;
    double b_ = 0.0;
    double gamma_ = 1.0;
    double platt_a_ = -1.0;
    double platt_b_ = 0.0;
};

// Lin-Lin-Weng Newton fit of P(y=1|f) = 1 / (1 + exp(a*f + b)).
std::pair<double, double> fit_platt(const std::vector<double>& decision,
                                    const std::vector<int>& y);

}  // namespace dxtab::svm
