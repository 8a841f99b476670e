#pragma once

// N-dimensional dense tensor of 64-bit reals, row-major. The training stack
// keeps everything in double so gradient checks are reproducible; model
// serialization narrows to 32-bit.

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace dxtab::nn {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape)
        : shape_(std::move(shape)), v_(count(shape_), 0.0) {}

    Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
        assert(static_cast<std::int64_t>(v_.size()) == count(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<std::int64_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.v_) x = v;
        return t;
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
    bool defined() const { return !shape_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

    double item() const {
        assert(size() == 1);
        return v_[0];
    }

    void fill(double v) {
        for (auto& x : v_) x = v;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::int64_t count(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> v_;
};

}  // namespace dxtab::nn
