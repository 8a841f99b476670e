#pragma once

// Dense row-major matrix used by datasets and classical models.

#include <cassert>
#include <cstddef>
#include <vector>

namespace dxtab {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    double* row(std::size_t i) { return v_.data() + i * cols_; }
    const double* row(std::size_t i) const { return v_.data() + i * cols_; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    void set_column(std::size_t j, const std::vector<double>& col) {
        assert(col.size() == rows_);
        for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = col[i];
    }

    void append_row(const std::vector<double>& r) {
        assert(cols_ == 0 || r.size() == cols_);
        if (cols_ == 0) cols_ = r.size();
        v_.insert(v_.end(), r.begin(), r.end());
        ++rows_;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

}  // namespace dxtab
