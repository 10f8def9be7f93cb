#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace lachesis::nn {

// Dense row-major matrix of doubles. Everything here is 64-bit: the data is
// desk-scale and full precision keeps gradient checks tight and runs
// bit-reproducible.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    void fill(double v) { data_.assign(data_.size(), v); }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// out = a * b
inline void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.rows());
    if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
    out.fill(0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double* outi = out.row(i);
        const double* ai = a.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols(); ++j) outi[j] += aik * bk[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_into(a, b, out);
    return out;
}

// out += aᵀ * b  (gradient of a product w.r.t. its right factor)
inline void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols());
    for (int k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (int i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* outi = out.row(i);
            for (int j = 0; j < b.cols(); ++j) outi[j] += aki * bk[j];
        }
    }
}

// out = a * bᵀ  (gradient of a product w.r.t. its left factor)
inline void matmul_bt_into(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.cols());
    if (out.rows() != a.rows() || out.cols() != b.rows()) out = Matrix(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double* outi = out.row(i);
        for (int j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            outi[j] = acc;
        }
    }
}

}  // namespace lachesis::nn
