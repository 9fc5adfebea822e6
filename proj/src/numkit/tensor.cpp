#include "dscmp/numkit/tensor.hpp"

#include <cmath>
#include <string>

namespace dscmp {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": size mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
    }
}

void require_finite(std::span<const Real> values, const char* what) {
    if (!all_finite(values)) {
        throw NumericError(std::string(what) + ": non-finite entry");
    }
}

}  // namespace

Vec::Vec(std::initializer_list<Real> values) : data_(values) {
    require_finite(data_, "Vec");
}

Vec::Vec(std::vector<Real> values) : data_(std::move(values)) {
    require_finite(data_, "Vec");
}

Vec& Vec::operator+=(std::span<const Real> other) {
    require_same_size(size(), other.size(), "Vec::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other[i];
    return *this;
}

Vec& Vec::operator-=(std::span<const Real> other) {
    require_same_size(size(), other.size(), "Vec::operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other[i];
    return *this;
}

Vec& Vec::operator*=(Real scale) noexcept {
    for (auto& v : data_) v *= scale;
    return *this;
}

void Vec::fill(Real value) noexcept {
    for (auto& v : data_) v = value;
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<Real> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    require_same_size(rows * cols, data_.size(), "Mat");
    require_finite(data_, "Mat");
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
}

Mat& Mat::operator+=(const Mat& other) {
    if (!same_shape(other)) throw ShapeError("Mat::operator+=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

void Mat::fill(Real value) noexcept {
    for (auto& v : data_) v = value;
}

bool all_finite(std::span<const Real> values) noexcept {
    for (Real v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Vec matvec(const Mat& a, std::span<const Real> x) {
    Vec y(a.rows());
    matvec_acc(a, x, y.span());
    return y;
}

void matvec_acc(const Mat& a, std::span<const Real> x, std::span<Real> y) {
    require_same_size(a.cols(), x.size(), "matvec");
    require_same_size(a.rows(), y.size(), "matvec");
    const std::size_t cols = a.cols();
    const Real* row = a.data();
    for (std::size_t r = 0; r < a.rows(); ++r, row += cols) {
        Real acc = 0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

Vec matvec_t(const Mat& a, std::span<const Real> x) {
    Vec y(a.cols());
    matvec_t_acc(a, x, y.span());
    return y;
}

void matvec_t_acc(const Mat& a, std::span<const Real> x, std::span<Real> y) {
    require_same_size(a.rows(), x.size(), "matvec_t");
    require_same_size(a.cols(), y.size(), "matvec_t");
    const std::size_t cols = a.cols();
    const Real* row = a.data();
    for (std::size_t r = 0; r < a.rows(); ++r, row += cols) {
        const Real xr = x[r];
        if (xr == Real(0)) continue;
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
    }
}

void add_outer(Mat& a, std::span<const Real> left, std::span<const Real> right, Real scale) {
    require_same_size(a.rows(), left.size(), "add_outer");
    require_same_size(a.cols(), right.size(), "add_outer");
    const std::size_t cols = a.cols();
    Real* row = a.data();
    for (std::size_t r = 0; r < a.rows(); ++r, row += cols) {
        const Real lr = scale * left[r];
        if (lr == Real(0)) continue;
        for (std::size_t c = 0; c < cols; ++c) row[c] += lr * right[c];
    }
}

Mat matmul(const Mat& a, const Mat& b) {
    require_same_size(a.cols(), b.rows(), "matmul");
    Mat out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Real aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
    require_same_size(a.size(), b.size(), "dot");
    Real acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Real norm(std::span<const Real> a) {
    return std::sqrt(dot(a, a));
}

Vec hadamard(std::span<const Real> a, std::span<const Real> b) {
    require_same_size(a.size(), b.size(), "hadamard");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

void axpy(Real scale, std::span<const Real> x, std::span<Real> y) {
    require_same_size(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

Real sigmoid(Real x) noexcept {
    // Branch keeps exp() from overflowing for large |x|.
    if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

Vec sigmoid(std::span<const Real> x) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

Vec tanh(std::span<const Real> x) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return out;
}

Real softplus(Real x) noexcept {
    return x > Real(30) ? x : std::log1p(std::exp(x));
}

Real cosine_sim(std::span<const Real> a, std::span<const Real> b) {
    require_same_size(a.size(), b.size(), "cosine_sim");
    const Real na = norm(a);
    const Real nb = norm(b);
    if (na < kCosineNormGuard || nb < kCosineNormGuard) return Real(0);
    return dot(a, b) / (na * nb);
}

}  // namespace dscmp
