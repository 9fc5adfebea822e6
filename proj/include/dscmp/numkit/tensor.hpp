#ifndef DSCMP_NUMKIT_TENSOR_HPP_
#define DSCMP_NUMKIT_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dscmp/numkit/errors.hpp"

namespace dscmp {

#ifdef DSCMP_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

/// Dense column vector. The length is fixed at construction.
class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t size, Real fill = Real(0)) : data_(size, fill) {}
    Vec(std::initializer_list<Real> values);
    /// Takes ownership of `values`; throws NumericError on a non-finite entry.
    explicit Vec(std::vector<Real> values);
    explicit Vec(std::span<const Real> values) : Vec(std::vector<Real>(values.begin(), values.end())) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    std::span<Real> span() noexcept { return data_; }
    std::span<const Real> span() const noexcept { return data_; }
    operator std::span<const Real>() const noexcept { return data_; }

    Vec& operator+=(std::span<const Real> other);
    Vec& operator-=(std::span<const Real> other);
    Vec& operator*=(Real scale) noexcept;

    void fill(Real value) noexcept;

    friend bool operator==(const Vec&, const Vec&) = default;

private:
    std::vector<Real> data_;
};

/// Dense row-major matrix. The shape is fixed at construction.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, Real fill = Real(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    /// Row-major payload; throws ShapeError on a size mismatch, NumericError on a non-finite entry.
    Mat(std::size_t rows, std::size_t cols, std::vector<Real> values);

    static Mat identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> span() noexcept { return data_; }
    std::span<const Real> span() const noexcept { return data_; }
    std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Mat& operator+=(const Mat& other);
    void fill(Real value) noexcept;

    bool same_shape(const Mat& other) const noexcept { return rows_ == other.rows_ && cols_ == other.cols_; }

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Real> data_;
};

bool all_finite(std::span<const Real> values) noexcept;

/// y = A x
Vec matvec(const Mat& a, std::span<const Real> x);
/// y += A x
void matvec_acc(const Mat& a, std::span<const Real> x, std::span<Real> y);
/// y = A^T x
Vec matvec_t(const Mat& a, std::span<const Real> x);
/// y += A^T x
void matvec_t_acc(const Mat& a, std::span<const Real> x, std::span<Real> y);
/// A += scale * a b^T
void add_outer(Mat& a, std::span<const Real> left, std::span<const Real> right, Real scale = Real(1));
Mat matmul(const Mat& a, const Mat& b);

Real dot(std::span<const Real> a, std::span<const Real> b);
Real norm(std::span<const Real> a);
Vec hadamard(std::span<const Real> a, std::span<const Real> b);
/// y += scale * x
void axpy(Real scale, std::span<const Real> x, std::span<Real> y);

Real sigmoid(Real x) noexcept;
Vec sigmoid(std::span<const Real> x);
Vec tanh(std::span<const Real> x);
Real softplus(Real x) noexcept;

/// Cosine similarity; 0 when either norm is below 1e-12.
Real cosine_sim(std::span<const Real> a, std::span<const Real> b);

inline constexpr Real kCosineNormGuard = Real(1e-12);

}  // namespace dscmp

#endif  // DSCMP_NUMKIT_TENSOR_HPP_
