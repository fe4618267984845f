#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ptcflow {

using Vector = std::vector<double>;

/// Dense row-major real matrix sized for k x k photonic blocks and small layers.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> d);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double &operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    Vector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;
    Vector diag() const;
    double frobenius_norm() const;
    double squared_norm() const;

    /// Copy of the sub-block starting at (r0, c0); entries past the edge read as zero.
    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;

    bool operator==(const Matrix &) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix &a, const Matrix &b);
Matrix operator+(const Matrix &a, const Matrix &b);
Matrix operator-(const Matrix &a, const Matrix &b);
Matrix operator*(double s, const Matrix &a);

Vector matvec(const Matrix &a, std::span<const double> x);
/// a^T x without forming the transpose.
Vector matvec_transposed(const Matrix &a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// ||A A^T - I||_F
double orthogonality_residual(const Matrix &a);

/// Determinant by partial-pivot LU; intended for small test-size matrices.
double determinant(Matrix a);

}  // namespace ptcflow
