#include "ptcflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ptcflow/errors.hpp"

namespace ptcflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto &r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("ragged matrix initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        m(i, i) = d[i];
    }
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        out[r] = (*this)(r, c);
    }
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    for (std::size_t r = 0; r < rows_; ++r) {
        (*this)(r, c) = values[r];
    }
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

Vector Matrix::diag() const {
    Vector d(std::min(rows_, cols_));
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = (*this)(i, i);
    }
    return d;
}

double Matrix::squared_norm() const {
    double s = 0.0;
    for (double v : data_) {
        s += v * v;
    }
    return s;
}

double Matrix::frobenius_norm() const { return std::sqrt(squared_norm()); }

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr && r0 + r < rows_; ++r) {
        for (std::size_t c = 0; c < nc && c0 + c < cols_; ++c) {
            b(r, c) = (*this)(r0 + r, c0 + c);
        }
    }
    return b;
}

Matrix operator*(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matrix product: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t l = 0; l < a.cols(); ++l) {
            const double ail = a(i, l);
            if (ail == 0.0) {
                continue;
            }
            auto bl = b.row(l);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                ci[j] += ail * bl[j];
            }
        }
    }
    return c;
}

namespace {
template <typename Op>
Matrix elementwise(const Matrix &a, const Matrix &b, Op op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("elementwise op: shapes differ");
    }
    Matrix c(a.rows(), a.cols());
    auto ad = a.data();
    auto bd = b.data();
    auto cd = c.data();
    for (std::size_t i = 0; i < cd.size(); ++i) {
        cd[i] = op(ad[i], bd[i]);
    }
    return c;
}
}  // namespace

Matrix operator+(const Matrix &a, const Matrix &b) { return elementwise(a, b, std::plus<>{}); }
Matrix operator-(const Matrix &a, const Matrix &b) { return elementwise(a, b, std::minus<>{}); }

Matrix operator*(double s, const Matrix &a) {
    Matrix c = a;
    for (double &v : c.data()) {
        v *= s;
    }
    return c;
}

Vector matvec(const Matrix &a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: dimension mismatch");
    }
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        y[i] = dot(a.row(i), x);
    }
    return y;
}

Vector matvec_transposed(const Matrix &a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_transposed: dimension mismatch");
    }
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        auto ri = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            y[j] += ri[j] * xi;
        }
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double orthogonality_residual(const Matrix &a) {
    return (a * a.transposed() - Matrix::identity(a.rows())).frobenius_norm();
}

double determinant(Matrix a) {
    const std::size_t n = a.rows();
    double det = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t pivot = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a(r, c)) > std::abs(a(pivot, c))) {
                pivot = r;
            }
        }
        if (a(pivot, c) == 0.0) {
            return 0.0;
        }
        if (pivot != c) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(pivot, j), a(c, j));
            }
            det = -det;
        }
        det *= a(c, c);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a(r, c) / a(c, c);
            for (std::size_t j = c; j < n; ++j) {
                a(r, j) -= f * a(c, j);
            }
        }
    }
    return det;
}

}  // namespace ptcflow
