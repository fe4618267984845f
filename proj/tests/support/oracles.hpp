#pragma once

// Independent reference computations for tests. Eigen supplies the dense linear algebra here so
// that nothing in this file shares code with the library under test.

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "ptcflow/linalg.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const ptcflow::Matrix &m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            e(i, j) = m(i, j);
        }
    }
    return e;
}

inline ptcflow::Matrix from_eigen(const Eigen::MatrixXd &e) {
    ptcflow::Matrix m(e.rows(), e.cols());
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.cols(); ++j) {
            m(i, j) = e(i, j);
        }
    }
    return m;
}

inline ptcflow::Matrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ptcflow::Matrix m(rows, cols);
    for (double &v : m.data()) {
        v = g(rng);
    }
    return m;
}

/// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with the R-diagonal sign fix.
inline ptcflow::Matrix random_orthogonal(std::size_t k, std::uint64_t seed) {
    const Eigen::MatrixXd a = to_eigen(random_gaussian(k, k, seed));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR();
    for (std::size_t j = 0; j < k; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    return from_eigen(q);
}

inline double max_abs_diff(const ptcflow::Matrix &a, const ptcflow::Matrix &b) {
    return (to_eigen(a) - to_eigen(b)).cwiseAbs().maxCoeff();
}

inline double rel_frobenius(const ptcflow::Matrix &approx, const ptcflow::Matrix &ref) {
    return (to_eigen(approx) - to_eigen(ref)).norm() / to_eigen(ref).norm();
}

}  // namespace oracle
