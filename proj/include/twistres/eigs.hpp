#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "twistres/errors.hpp"

namespace twistres {

struct SymmetricEigs {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // Euclidean-orthonormal columns
    int iterations = 0;
    double max_residual = 0.0;
};

/// Lowest `count` eigenpairs of a sparse SPD matrix by block inverse
/// (shift-invert at zero) subspace iteration with Rayleigh–Ritz.
/// Convergence: ||A x - t x|| <= tol * t * ||x|| for every returned pair.
inline SymmetricEigs lowest_eigenpairs(const Eigen::SparseMatrix<double>& A, int count, double tol = 1e-10,
                                       int max_iterations = 2000) {
    const Eigen::Index n = A.rows();
    require(count >= 1 && count < n, "lowest_eigenpairs: need 1 <= count < dimension");
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw numeric_failure("sparse LDLT factorization failed");

    const Eigen::Index block = std::min<Eigen::Index>(n, count + std::max(6, count / 2));
    std::mt19937_64 rng(0x7457u);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd X(n, block);
    for (Eigen::Index j = 0; j < block; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = gauss(rng);

    SymmetricEigs out;
    for (int it = 1; it <= max_iterations; ++it) {
        Eigen::MatrixXd Y(n, block);
        for (Eigen::Index j = 0; j < block; ++j) Y.col(j) = ldlt.solve(X.col(j));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
        Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);
        Eigen::MatrixXd AQ = A * Q;
        Eigen::MatrixXd H = Q.transpose() * AQ;
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(H);
        X = Q * small.eigenvectors();
        const Eigen::MatrixXd AX = AQ * small.eigenvectors();

        double worst = 0.0;
        for (int j = 0; j < count; ++j) {
            const double t = small.eigenvalues()(j);
            const double r = (AX.col(j) - t * X.col(j)).norm() / (std::abs(t) * X.col(j).norm());
            worst = std::max(worst, r);
        }
        if (worst <= tol) {
            out.values = small.eigenvalues().head(count);
            out.vectors = X.leftCols(count);
            out.iterations = it;
            out.max_residual = worst;
            return out;
        }
    }
    throw numeric_failure("subspace iteration did not reach residual " + std::to_string(tol));
}

}  // namespace twistres
