#pragma once

// Complex-matrix utilities shared by the precoding layers: vectorization,
// Kronecker products, Hermitian eigendecomposition, numeric rank and PSD
// rank-one factor extraction. Everything is a pure function over Eigen
// dense types; safe to call from concurrent workers.

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "twrs/errors.hpp"

namespace twrs {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Complex = std::complex<double>;

namespace numkit {

// Column-major stacking; the fixed convention every quadratic-form assembly
// in this project relies on.
CVector vec_mat(const CMatrix& X);

// Inverse of vec_mat for a known target shape.
CMatrix unvec(const CVector& v, Eigen::Index rows, Eigen::Index cols);

CMatrix kron_prod(const CMatrix& A, const CMatrix& B);

struct HermitianEig {
    RVector values;   // sorted descending
    CMatrix vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

// Throws NotHermitian when ||X - X^H|| exceeds `tol` relative to ||X||.
HermitianEig hermitian_eig(const CMatrix& X, double tol = 1e-9);

// Number of eigenvalues above rel_tol * max eigenvalue. Zero matrix has rank 0.
int numeric_rank(const CMatrix& X, double rel_tol = 1e-6);

// v with v v^H ~= X for a PSD X of numeric rank one; throws RankNotOne otherwise.
CVector rank1_from_psd(const CMatrix& X, double rel_tol = 1e-6);

// V with V V^H = X (columns scaled by sqrt of eigenvalues, rank columns kept).
// Small negative eigenvalues from solver tolerance are clipped to zero.
CMatrix psd_factor(const CMatrix& X, double rel_tol = 1e-9);

bool is_hermitian(const CMatrix& X, double tol = 1e-9);

}  // namespace numkit
}  // namespace twrs
