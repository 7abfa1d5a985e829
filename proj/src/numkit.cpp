#include "twrs/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace twrs::numkit {

CVector vec_mat(const CMatrix& X) {
    CVector v(X.size());
    Eigen::Index n = 0;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) v(n++) = X(i, j);
    return v;
}

CMatrix unvec(const CVector& v, Eigen::Index rows, Eigen::Index cols) {
    require(v.size() == rows * cols, "unvec: size mismatch");
    CMatrix X(rows, cols);
    Eigen::Index n = 0;
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = v(n++);
    return X;
}

CMatrix kron_prod(const CMatrix& A, const CMatrix& B) {
    CMatrix K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

bool is_hermitian(const CMatrix& X, double tol) {
    if (X.rows() != X.cols()) return false;
    double scale = std::max(1.0, X.norm());
    return (X - X.adjoint()).norm() <= tol * scale;
}

HermitianEig hermitian_eig(const CMatrix& X, double tol) {
    if (!is_hermitian(X, tol)) throw NotHermitian("hermitian_eig: input not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> es((X + X.adjoint()) * 0.5);
    if (es.info() != Eigen::Success) throw NumericalFailure("hermitian_eig: eigensolver failed");
    // Eigen sorts ascending; flip to descending.
    const Eigen::Index n = X.rows();
    HermitianEig out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = es.eigenvalues()(n - 1 - i);
        out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

int numeric_rank(const CMatrix& X, double rel_tol) {
    auto eig = hermitian_eig(X);
    double lmax = eig.values.size() ? eig.values(0) : 0.0;
    if (lmax <= 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i)
        if (eig.values(i) > rel_tol * lmax) ++r;
    return r;
}

CVector rank1_from_psd(const CMatrix& X, double rel_tol) {
    auto eig = hermitian_eig(X);
    double lmax = eig.values.size() ? eig.values(0) : 0.0;
    if (lmax <= 0.0) throw RankNotOne("rank1_from_psd: zero matrix");
    int r = 0;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i)
        if (eig.values(i) > rel_tol * lmax) ++r;
    if (r != 1) throw RankNotOne("rank1_from_psd: numeric rank != 1");
    return std::sqrt(lmax) * eig.vectors.col(0);
}

CMatrix psd_factor(const CMatrix& X, double rel_tol) {
    auto eig = hermitian_eig(X);
    double lmax = eig.values.size() ? std::max(eig.values(0), 0.0) : 0.0;
    // Solver output is PSD only to tolerance; clip slightly negative eigenvalues.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        if (eig.values(i) > rel_tol * std::max(lmax, 1.0)) keep.push_back(i);
    }
    CMatrix V(X.rows(), static_cast<Eigen::Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k)
        V.col(static_cast<Eigen::Index>(k)) =
            std::sqrt(eig.values(keep[k])) * eig.vectors.col(keep[k]);
    return V;
}

}  // namespace twrs::numkit
