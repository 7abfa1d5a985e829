#pragma once

// Dense primal-dual interior-point solver for cone linear programs
//
//     minimize    c'x
//     subject to  A x = b
//                 G x + s = h,   s in K
//
// where K is a product of the nonnegative orthant, second-order cones and
// positive semidefinite cones (svec coordinates, sqrt(2) off-diagonal
// scaling). Uses the homogeneous self-dual embedding with Nesterov-Todd
// scaling and a Mehrotra predictor-corrector step, so primal/dual
// infeasibility is reported through certificates rather than heuristics.
//
// Aimed at the small dense problems this project generates (a few hundred
// rows at most); no sparsity is exploited.

#include <Eigen/Dense>
#include <vector>

#include "twrs/numkit.hpp"

namespace twrs::conelp {

struct ConeDims {
    int nonneg = 0;
    std::vector<int> soc;  // dims of second-order cone blocks (each >= 1)
    std::vector<int> psd;  // matrix orders of PSD blocks

    int rows() const;   // total rows of (G, h) spanned by the cones
    int degree() const; // barrier degree (step normalization)
};

enum class Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
};

struct Options {
    double feastol = 5e-8;
    double abstol = 5e-8;
    double reltol = 5e-8;
    int max_iters = 100;
};

struct Result {
    Status status = Status::NumericalFailure;
    RVector x;  // primal (already divided by tau)
    RVector y;  // equality duals
    RVector z;  // cone duals
    RVector s;  // cone slacks
    double pobj = 0.0;
    double dobj = 0.0;
    double gap = 0.0;
    double pres = 0.0;
    double dres = 0.0;
    int iterations = 0;
};

Result solve(const RVector& c, const RMatrix& A, const RVector& b, const RMatrix& G,
             const RVector& h, const ConeDims& dims, const Options& opts = {});

// Symmetric vectorization: column-major lower triangle, off-diagonal
// entries scaled by sqrt(2) so that svec(A)'svec(B) = Tr(AB).
RVector svec(const RMatrix& S);
RMatrix smat(const RVector& v);
int svec_len(int n);

}  // namespace twrs::conelp
