#pragma once

// Backend-agnostic SOCP / SDP problem records and solve contracts.
// The default backend is the built-in dense cone solver (conelp); complex
// Hermitian data enters through the 2n real embedding.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "twrs/numkit.hpp"

namespace twrs {

// ||C x + d||_2 <= e'x + f
struct SocpCone {
    RMatrix C;
    RVector d;
    RVector e;
    double f = 0.0;
};

struct SocpProblem {
    RVector c;  // minimize c'x
    std::vector<SocpCone> cones;
    RMatrix Ain;  // Ain x <= bin (may be 0x n)
    RVector bin;
    RMatrix Aeq;  // Aeq x = beq (may be 0x n)
    RVector beq;

    int num_vars() const { return static_cast<int>(c.size()); }
};

enum class Sense { LE, EQ, GE };

struct SdpConstraint {
    RMatrix A;  // symmetric
    Sense sense = Sense::LE;
    double b = 0.0;
};

// minimize Tr(C X) s.t. Tr(A_i X) sense b_i, X psd (n x n)
struct SdpProblem {
    RMatrix C;
    std::vector<SdpConstraint> constraints;
    int n = 0;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

struct SolverOptions {
    std::string backend = "conelp";  // config key solver.backend
    double eps = 1e-7;               // config key solver.eps
    int max_iters = 100;
};

struct ConicSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    RVector x;                  // SOCP decision vector / svec(X) for SDP
    RMatrix X;                  // SDP primal matrix (n x n)
    std::vector<double> duals;  // one multiplier per declared constraint
    double objective = 0.0;
    double dual_objective = 0.0;
    double feas_residual = 0.0;  // independent re-check, not the solver's report
    int iterations = 0;
};

ConicSolution solve_socp(const SocpProblem& p, const SolverOptions& opts = {});
ConicSolution solve_sdp(const SdpProblem& p, const SolverOptions& opts = {});

// [[Re H, -Im H], [Im H, Re H]]; throws NotHermitian.
RMatrix hermitian_embed(const CMatrix& H);

// Complex Hermitian SDP solved through the real embedding. Constraint senses and
// bounds are in the complex domain: Tr(A_i X) sense b_i with A_i Hermitian.
struct HermitianSdpConstraint {
    CMatrix A;
    Sense sense = Sense::LE;
    double b = 0.0;
};

struct HermitianSdpSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix X;
    std::vector<double> duals;
    double objective = 0.0;
    int iterations = 0;
};

HermitianSdpSolution solve_hermitian_sdp(const CMatrix& C,
                                         const std::vector<HermitianSdpConstraint>& cons,
                                         const SolverOptions& opts = {});

}  // namespace twrs
