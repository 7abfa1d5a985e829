#pragma once

// RS precoding with the BS precoder fixed: quadratic-form assembly over
// f = vec(F), homogenization, the lifted semidefinite relaxation, rank-one
// recovery (slack-based reduction, joint-diagonalizing decompositions, the
// all-active rank-2 fallback, Gaussian randomization for K > 2) and the
// alternating minimization loops for Total-MSE and weighted sum rate.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twrs/conic.hpp"
#include "twrs/system_model.hpp"

namespace twrs {

struct QcqpInstance {
    CMatrix Q0;   // M^2 x M^2, Hermitian PSD
    CVector q0;   // M^2
    double q0s = 0.0;
    CMatrix Qx;   // M^2 x M^2, Hermitian PD
    std::vector<CMatrix> Qk;      // one per enforced stream constraint
    std::vector<double> rhs_k;    // lambda_k * sigma_k^2
    std::vector<int> stream_of;   // original stream index per entry of Qk
    double P_R = 0.0;
    int M = 0;

    double objective(const CVector& f) const;
    double power(const CVector& f) const;
    double sinr_form(int idx, const CVector& f) const;
    bool feasible(const CVector& f, double rel_tol = 1e-7) const;
};

struct HomogenizedQcqp {
    CMatrix Qt0;
    CMatrix Qtx;
    std::vector<CMatrix> Qtk;
    CMatrix Q;  // corner selector, Tr(Q X) = 1
    int dim = 0;  // M^2 + 1
    int M = 0;
};

struct SdrOutcome {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix X;                   // (M^2+1) x (M^2+1) Hermitian PSD
    std::vector<double> duals;   // y_k per Qtk, then y_x, then the corner multiplier
    double objective_lb = 0.0;   // optimum of the relaxation
    int rank = 0;
    std::vector<bool> active;    // per inequality: Qtk entries then Qtx last
    int iterations = 0;
};

QcqpInstance assemble_qcqp(const CMatrix& W, const CMatrix& A, const CMatrix& B,
                           const ChannelSet& ch, const std::vector<double>& lambda);

HomogenizedQcqp homogenize_qcqp(const QcqpInstance& q);

SdrOutcome solve_sdr(const HomogenizedQcqp& h, const SolverOptions& opts = {},
                     double activity_tol = 1e-6);

// One slack-based reduction pass; requires an inactive inequality and
// rank >= 2. Rank drops by at least one, objective and complementarity are
// preserved. Rank-one input is returned unchanged.
SdrOutcome reduce_rank_by_slack(const SdrOutcome& out, const HomogenizedQcqp& h);

// All-active path for K <= 2 and rank >= 3: joint decomposition whose leading
// vector annihilates every constraint form. Throws PreconditionViolated for
// the all-active rank-2 case.
SdrOutcome reduce_rank_d3(const SdrOutcome& out, const HomogenizedQcqp& h);

// All-active rank-2 fallback: feasible rank-one point meeting every
// constraint with equality; suboptimal in general.
SdrOutcome suboptimal_d2(const SdrOutcome& out, const HomogenizedQcqp& h);

// Extracts f from a rank-one lifted solution.
CVector extract_rank_one(const SdrOutcome& out);

// Rank-one decomposition X = sum_r p_r p_r^H whose columns all take the
// average value Tr(A_l X)/rank on both Hermitian forms (complex pairing).
CMatrix joint_pair_decomposition(const CMatrix& X, const CMatrix& A1, const CMatrix& A2);

// Solves the (f, Ftilde) covariance relaxation and draws Gaussian candidates;
// each sample is scaled onto the power budget when violated and kept only if
// its stream constraints hold. Returns the feasible sample with the least
// objective, or nullopt.
std::optional<CVector> randomize_candidates(const QcqpInstance& q, int samples,
                                            std::mt19937_64& rng,
                                            const SolverOptions& opts = {});
std::optional<CVector> randomize_from_sdr(const QcqpInstance& q, const SdrOutcome& out,
                                          int samples, std::mt19937_64& rng);

// A = E(F) / ln 2 (the scale cancels in the F-subproblem's argmax).
CMatrix update_weight_matrix(const CMatrix& F, const ChannelSet& ch);

struct RsOptions {
    double tol = 1e-4;
    int max_iter = 0;  // 0 picks 20 for K <= 2 and 30 for K > 2
    int rand_samples = 2000;
    double activity_tol = 1e-6;
    std::uint64_t seed = 1;
    SolverOptions solver;
    bool freeze_weight = false;  // diagnostic: keep A = I in the rate loop
    // Starting precoder; an infeasible start is allowed, the first update
    // then moves onto the feasible set before the monotone descent begins.
    std::optional<CMatrix> initial_F;
};

struct RsStepResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix F;
    std::string branch;  // extraction path taken, for audit traces
};

RsStepResult rs_step_update_F(const CMatrix& W, const CMatrix& A, const CMatrix& B,
                              const ChannelSet& ch, const std::vector<double>& lambda,
                              const CMatrix& prev_F, const RsOptions& opts,
                              std::mt19937_64& rng);

struct RsResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix F;
    CMatrix W;
    CMatrix A;
    MetricsRecord metrics;
    std::vector<std::string> branch_audit;
};

// Feasible starting precoder: the budget-scaled identity when it meets the
// targets, otherwise an extraction from the power-minimizing relaxation.
std::optional<CMatrix> find_initial_F(const CMatrix& B, const ChannelSet& ch,
                                      const std::vector<double>& lambda,
                                      const RsOptions& opts = {});

RsResult rs_precode_mse(const CMatrix& B, const ChannelSet& ch,
                        const std::vector<double>& lambda, const RsOptions& opts = {});
RsResult rs_precode_rate(const CMatrix& B, const ChannelSet& ch,
                         const std::vector<double>& lambda, const RsOptions& opts = {});

}  // namespace twrs
