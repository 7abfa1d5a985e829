#include "twrs/bs_precoding.hpp"

#include <cmath>

namespace twrs {

namespace {

// x = [Re b(0,0), Im b(0,0), Re b(1,0), ... column-major ..., alpha]
int re_idx(int j, int i, int N) { return 2 * (i * N + j); }
int im_idx(int j, int i, int N) { return 2 * (i * N + j) + 1; }

// writes the functionals Re(t * b_i) and Im(t * b_i) into two rows
void fill_complex_rows(RMatrix& C, int row_re, int row_im, int col_block,
                       const Eigen::RowVectorXcd& t, int N) {
    for (int j = 0; j < N; ++j) {
        C(row_re, re_idx(j, col_block, N)) = t(j).real();
        C(row_re, im_idx(j, col_block, N)) = -t(j).imag();
        C(row_im, re_idx(j, col_block, N)) = t(j).imag();
        C(row_im, im_idx(j, col_block, N)) = t(j).real();
    }
}

RVector real_part_functional(const Eigen::RowVectorXcd& t, int col_block, int N, int nvar) {
    RVector e = RVector::Zero(nvar);
    for (int j = 0; j < N; ++j) {
        e(re_idx(j, col_block, N)) = t(j).real();
        e(im_idx(j, col_block, N)) = -t(j).imag();
    }
    return e;
}

struct BsConstants {
    CMatrix FH1;                 // Ftilde * H1
    std::vector<Eigen::RowVectorXcd> T;  // g_2k^T Ftilde H1
    double c_rs = 0.0;           // Tr(Ftilde (H2 P P^H H2^H + s_R^2 I) Ftilde^H)
    std::vector<double> c_k;     // uplink CCI + relay-noise term per stream
};

BsConstants bs_constants(const CMatrix& Ftilde, const ChannelSet& ch) {
    BsConstants c;
    c.FH1 = Ftilde * ch.H1;
    CMatrix P = ch.P();
    CMatrix R = ch.H2 * P * P.adjoint() * ch.H2.adjoint() +
                ch.sigma2_R * CMatrix::Identity(ch.M(), ch.M());
    c.c_rs = (Ftilde * R * Ftilde.adjoint()).trace().real();
    for (int k = 0; k < ch.K(); ++k) {
        Eigen::RowVectorXcd gF = ch.G2.row(k) * Ftilde;
        c.T.push_back(gF * ch.H1);
        double ck = ch.sigma2_R * gF.squaredNorm();
        for (int i = 0; i < ch.K(); ++i) {
            if (i == k) continue;
            ck += ch.P_k[i] * std::norm((gF * ch.H2.col(i)).value());
        }
        c.c_k.push_back(ck);
    }
    return c;
}

}  // namespace

SocpProblem bs_socp_build(const CMatrix& Ftilde, const ChannelSet& ch,
                          const std::vector<double>& lambda) {
    ch.validate();
    require(Ftilde.rows() == ch.M() && Ftilde.cols() == ch.M(), "bs_socp_build: Ftilde shape");
    require(static_cast<int>(lambda.size()) == ch.K(), "bs_socp_build: lambda size");
    require(Ftilde.norm() > 0, "bs_socp_build: Ftilde must be nonzero");

    const int N = ch.N(), M = ch.M(), K = ch.K();
    const int nvar = 2 * N * K + 1;
    const int a_idx = 2 * N * K;
    BsConstants cs = bs_constants(Ftilde, ch);

    SocpProblem p;
    p.c = RVector::Zero(nvar);
    p.c(a_idx) = -1.0;  // maximize alpha

    // BS power: ||vec(Btilde)|| <= sqrt(P_B) alpha
    {
        SocpCone cone;
        cone.C = RMatrix::Zero(2 * N * K, nvar);
        cone.C.leftCols(2 * N * K).setIdentity();
        cone.d = RVector::Zero(2 * N * K);
        cone.e = RVector::Zero(nvar);
        cone.e(a_idx) = std::sqrt(ch.P_B);
        cone.f = 0.0;
        p.cones.push_back(std::move(cone));
    }

    // RS power: ||(vec(Ftilde H1 Btilde), sqrt(c_rs) alpha)|| <= sqrt(P_R)
    {
        SocpCone cone;
        cone.C = RMatrix::Zero(2 * M * K + 1, nvar);
        cone.d = RVector::Zero(2 * M * K + 1);
        for (int i = 0; i < K; ++i)
            for (int r = 0; r < M; ++r)
                fill_complex_rows(cone.C, 2 * (i * M + r), 2 * (i * M + r) + 1, i,
                                  cs.FH1.row(r), N);
        cone.C(2 * M * K, a_idx) = std::sqrt(cs.c_rs);
        cone.e = RVector::Zero(nvar);
        cone.f = std::sqrt(ch.P_R);
        p.cones.push_back(std::move(cone));
    }

    // per-stream SINR cones; a nonpositive target never binds and is skipped
    for (int k = 0; k < K; ++k) {
        if (lambda[k] <= 0) continue;
        SocpCone cone;
        cone.C = RMatrix::Zero(2 * K + 2, nvar);
        cone.d = RVector::Zero(2 * K + 2);
        for (int i = 0; i < K; ++i)
            fill_complex_rows(cone.C, 2 * i, 2 * i + 1, i, cs.T[k], N);
        cone.C(2 * K, a_idx) = std::sqrt(cs.c_k[k]);
        cone.d(2 * K + 1) = std::sqrt(ch.sigma2_k[k]);
        cone.e = std::sqrt(1.0 + 1.0 / lambda[k]) *
                 real_part_functional(cs.T[k], k, N, nvar);
        cone.f = 0.0;
        p.cones.push_back(std::move(cone));

        // rotation argument: pin Im(T_k b_k) = 0
        RMatrix pin = RMatrix::Zero(1, nvar);
        for (int j = 0; j < N; ++j) {
            pin(0, re_idx(j, k, N)) = cs.T[k](j).imag();
            pin(0, im_idx(j, k, N)) = cs.T[k](j).real();
        }
        if (p.Aeq.rows() == 0) {
            p.Aeq = pin;
            p.beq = RVector::Zero(1);
        } else {
            RMatrix A(p.Aeq.rows() + 1, nvar);
            A << p.Aeq, pin;
            p.Aeq = A;
            p.beq = RVector::Zero(A.rows());
        }
    }
    p.Ain = RMatrix(0, nvar);
    p.bin = RVector(0);
    if (p.Aeq.rows() == 0) {
        p.Aeq = RMatrix(0, nvar);
        p.beq = RVector(0);
    }
    return p;
}

BsDesignResult solve_bs_precoding(const CMatrix& Ftilde, const ChannelSet& ch,
                                  const std::vector<double>& lambda,
                                  const SolverOptions& opts) {
    BsDesignResult res;
    const int N = ch.N(), K = ch.K();
    BsConstants cs = bs_constants(Ftilde, ch);

    // fast necessary condition: even with all BS power on stream k and the
    // cross terms dropped, the target must be reachable within the relay
    // power cap on alpha
    for (int k = 0; k < K; ++k) {
        if (lambda[k] <= 0) continue;
        double gain = cs.T[k].squaredNorm() * ch.P_B / lambda[k] - cs.c_k[k];
        if (gain <= 0 || (ch.P_R / cs.c_rs) * gain < ch.sigma2_k[k] * (1.0 - 1e-9)) {
            res.status = SolveStatus::Infeasible;
            return res;
        }
    }

    SocpProblem p = bs_socp_build(Ftilde, ch, lambda);
    ConicSolution sol = solve_socp(p, opts);
    res.status = sol.status;
    res.iterations = sol.iterations;
    if (sol.status != SolveStatus::Optimal) return res;

    double alpha = sol.x(2 * N * K);
    if (!(alpha > 1e-12)) {
        res.status = SolveStatus::Infeasible;
        return res;
    }
    CMatrix Btilde(N, K);
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < N; ++j)
            Btilde(j, i) = Complex(sol.x(2 * (i * N + j)), sol.x(2 * (i * N + j) + 1));
    res.alpha = alpha;
    res.B = Btilde / alpha;
    for (int k = 0; k < K; ++k)
        res.achieved_sinrs.push_back(downlink_sinr(k, res.B, alpha * Ftilde, ch));
    return res;
}

}  // namespace twrs
