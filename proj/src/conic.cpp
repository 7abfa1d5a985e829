#include "twrs/conic.hpp"

#include <algorithm>
#include <cmath>

#include "twrs/conelp.hpp"

namespace twrs {

namespace {

conelp::Options to_conelp_opts(const SolverOptions& o) {
    conelp::Options c;
    c.feastol = 0.5 * o.eps;
    c.abstol = 0.5 * o.eps;
    c.reltol = 0.5 * o.eps;
    c.max_iters = o.max_iters;
    return c;
}

SolveStatus map_status(conelp::Status s) {
    switch (s) {
        case conelp::Status::Optimal: return SolveStatus::Optimal;
        case conelp::Status::PrimalInfeasible: return SolveStatus::Infeasible;
        case conelp::Status::DualInfeasible: return SolveStatus::Unbounded;
        default: return SolveStatus::NumericalFailure;
    }
}

}  // namespace

ConicSolution solve_socp(const SocpProblem& p, const SolverOptions& opts) {
    const int n = p.num_vars();
    const int n_in = static_cast<int>(p.bin.size());
    require(p.Ain.rows() == n_in && (n_in == 0 || p.Ain.cols() == n),
            "solve_socp: Ain/bin mismatch");
    const int n_eq = static_cast<int>(p.beq.size());
    require(p.Aeq.rows() == n_eq && (n_eq == 0 || p.Aeq.cols() == n),
            "solve_socp: Aeq/beq mismatch");

    conelp::ConeDims dims;
    dims.nonneg = n_in;
    int m = n_in;
    for (const auto& cone : p.cones) {
        require(cone.C.cols() == n && cone.e.size() == n && cone.d.size() == cone.C.rows(),
                "solve_socp: cone dimension mismatch");
        dims.soc.push_back(static_cast<int>(cone.C.rows()) + 1);
        m += static_cast<int>(cone.C.rows()) + 1;
    }

    RMatrix G = RMatrix::Zero(m, n);
    RVector h = RVector::Zero(m);
    std::vector<double> row_scale(n_in, 1.0), cone_scale;
    int row = 0;
    if (n_in > 0) {
        for (int i = 0; i < n_in; ++i) {
            double sc = std::max(1e-8, std::max(p.Ain.row(i).norm(), std::abs(p.bin(i))));
            row_scale[i] = sc;
            G.row(row + i) = p.Ain.row(i) / sc;
            h(row + i) = p.bin(i) / sc;
        }
        row += n_in;
    }
    for (const auto& cone : p.cones) {
        // one positive scalar per cone block keeps the cone geometry intact
        // while normalizing the data scale
        double sc = std::max({1e-8, cone.C.norm(), cone.d.norm(), cone.e.norm(),
                              std::abs(cone.f)});
        cone_scale.push_back(sc);
        G.row(row) = -cone.e.transpose() / sc;
        h(row) = cone.f / sc;
        const int q = static_cast<int>(cone.C.rows());
        G.middleRows(row + 1, q) = -cone.C / sc;
        h.segment(row + 1, q) = cone.d / sc;
        row += q + 1;
    }

    RMatrix Aeq = n_eq ? p.Aeq : RMatrix(0, n);
    RVector beq = n_eq ? p.beq : RVector(0);
    auto r = conelp::solve(p.c, Aeq, beq, G, h, dims, to_conelp_opts(opts));

    ConicSolution sol;
    sol.status = map_status(r.status);
    sol.iterations = r.iterations;
    if (sol.status != SolveStatus::Optimal) return sol;
    sol.x = r.x;
    sol.objective = r.pobj;
    sol.dual_objective = r.dobj;
    // duals: inequalities first, then one scalar per cone (its multiplier on
    // the linear right-hand side), then equalities; normalization undone
    for (int i = 0; i < n_in; ++i) sol.duals.push_back(r.z(i) / row_scale[i]);
    row = n_in;
    for (size_t k = 0; k < p.cones.size(); ++k) {
        sol.duals.push_back(r.z(row) / cone_scale[k]);
        row += static_cast<int>(p.cones[k].C.rows()) + 1;
    }
    for (int i = 0; i < n_eq; ++i) sol.duals.push_back(r.y(i));

    // independent feasibility re-check
    double resid = 0.0;
    for (int i = 0; i < n_in; ++i)
        resid = std::max(resid, p.Ain.row(i).dot(sol.x) - p.bin(i));
    for (int i = 0; i < n_eq; ++i)
        resid = std::max(resid, std::abs(p.Aeq.row(i).dot(sol.x) - p.beq(i)));
    for (const auto& cone : p.cones)
        resid = std::max(resid, (cone.C * sol.x + cone.d).norm() -
                                    (cone.e.dot(sol.x) + cone.f));
    sol.feas_residual = resid;
    if (resid > 100.0 * opts.eps * std::max(1.0, sol.x.norm()))
        sol.status = SolveStatus::NumericalFailure;
    return sol;
}

ConicSolution solve_sdp(const SdpProblem& p, const SolverOptions& opts) {
    const int n = p.n;
    require(p.C.rows() == n && p.C.cols() == n, "solve_sdp: cost matrix size");
    const int nsv = conelp::svec_len(n);

    int n_in = 0, n_eq = 0;
    for (const auto& con : p.constraints) {
        require(con.A.rows() == n && con.A.cols() == n, "solve_sdp: constraint size");
        (con.sense == Sense::EQ ? n_eq : n_in)++;
    }

    conelp::ConeDims dims;
    dims.nonneg = n_in;
    dims.psd.push_back(n);
    const int m = n_in + nsv;

    // constraint/objective normalization: conditions the iteration when the
    // data matrices live on very different scales
    const double cscale = std::max(1e-8, p.C.norm());
    std::vector<double> ascale;

    RMatrix G = RMatrix::Zero(m, nsv);
    RVector h = RVector::Zero(m);
    RMatrix Aeq = RMatrix::Zero(n_eq, nsv);
    RVector beq = RVector::Zero(n_eq);
    int irow = 0, erow = 0;
    for (const auto& con : p.constraints) {
        double sc = std::max(1e-8, std::max(con.A.norm(), std::abs(con.b)));
        ascale.push_back(sc);
        RVector a = conelp::svec((con.A + con.A.transpose()) * (0.5 / sc));
        switch (con.sense) {
            case Sense::LE:
                G.row(irow) = a.transpose();
                h(irow) = con.b / sc;
                ++irow;
                break;
            case Sense::GE:
                G.row(irow) = -a.transpose();
                h(irow) = -con.b / sc;
                ++irow;
                break;
            case Sense::EQ:
                Aeq.row(erow) = a.transpose();
                beq(erow) = con.b / sc;
                ++erow;
                break;
        }
    }
    // X psd: s_block = svec(X)
    G.bottomRows(nsv) = -RMatrix::Identity(nsv, nsv);

    RVector c = conelp::svec((p.C + p.C.transpose()) * (0.5 / cscale));
    auto r = conelp::solve(c, Aeq, beq, G, h, dims, to_conelp_opts(opts));

    ConicSolution sol;
    sol.status = map_status(r.status);
    sol.iterations = r.iterations;
    if (sol.status != SolveStatus::Optimal) return sol;
    sol.x = r.x;
    sol.X = conelp::smat(r.x);
    sol.objective = r.pobj * cscale;
    sol.dual_objective = r.dobj * cscale;

    // multipliers in declared order, with GE rows mapped back to the
    // Lagrangian convention L = Tr(CX) + sum y_i (Tr(A_i X) - b_i), undoing
    // the normalization
    irow = 0;
    erow = 0;
    size_t ci = 0;
    for (const auto& con : p.constraints) {
        double us = cscale / ascale[ci++];
        switch (con.sense) {
            case Sense::LE: sol.duals.push_back(r.z(irow++) * us); break;
            case Sense::GE: sol.duals.push_back(-r.z(irow++) * us); break;
            case Sense::EQ: sol.duals.push_back(r.y(erow++) * us); break;
        }
    }

    // independent feasibility re-check
    double resid = 0.0;
    for (const auto& con : p.constraints) {
        double v = (con.A.transpose() * sol.X).trace();
        switch (con.sense) {
            case Sense::LE: resid = std::max(resid, v - con.b); break;
            case Sense::GE: resid = std::max(resid, con.b - v); break;
            case Sense::EQ: resid = std::max(resid, std::abs(v - con.b)); break;
        }
    }
    Eigen::SelfAdjointEigenSolver<RMatrix> es(sol.X);
    resid = std::max(resid, -es.eigenvalues().minCoeff());
    sol.feas_residual = resid;
    if (resid > 100.0 * opts.eps * std::max(1.0, sol.X.norm()))
        sol.status = SolveStatus::NumericalFailure;
    return sol;
}

RMatrix hermitian_embed(const CMatrix& H) {
    if (!numkit::is_hermitian(H, 1e-9))
        throw NotHermitian("hermitian_embed: input not Hermitian");
    const int n = static_cast<int>(H.rows());
    RMatrix E(2 * n, 2 * n);
    E.topLeftCorner(n, n) = H.real();
    E.topRightCorner(n, n) = -H.imag();
    E.bottomLeftCorner(n, n) = H.imag();
    E.bottomRightCorner(n, n) = H.real();
    return (E + E.transpose()) * 0.5;
}

HermitianSdpSolution solve_hermitian_sdp(const CMatrix& C,
                                         const std::vector<HermitianSdpConstraint>& cons,
                                         const SolverOptions& opts) {
    const int n = static_cast<int>(C.rows());
    SdpProblem p;
    p.n = 2 * n;
    p.C = hermitian_embed(C);
    for (const auto& con : cons) {
        // Tr(embed(A) embed(X)) = 2 Tr(A X), so real bounds carry a factor 2
        p.constraints.push_back({hermitian_embed(con.A), con.sense, 2.0 * con.b});
    }
    auto rs = solve_sdp(p, opts);

    HermitianSdpSolution sol;
    sol.status = rs.status;
    sol.iterations = rs.iterations;
    sol.duals = rs.duals;
    if (rs.status != SolveStatus::Optimal) return sol;
    // average the two real blocks to cancel solver asymmetry
    RMatrix re = (rs.X.topLeftCorner(n, n) + rs.X.bottomRightCorner(n, n)) * 0.5;
    RMatrix im = (rs.X.bottomLeftCorner(n, n) - rs.X.topRightCorner(n, n)) * 0.5;
    CMatrix X(n, n);
    X.real() = re;
    X.imag() = im;
    sol.X = (X + X.adjoint()) * 0.5;
    sol.objective = (C * sol.X).trace().real();
    return sol;
}

}  // namespace twrs
