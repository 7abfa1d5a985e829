#include "twrs/rs_precoding.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "twrs/conelp.hpp"

namespace twrs {

namespace {

using numkit::kron_prod;
using numkit::unvec;
using numkit::vec_mat;

double box_muller(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double u1 = 0.0;
    do {
        u1 = u(rng);
    } while (u1 <= 1e-300);
    double u2 = u(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Complex complex_normal(std::mt19937_64& rng) {
    double re = box_muller(rng);
    double im = box_muller(rng);
    return Complex(re, im) / std::sqrt(2.0);
}

CMatrix hermitianize(const CMatrix& X) { return (X + X.adjoint()) * 0.5; }

// ---------------------------------------------------------------------------
// pairing-based decompositions
// ---------------------------------------------------------------------------

struct PairRotation {
    Complex t;
    double norm;  // sqrt(1 + |t|^2)
};

// applies the 2-column unitary mix with columns [1, t] and [-conj(t), 1]
void apply_pair(CMatrix& P, int i, int j, const PairRotation& rot) {
    CVector pi = P.col(i), pj = P.col(j);
    P.col(i) = (pi + rot.t * pj) / rot.norm;
    P.col(j) = (-std::conj(rot.t) * pi + pj) / rot.norm;
}

// smaller-magnitude real root of A s^2 + 2 B s + C = 0 given A*C <= 0
double stable_opposite_root(double A, double B, double C) {
    double disc = B * B - A * C;
    disc = std::max(disc, 0.0);
    double sq = std::sqrt(disc);
    double q = -(B + std::copysign(sq, B));
    if (std::abs(q) < 1e-300) {
        if (std::abs(A) < 1e-300) return 0.0;
        return std::sqrt(std::max(-C / A, 0.0));
    }
    if (std::abs(A) < 1e-300) return C != 0.0 ? C / q : 0.0;
    double r1 = q / A, r2 = C / q;
    return std::abs(r2) <= std::abs(r1) ? r2 : r1;
}

// Equalizes p_r^H A p_r = delta across columns by pair rotations; the column
// sum of the form is preserved at every step.
void d1_equalize(CMatrix& P, const CMatrix& A, double delta) {
    const int R = static_cast<int>(P.cols());
    RVector c(R);
    for (int r = 0; r < R; ++r) c(r) = ((P.col(r).adjoint() * A * P.col(r))(0, 0)).real();
    double scale = std::max(1.0, A.norm() * P.colwise().squaredNorm().maxCoeff());
    const double tol = 1e-11 * scale;
    for (int pass = 0; pass < 4 * R; ++pass) {
        int i = -1, j = -1;
        for (int r = 0; r < R; ++r) {
            if (c(r) - delta > tol && (i < 0 || c(r) > c(i))) i = r;
            if (c(r) - delta < -tol && (j < 0 || c(r) < c(j))) j = r;
        }
        if (i < 0 || j < 0) break;
        Complex m = (P.col(i).adjoint() * A * P.col(j))(0, 0);
        double s = stable_opposite_root(c(j) - delta, m.real(), c(i) - delta);
        PairRotation rot{Complex(s, 0.0), std::sqrt(1.0 + s * s)};
        apply_pair(P, i, j, rot);
        c(j) = c(i) + c(j) - delta;
        c(i) = delta;
    }
}

// Equalizes two Hermitian forms simultaneously; the pairing phase is chosen
// so the first form stays equalized while the second gets fixed.
void d2_equalize(CMatrix& P, const CMatrix& A1, double d1, const CMatrix& A2, double d2) {
    d1_equalize(P, A1, d1);
    const int R = static_cast<int>(P.cols());
    RVector c(R);
    for (int r = 0; r < R; ++r) c(r) = ((P.col(r).adjoint() * A2 * P.col(r))(0, 0)).real();
    double scale = std::max(1.0, A2.norm() * P.colwise().squaredNorm().maxCoeff());
    const double tol = 1e-11 * scale;
    for (int pass = 0; pass < 4 * R; ++pass) {
        int i = -1, j = -1;
        for (int r = 0; r < R; ++r) {
            if (c(r) - d2 > tol && (i < 0 || c(r) > c(i))) i = r;
            if (c(r) - d2 < -tol && (j < 0 || c(r) < c(j))) j = r;
        }
        if (i < 0 || j < 0) break;
        Complex m1 = (P.col(i).adjoint() * A1 * P.col(j))(0, 0);
        Complex m2 = (P.col(i).adjoint() * A2 * P.col(j))(0, 0);
        // keep the A1 values fixed: Re(t m1) = 0 along the mixing direction
        Complex u(1.0, 0.0);
        if (std::abs(m1) > 1e-14 * std::max(1.0, A1.norm())) {
            u = Complex(0.0, 1.0) * std::conj(m1) / std::abs(m1);
        }
        double s = stable_opposite_root(c(j) - d2, (u * m2).real(), c(i) - d2);
        PairRotation rot{s * u, std::sqrt(1.0 + s * s)};
        apply_pair(P, i, j, rot);
        c(j) = c(i) + c(j) - d2;
        c(i) = d2;
    }
}

// Finds a unit c in C^3 with c^H C_l c = 0 for all three Hermitian forms.
// Existence follows from the zero traces of the first two forms and the
// mixed-sign diagonal of the third; damped Gauss-Newton with restarts.
CVector triple_zero_vector(const std::array<CMatrix, 3>& Cm) {
    double scale = 1.0;
    for (const auto& C : Cm) scale = std::max(scale, C.norm());
    auto eval = [&](const CVector& c, RVector& g) {
        for (int l = 0; l < 3; ++l) g(l) = ((c.adjoint() * Cm[l] * c)(0, 0)).real();
    };
    std::mt19937_64 seed_rng(0xD3u);
    for (int start = 0; start < 200; ++start) {
        CVector c(3);
        if (start == 0)
            c << Complex(1, 0), Complex(1, 0), Complex(0.3, 0.1);
        else
            for (int i = 0; i < 3; ++i) c(i) = complex_normal(seed_rng);
        c.normalize();
        RVector g(3);
        for (int it = 0; it < 120; ++it) {
            eval(c, g);
            if (g.cwiseAbs().maxCoeff() <= 1e-12 * scale) return c;
            RMatrix J(3, 6);
            for (int l = 0; l < 3; ++l) {
                CVector w = Cm[l] * c;
                for (int j = 0; j < 3; ++j) {
                    J(l, j) = 2.0 * w(j).real();
                    J(l, 3 + j) = 2.0 * w(j).imag();
                }
            }
            RMatrix JJt = J * J.transpose();
            JJt.diagonal().array() += 1e-12 * scale * scale;
            RVector step = J.transpose() * JJt.ldlt().solve(-g);
            for (int j = 0; j < 3; ++j) c(j) += Complex(step(j), step(3 + j));
            double n = c.norm();
            if (n < 1e-8) break;
            c /= n;
        }
        eval(c, g);
        if (g.cwiseAbs().maxCoeff() <= 1e-11 * scale) return c;
    }
    throw NumericalFailure("triple_zero_vector: no common isotropic vector found");
}

// completes a unit vector to a unitary basis
CMatrix unitary_completion(const CVector& c) {
    const int n = static_cast<int>(c.size());
    CMatrix U = CMatrix::Identity(n, n);
    U.col(0) = c;
    for (int j = 1; j < n; ++j) {
        for (int i = 0; i < j; ++i)
            U.col(j) -= (U.col(i).adjoint() * U.col(j))(0, 0) * U.col(i);
        double nn = U.col(j).norm();
        if (nn < 1e-10) {
            // basis vector collapsed onto the span; restart from a shifted one
            U.col(j).setZero();
            U(std::min(j + 1, n - 1), j) = 1.0;
            for (int i = 0; i < j; ++i)
                U.col(j) -= (U.col(i).adjoint() * U.col(j))(0, 0) * U.col(i);
            nn = U.col(j).norm();
        }
        U.col(j) /= nn;
    }
    return U;
}

std::vector<const CMatrix*> inequality_list(const HomogenizedQcqp& h) {
    std::vector<const CMatrix*> out;
    for (const auto& Qtk : h.Qtk) out.push_back(&Qtk);
    out.push_back(&h.Qtx);
    return out;
}

void refresh_outcome(SdrOutcome& out, const HomogenizedQcqp& h, double activity_tol = 1e-6) {
    out.rank = numkit::numeric_rank(out.X);
    out.active.clear();
    for (const CMatrix* Qi : inequality_list(h)) {
        double v = ((*Qi) * out.X).trace().real();
        double sc = std::max(1.0, std::abs((*Qi)(0, 0).real()));
        out.active.push_back(v >= -activity_tol * sc);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// QcqpInstance
// ---------------------------------------------------------------------------

double QcqpInstance::objective(const CVector& f) const {
    Complex quad = (f.adjoint() * Q0 * f)(0, 0);
    Complex lin = (q0.adjoint() * f)(0, 0);
    return quad.real() - 2.0 * lin.real() + q0s;
}

double QcqpInstance::power(const CVector& f) const {
    return ((f.adjoint() * Qx * f)(0, 0)).real();
}

double QcqpInstance::sinr_form(int idx, const CVector& f) const {
    return ((f.adjoint() * Qk[idx] * f)(0, 0)).real();
}

bool QcqpInstance::feasible(const CVector& f, double rel_tol) const {
    if (power(f) > P_R * (1.0 + rel_tol)) return false;
    for (size_t i = 0; i < Qk.size(); ++i)
        if (sinr_form(static_cast<int>(i), f) < rhs_k[i] - rel_tol * std::max(1.0, rhs_k[i]))
            return false;
    return true;
}

QcqpInstance assemble_qcqp(const CMatrix& W, const CMatrix& A, const CMatrix& B,
                           const ChannelSet& ch, const std::vector<double>& lambda) {
    const int M = ch.M(), K = ch.K();
    require(W.rows() == K && W.cols() == ch.N(), "assemble_qcqp: W shape");
    require(A.rows() == K && A.cols() == K, "assemble_qcqp: A shape");
    require(B.rows() == ch.N() && B.cols() == K, "assemble_qcqp: B shape");
    require(static_cast<int>(lambda.size()) == K, "assemble_qcqp: lambda size");

    QcqpInstance q;
    q.M = M;
    q.P_R = ch.P_R;
    CMatrix P = ch.P();
    CMatrix uplink = ch.H2 * P * P.adjoint() * ch.H2.adjoint() +
                     ch.sigma2_R * CMatrix::Identity(M, M);

    CMatrix S = ch.G1.adjoint() * W.adjoint() * A * W * ch.G1;
    q.Q0 = kron_prod(uplink.transpose(), hermitianize(S));
    q.q0 = vec_mat(ch.G1.adjoint() * W.adjoint() * A * P.adjoint() * ch.H2.adjoint());
    q.q0s = ((A * (ch.sigma2_B * (W * W.adjoint()) + CMatrix::Identity(K, K))).trace()).real();

    CMatrix power_core = ch.H1 * B * B.adjoint() * ch.H1.adjoint() + uplink;
    q.Qx = kron_prod(power_core.transpose(), CMatrix::Identity(M, M));

    for (int k = 0; k < K; ++k) {
        if (lambda[k] <= 0) continue;  // a nonpositive target never binds
        CMatrix core = ch.H1 * B.col(k) * B.col(k).adjoint() * ch.H1.adjoint();
        CMatrix cci = ch.sigma2_R * CMatrix::Identity(M, M);
        for (int i = 0; i < K; ++i) {
            if (i == k) continue;
            cci += ch.H1 * B.col(i) * B.col(i).adjoint() * ch.H1.adjoint();
            cci += ch.P_k[i] * (ch.H2.col(i) * ch.H2.col(i).adjoint());
        }
        CMatrix g = ch.G2.row(k).transpose();  // column copy of g_2k
        CMatrix outer = g.conjugate() * g.transpose();
        q.Qk.push_back(kron_prod((core - lambda[k] * cci).transpose(), outer));
        q.rhs_k.push_back(lambda[k] * ch.sigma2_k[k]);
        q.stream_of.push_back(k);
    }
    return q;
}

HomogenizedQcqp homogenize_qcqp(const QcqpInstance& q) {
    const int m2 = q.M * q.M;
    const int n = m2 + 1;
    HomogenizedQcqp h;
    h.dim = n;
    h.M = q.M;
    h.Qt0 = CMatrix::Zero(n, n);
    h.Qt0(0, 0) = q.q0s;
    h.Qt0.block(0, 1, 1, m2) = -q.q0.adjoint();
    h.Qt0.block(1, 0, m2, 1) = -q.q0;
    h.Qt0.block(1, 1, m2, m2) = q.Q0;
    h.Qtx = CMatrix::Zero(n, n);
    h.Qtx(0, 0) = -q.P_R;
    h.Qtx.block(1, 1, m2, m2) = q.Qx;
    for (size_t i = 0; i < q.Qk.size(); ++i) {
        CMatrix Qtk = CMatrix::Zero(n, n);
        Qtk(0, 0) = q.rhs_k[i];
        Qtk.block(1, 1, m2, m2) = -q.Qk[i];
        h.Qtk.push_back(Qtk);
    }
    h.Q = CMatrix::Zero(n, n);
    h.Q(0, 0) = 1.0;
    return h;
}

SdrOutcome solve_sdr(const HomogenizedQcqp& h, const SolverOptions& opts,
                     double activity_tol) {
    SdrOutcome out;
    const int n = h.dim;
    const int m2 = n - 1;

    // variable scaling: measure the vector part in units of the power budget
    double P_R = -h.Qtx(0, 0).real();
    double qx_tr = h.Qtx.trace().real() + P_R;
    double delta = (P_R > 0 && qx_tr > 0) ? std::sqrt(P_R * m2 / qx_tr) : 1.0;
    CVector dvec(n);
    dvec(0) = 1.0;
    dvec.tail(m2).setConstant(delta);
    auto scaled = [&](const CMatrix& Qm) -> CMatrix {
        return dvec.asDiagonal() * Qm * dvec.asDiagonal();
    };

    std::vector<HermitianSdpConstraint> cons;
    for (const auto& Qtk : h.Qtk) cons.push_back({scaled(Qtk), Sense::LE, 0.0});
    cons.push_back({scaled(h.Qtx), Sense::LE, 0.0});
    cons.push_back({h.Q, Sense::EQ, 1.0});

    auto sol = solve_hermitian_sdp(scaled(h.Qt0), cons, opts);
    out.status = sol.status;
    out.iterations = sol.iterations;
    if (sol.status != SolveStatus::Optimal) return out;

    out.rank = numkit::numeric_rank(sol.X);
    out.X = hermitianize(dvec.asDiagonal() * sol.X * dvec.asDiagonal());
    out.duals = sol.duals;
    out.objective_lb = (h.Qt0 * out.X).trace().real();
    out.active.clear();
    for (const CMatrix* Qi : inequality_list(h)) {
        double v = ((*Qi) * out.X).trace().real();
        double sc = std::max(1.0, std::abs((*Qi)(0, 0).real()));
        out.active.push_back(v >= -activity_tol * sc);
    }
    return out;
}

CVector extract_rank_one(const SdrOutcome& out) {
    CVector v = numkit::rank1_from_psd(out.X);
    Complex t = v(0);
    if (std::abs(t) < 1e-8)
        throw NumericalFailure("extract_rank_one: vanishing homogenization corner");
    return v.tail(v.size() - 1) / t;
}

CMatrix joint_pair_decomposition(const CMatrix& X, const CMatrix& A1, const CMatrix& A2) {
    CMatrix P = numkit::psd_factor(X, 1e-9);
    const double R = static_cast<double>(P.cols());
    double d1 = (A1 * X).trace().real() / R;
    double d2 = (A2 * X).trace().real() / R;
    d2_equalize(P, A1, d1, A2, d2);
    return P;
}

SdrOutcome reduce_rank_by_slack(const SdrOutcome& out, const HomogenizedQcqp& h) {
    if (out.rank <= 1) return out;
    auto ineqs = inequality_list(h);
    bool any_inactive = false;
    for (bool a : out.active) any_inactive |= !a;
    if (!any_inactive)
        throw PreconditionViolated("reduce_rank_by_slack: all constraints active");

    CMatrix V = numkit::psd_factor(out.X, 1e-6);
    const int R = static_cast<int>(V.cols());
    if (R <= 1) return out;

    // one real homogeneous equation per constraint on the R^2 parameters of a
    // Hermitian direction
    const int ncons = static_cast<int>(ineqs.size());
    RMatrix Emat = RMatrix::Zero(ncons, R * R);
    for (int c = 0; c < ncons; ++c) {
        CMatrix Bc = V.adjoint() * (*ineqs[c]) * V;
        int col = 0;
        for (int r = 0; r < R; ++r) Emat(c, col++) = Bc(r, r).real();
        for (int s = 0; s < R; ++s)
            for (int r = s + 1; r < R; ++r) {
                // M(r,s) = x + iy for r > s; Tr(B M) picks 2(x Re + y Im) of B(r,s)
                Emat(c, col++) = 2.0 * Bc(r, s).real();
                Emat(c, col++) = 2.0 * Bc(r, s).imag();
            }
    }
    Eigen::JacobiSVD<RMatrix> svd(Emat, Eigen::ComputeFullV);
    double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    CMatrix Mdir;
    bool found = false;
    for (int j = static_cast<int>(svd.matrixV().cols()) - 1; j >= 0; --j) {
        if (j < svd.singularValues().size() &&
            svd.singularValues()(j) > 1e-9 * std::max(smax, 1.0))
            break;
        RVector vj = svd.matrixV().col(j);
        CMatrix Mc = CMatrix::Zero(R, R);
        int col = 0;
        for (int r = 0; r < R; ++r) Mc(r, r) = vj(col++);
        for (int s = 0; s < R; ++s)
            for (int r = s + 1; r < R; ++r) {
                Mc(r, s) = Complex(vj(col), vj(col + 1));
                Mc(s, r) = std::conj(Mc(r, s));
                col += 2;
            }
        // identity multiples would annihilate X entirely
        Complex tr = Mc.trace();
        if ((Mc - (tr / static_cast<double>(R)) * CMatrix::Identity(R, R)).norm() >
            1e-8 * Mc.norm()) {
            Mdir = Mc;
            found = true;
            break;
        }
    }
    if (!found) throw NumericalFailure("reduce_rank_by_slack: no usable direction");

    auto eig = numkit::hermitian_eig(Mdir);
    int arg = 0;
    for (int i = 1; i < eig.values.size(); ++i)
        if (std::abs(eig.values(i)) > std::abs(eig.values(arg))) arg = i;
    double delta0 = eig.values(arg);
    CMatrix Xp = V * (CMatrix::Identity(R, R) - Mdir / delta0) * V.adjoint();
    double a = Xp(0, 0).real();
    if (a <= 1e-12) throw NumericalFailure("reduce_rank_by_slack: corner collapsed");
    SdrOutcome next = out;
    next.X = hermitianize(Xp / a);
    refresh_outcome(next, h);
    return next;
}

SdrOutcome reduce_rank_d3(const SdrOutcome& out, const HomogenizedQcqp& h) {
    const int n_stream = static_cast<int>(h.Qtk.size());
    if (n_stream > 2)
        throw PreconditionViolated("reduce_rank_d3: needs at most two stream constraints");
    if (out.rank == 2 && n_stream == 2)
        throw PreconditionViolated("reduce_rank_d3: all-active rank-2 case");

    CMatrix P = numkit::psd_factor(out.X, 1e-6);
    const int R = static_cast<int>(P.cols());

    std::vector<const CMatrix*> forms;
    for (const auto& Qtk : h.Qtk) forms.push_back(&Qtk);
    forms.push_back(&h.Qtx);

    if (R > 1) {
        if (forms.size() == 1) {
            d1_equalize(P, *forms[0], 0.0);
        } else {
            d2_equalize(P, *forms[0], 0.0, *forms[1], 0.0);
        }
    }
    if (forms.size() >= 3 && R > 1) {
        const CMatrix& A3 = *forms[2];
        RVector c3(R);
        for (int r = 0; r < R; ++r)
            c3(r) = ((P.col(r).adjoint() * A3 * P.col(r))(0, 0)).real();
        double scale = std::max(1.0, A3.norm() * P.colwise().squaredNorm().maxCoeff());
        int ready = -1;
        for (int r = R - 1; r >= 0; --r)
            if (std::abs(c3(r)) <= 1e-9 * scale) ready = r;
        if (ready < 0) {
            if (R < 3)
                throw PreconditionViolated("reduce_rank_d3: all-active rank-2 case");
            int i = 0, j = 0;
            for (int r = 1; r < R; ++r) {
                if (c3(r) > c3(i)) i = r;
                if (c3(r) < c3(j)) j = r;
            }
            int k = -1;
            for (int r = 0; r < R; ++r)
                if (r != i && r != j && (k < 0 || std::abs(c3(r)) < std::abs(c3(k)))) k = r;
            CMatrix T(P.rows(), 3);
            T << P.col(i), P.col(j), P.col(k);
            std::array<CMatrix, 3> Cm = {T.adjoint() * (*forms[0]) * T,
                                         T.adjoint() * (*forms[1]) * T,
                                         T.adjoint() * A3 * T};
            CVector c = triple_zero_vector(Cm);
            CMatrix U = unitary_completion(c);
            CMatrix Y = T * U;
            P.col(i) = Y.col(0);
            P.col(j) = Y.col(1);
            P.col(k) = Y.col(2);
            ready = i;
            // restore the pairwise equalization for the untouched vectors
            std::vector<int> others;
            for (int r = 0; r < R; ++r)
                if (r != ready) others.push_back(r);
            CMatrix Rest(P.rows(), static_cast<Eigen::Index>(others.size()));
            for (size_t t = 0; t < others.size(); ++t)
                Rest.col(static_cast<Eigen::Index>(t)) = P.col(others[t]);
            d2_equalize(Rest, *forms[0], 0.0, *forms[1], 0.0);
            for (size_t t = 0; t < others.size(); ++t)
                P.col(others[t]) = Rest.col(static_cast<Eigen::Index>(t));
        }
        if (ready != 0) P.col(0).swap(P.col(ready));
    }

    CVector x1 = P.col(0);
    double a = std::norm(x1(0));
    if (a <= 1e-12) throw NumericalFailure("reduce_rank_d3: corner collapsed");
    SdrOutcome next = out;
    next.X = hermitianize(x1 * x1.adjoint() / a);
    refresh_outcome(next, h);
    return next;
}

SdrOutcome suboptimal_d2(const SdrOutcome& out, const HomogenizedQcqp& h) {
    const int m2 = h.dim - 1;
    if (h.Qtk.size() != 2)
        throw PreconditionViolated("suboptimal_d2: needs exactly two stream constraints");

    double corner = out.X(0, 0).real();
    require(corner > 1e-12, "suboptimal_d2: corner not normalized");
    CMatrix Xblk = hermitianize(out.X.block(1, 1, m2, m2) / corner);
    CMatrix Qx = h.Qtx.block(1, 1, m2, m2);
    CMatrix Q1 = -h.Qtk[0].block(1, 1, m2, m2);
    CMatrix Q2 = -h.Qtk[1].block(1, 1, m2, m2);
    double beta_x = (Qx * Xblk).trace().real();
    double beta_1 = (Q1 * Xblk).trace().real();
    double beta_2 = (Q2 * Xblk).trace().real();
    if (beta_x <= 1e-12)
        throw DegenerateDenominator("suboptimal_d2: zero power at the optimum");

    CMatrix M1 = Q1 - (beta_1 / beta_x) * Qx;
    CMatrix M2 = Q2 - (beta_2 / beta_x) * Qx;
    CMatrix P = numkit::psd_factor(Xblk, 1e-9);
    d2_equalize(P, M1, 0.0, M2, 0.0);
    CVector f1 = P.col(0);
    double den = ((f1.adjoint() * Qx * f1)(0, 0)).real();
    if (den <= 1e-12)
        throw DegenerateDenominator("suboptimal_d2: degenerate leading vector");
    double gamma = beta_x / den;
    CVector x1(h.dim);
    x1(0) = 1.0;
    x1.tail(m2) = std::sqrt(gamma) * f1;
    SdrOutcome next = out;
    next.X = hermitianize(x1 * x1.adjoint());
    refresh_outcome(next, h);
    return next;
}

std::optional<CVector> randomize_from_sdr(const QcqpInstance& q, const SdrOutcome& out,
                                          int samples, std::mt19937_64& rng) {
    const int m2 = q.M * q.M;
    double corner = out.X(0, 0).real();
    if (corner <= 1e-12) return std::nullopt;
    CVector fbar = out.X.block(1, 0, m2, 1) / corner;
    CMatrix cov = hermitianize(out.X.block(1, 1, m2, m2) / corner - fbar * fbar.adjoint());
    CMatrix half = numkit::psd_factor(cov, 1e-10);

    auto repair = [&](CVector v) -> std::optional<CVector> {
        double p = q.power(v);
        if (p > q.P_R && p > 0) v *= std::sqrt(q.P_R / p);
        for (size_t i = 0; i < q.Qk.size(); ++i)
            if (q.sinr_form(static_cast<int>(i), v) < q.rhs_k[i] * (1.0 - 1e-9) - 1e-12)
                return std::nullopt;
        return v;
    };

    std::optional<CVector> best;
    double best_obj = 0.0;
    auto consider = [&](const CVector& v) {
        auto r = repair(v);
        if (!r) return;
        double obj = q.objective(*r);
        if (!best || obj < best_obj) {
            best = *r;
            best_obj = obj;
        }
    };
    consider(fbar);
    for (int s = 0; s < samples; ++s) {
        CVector g(half.cols());
        for (int i = 0; i < g.size(); ++i) g(i) = complex_normal(rng);
        consider(fbar + half * g);
    }
    return best;
}

std::optional<CVector> randomize_candidates(const QcqpInstance& q, int samples,
                                            std::mt19937_64& rng,
                                            const SolverOptions& opts) {
    auto out = solve_sdr(homogenize_qcqp(q), opts);
    if (out.status == SolveStatus::Infeasible) return std::nullopt;
    if (out.status != SolveStatus::Optimal)
        throw NumericalFailure("randomize_candidates: relaxation solve failed");
    return randomize_from_sdr(q, out, samples, rng);
}

CMatrix update_weight_matrix(const CMatrix& F, const ChannelSet& ch) {
    return mse_matrix_E(F, ch) / std::log(2.0);
}

// ---------------------------------------------------------------------------
// one F-update with the rank-one recovery routing
// ---------------------------------------------------------------------------

namespace {

CVector extract_routed(const SdrOutcome& out, const HomogenizedQcqp& h,
                       const QcqpInstance& q, int user_K, int samples,
                       std::mt19937_64& rng, std::string& branch) {
    if (out.rank == 1) {
        branch = "rank-one";
        return extract_rank_one(out);
    }
    if (user_K > 2) {
        branch = "randomization";
        auto f = randomize_from_sdr(q, out, samples, rng);
        if (!f) throw NumericalFailure("randomization produced no feasible sample");
        return *f;
    }
    bool any_inactive = false;
    for (bool a : out.active) any_inactive |= !a;
    if (any_inactive) {
        branch = "slack-reduction";
        SdrOutcome cur = out;
        int guard = 0;
        while (cur.rank > 1 && guard++ < h.dim + 2) cur = reduce_rank_by_slack(cur, h);
        if (cur.rank != 1) throw NumericalFailure("slack reduction stalled");
        return extract_rank_one(cur);
    }
    const int n_ineq = static_cast<int>(h.Qtk.size()) + 1;
    if (n_ineq <= 2 || out.rank >= 3) {
        branch = n_ineq <= 2 ? "joint-pair" : "d3";
        return extract_rank_one(reduce_rank_d3(out, h));
    }
    branch = "suboptimal-d2";
    return extract_rank_one(suboptimal_d2(out, h));
}

}  // namespace

RsStepResult rs_step_update_F(const CMatrix& W, const CMatrix& A, const CMatrix& B,
                              const ChannelSet& ch, const std::vector<double>& lambda,
                              const CMatrix& prev_F, const RsOptions& opts,
                              std::mt19937_64& rng) {
    RsStepResult res;
    QcqpInstance q = assemble_qcqp(W, A, B, ch, lambda);
    HomogenizedQcqp h = homogenize_qcqp(q);
    SdrOutcome out = solve_sdr(h, opts.solver, opts.activity_tol);
    if (out.status == SolveStatus::Infeasible) {
        res.status = SolveStatus::Infeasible;
        return res;
    }

    CVector f_prev = vec_mat(prev_F);
    double prev_obj = q.objective(f_prev);
    bool prev_feasible = q.feasible(f_prev, 1e-5);
    res.status = SolveStatus::Optimal;
    res.F = prev_F;
    res.branch = "fallback-keep-previous";
    if (out.status != SolveStatus::Optimal) {
        res.branch = "solver-failure-keep-previous";
        return res;
    }
    try {
        std::string branch;
        CVector f = extract_routed(out, h, q, ch.K(), opts.rand_samples, rng, branch);
        if (!q.feasible(f, 1e-6) && prev_feasible) {
            // solver-tolerance shortfalls on tight stream constraints: blend a
            // little of the strictly feasible iterate back in (the power form
            // is convex along the segment, the margins recover first order)
            for (double theta : {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3}) {
                CVector blend = (1.0 - theta) * f + theta * f_prev;
                if (q.feasible(blend, 1e-6)) {
                    f = blend;
                    branch += "+blend";
                    break;
                }
            }
        }
        double obj = q.objective(f);
        double tol = 1e-9 * std::max(1.0, std::abs(prev_obj));
        // a feasible candidate always beats an infeasible starting point
        if (q.feasible(f, 1e-6) && (obj <= prev_obj + tol || !prev_feasible)) {
            res.F = unvec(f, ch.M(), ch.M());
            res.branch = branch;
        }
    } catch (const Error&) {
        // keep the previous precoder; the loop stays monotone
    }
    return res;
}

// ---------------------------------------------------------------------------
// initial point and the alternating loops
// ---------------------------------------------------------------------------

std::optional<CMatrix> find_initial_F(const CMatrix& B, const ChannelSet& ch,
                                      const std::vector<double>& lambda,
                                      const RsOptions& opts) {
    const int M = ch.M();
    CMatrix I = CMatrix::Identity(M, M);
    double c = std::sqrt(ch.P_R / relay_tx_power(B, I, ch));
    CMatrix Fid = c * I;
    bool ok = true;
    for (int k = 0; k < ch.K(); ++k)
        if (downlink_sinr(k, B, Fid, ch) < lambda[k] * (1.0 - 1e-9)) ok = false;
    if (ok) return Fid;

    // power-minimizing relaxation subject to the stream targets
    QcqpInstance q = assemble_qcqp(CMatrix::Zero(ch.K(), ch.N()),
                                   CMatrix::Identity(ch.K(), ch.K()), B, ch, lambda);
    QcqpInstance qp = q;  // objective := transmitted power
    qp.Q0 = q.Qx;
    qp.q0 = CVector::Zero(M * M);
    qp.q0s = 0.0;
    HomogenizedQcqp h = homogenize_qcqp(qp);
    SdrOutcome out = solve_sdr(h, opts.solver, opts.activity_tol);
    if (out.status != SolveStatus::Optimal) return std::nullopt;

    auto finish = [&](CVector f) -> std::optional<CMatrix> {
        double p = q.power(f);
        if (p > 1e-12) f *= std::sqrt(ch.P_R / p);  // the full budget only helps the targets
        CMatrix F = unvec(f, M, M);
        for (int k = 0; k < ch.K(); ++k)
            if (downlink_sinr(k, B, F, ch) < lambda[k] * (1.0 - 1e-7)) return std::nullopt;
        if (relay_tx_power(B, F, ch) > ch.P_R * (1.0 + 1e-7)) return std::nullopt;
        return F;
    };

    try {
        std::string branch;
        std::mt19937_64 rng2(opts.seed ^ 0xA5A5A5A5ull);
        CVector f = extract_routed(out, h, qp, ch.K(), opts.rand_samples, rng2, branch);
        auto F = finish(f);
        if (F) return F;
    } catch (const Error&) {
    }
    std::mt19937_64 rng(opts.seed ^ 0x9E3779B97F4A7C15ull);
    for (int tries = 0; tries < 4; ++tries) {
        auto f = randomize_from_sdr(qp, out, opts.rand_samples, rng);
        if (f) {
            auto F = finish(*f);
            if (F) return F;
        }
    }
    return std::nullopt;
}

namespace {

RsResult rs_precode_engine(const CMatrix& B, const ChannelSet& ch,
                           const std::vector<double>& lambda, const RsOptions& opts,
                           bool rate_mode) {
    ch.validate();
    RsResult res;
    RsOptions o = opts;
    if (o.max_iter <= 0) o.max_iter = ch.K() <= 2 ? 20 : 30;
    std::mt19937_64 rng(o.seed);

    CMatrix F;
    if (o.initial_F) {
        F = *o.initial_F;
    } else {
        auto F0 = find_initial_F(B, ch, lambda, o);
        if (!F0) {
            res.status = SolveStatus::Infeasible;
            return res;
        }
        F = *F0;
    }

    auto metric = [&](const CMatrix& Fm) {
        return rate_mode ? sum_rate(Fm, ch) : total_mse(Fm, ch);
    };
    double m = metric(F);
    res.metrics.objective_trace.push_back(m);
    CMatrix A = CMatrix::Identity(ch.K(), ch.K());
    int converged_at = o.max_iter;
    for (int it = 1; it <= o.max_iter; ++it) {
        CMatrix W = mmse_decoder(F, ch);
        if (rate_mode && !o.freeze_weight) A = update_weight_matrix(F, ch);
        RsStepResult step = rs_step_update_F(W, A, B, ch, lambda, F, o, rng);
        if (step.status == SolveStatus::Infeasible) {
            // targets reported unreachable mid-run: keep the feasible iterate
            res.branch_audit.push_back("subproblem-infeasible-keep-previous");
            step.F = F;
        } else {
            res.branch_audit.push_back(step.branch);
        }
        bool kept_previous = step.branch.find("keep-previous") != std::string::npos ||
                             step.status == SolveStatus::Infeasible;
        CMatrix Fnew = step.F;
        if (rate_mode && !o.freeze_weight && !kept_previous) {
            // the weighted surrogate step must not lose sum rate
            if (sum_rate(Fnew, ch) < m - 1e-12 * std::max(1.0, std::abs(m))) Fnew = F;
        }
        double mnew = metric(Fnew);
        res.metrics.objective_trace.push_back(mnew);
        double rel = std::abs(mnew - m) / std::max(std::abs(m), 1e-12);
        F = Fnew;
        m = mnew;
        // a kept-previous step carries no convergence information: the next
        // pass draws fresh candidates instead of declaring a fixed point
        if (rel < o.tol && !kept_previous) {
            converged_at = it;
            break;
        }
    }
    res.status = SolveStatus::Optimal;
    res.F = F;
    res.W = mmse_decoder(F, ch);
    res.A = rate_mode && !o.freeze_weight ? update_weight_matrix(F, ch)
                                          : CMatrix::Identity(ch.K(), ch.K());
    res.metrics.iterations = converged_at;
    res.metrics.total_mse = total_mse(F, ch);
    res.metrics.sum_rate = sum_rate(F, ch);
    res.metrics.relay_power = relay_tx_power(B, F, ch);
    for (int k = 0; k < ch.K(); ++k)
        res.metrics.sinr.push_back(downlink_sinr(k, B, F, ch));
    return res;
}

}  // namespace

RsResult rs_precode_mse(const CMatrix& B, const ChannelSet& ch,
                        const std::vector<double>& lambda, const RsOptions& opts) {
    return rs_precode_engine(B, ch, lambda, opts, false);
}

RsResult rs_precode_rate(const CMatrix& B, const ChannelSet& ch,
                         const std::vector<double>& lambda, const RsOptions& opts) {
    return rs_precode_engine(B, ch, lambda, opts, true);
}

}  // namespace twrs
