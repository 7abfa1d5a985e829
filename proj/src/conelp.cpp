#include "twrs/conelp.hpp"
#include <cstdio>
#include <cstdlib>

#include <algorithm>
#include <cmath>
#include <limits>

namespace twrs::conelp {

namespace {

constexpr double kStepBack = 0.99;
constexpr double kRegScale = 1e-12;

int tri(int n) { return n * (n + 1) / 2; }

}  // namespace

int svec_len(int n) { return tri(n); }

RVector svec(const RMatrix& S) {
    const int n = static_cast<int>(S.rows());
    RVector v(tri(n));
    const double r2 = std::sqrt(2.0);
    int k = 0;
    for (int j = 0; j < n; ++j) {
        v(k++) = S(j, j);
        for (int i = j + 1; i < n; ++i) v(k++) = r2 * 0.5 * (S(i, j) + S(j, i));
    }
    return v;
}

RMatrix smat(const RVector& v) {
    const int m = static_cast<int>(v.size());
    const int n = static_cast<int>((std::sqrt(8.0 * m + 1.0) - 1.0) / 2.0 + 0.5);
    RMatrix S(n, n);
    const double ir2 = 1.0 / std::sqrt(2.0);
    int k = 0;
    for (int j = 0; j < n; ++j) {
        S(j, j) = v(k++);
        for (int i = j + 1; i < n; ++i) {
            S(i, j) = v(k) * ir2;
            S(j, i) = v(k) * ir2;
            ++k;
        }
    }
    return S;
}

int ConeDims::rows() const {
    int m = nonneg;
    for (int q : soc) m += q;
    for (int p : psd) m += tri(p);
    return m;
}

int ConeDims::degree() const {
    int d = nonneg + static_cast<int>(soc.size());
    for (int p : psd) d += p;
    return d;
}

namespace {

// ---------------------------------------------------------------------------
// Per-block Nesterov-Todd scaling and Jordan algebra operations.
// Every block exposes: lambda (scaled point), dense (W'W)^{-1}, and the
// maps needed by the predictor-corrector right-hand sides.
// ---------------------------------------------------------------------------

struct NonnegScaling {
    RVector w2;   // s_i / z_i
    RVector lam;  // sqrt(s_i z_i)
};

struct SocScaling {
    double eta = 1.0;
    RVector wbar;
    RVector lam;
};

struct PsdScaling {
    RMatrix r;    // scaling factor: lambda = r' Z r = r^{-1} S r^{-T} (diagonal)
    RMatrix rinv;
    RVector lam;  // diagonal of the scaled point
};

struct Scaling {
    NonnegScaling nn;
    std::vector<SocScaling> soc;
    std::vector<PsdScaling> psd;
    bool identity = false;  // initialization pass uses W = I
};

struct BlockLayout {
    int nn_start = 0, nn_size = 0;
    std::vector<int> soc_start;
    std::vector<int> psd_start;  // svec offsets
};

BlockLayout make_layout(const ConeDims& dims) {
    BlockLayout L;
    int off = 0;
    L.nn_start = off;
    L.nn_size = dims.nonneg;
    off += dims.nonneg;
    for (int q : dims.soc) {
        L.soc_start.push_back(off);
        off += q;
    }
    for (int p : dims.psd) {
        L.psd_start.push_back(off);
        off += tri(p);
    }
    return L;
}

RVector soc_apply_wbar(const RVector& wbar, const RVector& v, bool inverse) {
    const int q = static_cast<int>(v.size());
    const double w0 = wbar(0);
    RVector out(q);
    const auto w1 = wbar.tail(q - 1);
    const auto v1 = v.tail(q - 1);
    const double dot = w1.dot(v1);
    if (!inverse) {
        out(0) = w0 * v(0) + dot;
        out.tail(q - 1) = v(0) * w1 + v1 + (dot / (1.0 + w0)) * w1;
    } else {
        out(0) = w0 * v(0) - dot;
        out.tail(q - 1) = -v(0) * w1 + v1 + (dot / (1.0 + w0)) * w1;
    }
    return out;
}

// Computes NT scaling for all blocks from strictly feasible s, z.
bool compute_scaling(const ConeDims& dims, const BlockLayout& L, const RVector& s,
                     const RVector& z, Scaling& W) {
    W.identity = false;
    W.nn.w2.resize(dims.nonneg);
    W.nn.lam.resize(dims.nonneg);
    for (int i = 0; i < dims.nonneg; ++i) {
        double si = s(L.nn_start + i), zi = z(L.nn_start + i);
        if (si <= 0 || zi <= 0) return false;
        W.nn.w2(i) = si / zi;
        W.nn.lam(i) = std::sqrt(si * zi);
    }
    W.soc.resize(dims.soc.size());
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        RVector sb = s.segment(L.soc_start[k], q);
        RVector zb = z.segment(L.soc_start[k], q);
        // stable J-norms: (u0 - ||u1||)(u0 + ||u1||) avoids cancellation
        double snorm = (sb(0) - sb.tail(q - 1).norm()) * (sb(0) + sb.tail(q - 1).norm());
        double znorm = (zb(0) - zb.tail(q - 1).norm()) * (zb(0) + zb.tail(q - 1).norm());
        if (snorm <= 0 || znorm <= 0 || sb(0) <= 0 || zb(0) <= 0) return false;
        snorm = std::sqrt(snorm);
        znorm = std::sqrt(znorm);
        RVector sn = sb / snorm, zn = zb / znorm;
        double gamma = std::sqrt((1.0 + sn.dot(zn)) / 2.0);
        if (!(gamma > 0)) return false;
        SocScaling& sc = W.soc[k];
        sc.wbar.resize(q);
        sc.wbar(0) = (sn(0) + zn(0)) / (2.0 * gamma);
        sc.wbar.tail(q - 1) = (sn.tail(q - 1) - zn.tail(q - 1)) / (2.0 * gamma);
        sc.eta = std::sqrt(snorm / znorm);
        sc.lam = sc.eta * soc_apply_wbar(sc.wbar, zb, false);
    }
    W.psd.resize(dims.psd.size());
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix S = smat(s.segment(L.psd_start[k], tri(p)));
        RMatrix Z = smat(z.segment(L.psd_start[k], tri(p)));
        Eigen::LLT<RMatrix> ls(S), lz(Z);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        RMatrix Ls = ls.matrixL();
        RMatrix Lz = lz.matrixL();
        Eigen::JacobiSVD<RMatrix> svd(Lz.transpose() * Ls,
                                      Eigen::ComputeFullU | Eigen::ComputeFullV);
        RVector lam = svd.singularValues();
        if (lam.minCoeff() <= 0) return false;
        PsdScaling& sc = W.psd[k];
        RVector isq = lam.cwiseSqrt().cwiseInverse();
        sc.r = Ls * svd.matrixV() * isq.asDiagonal();
        sc.rinv = (Lz * svd.matrixU() * isq.asDiagonal()).transpose();
        sc.lam = lam;
    }
    return true;
}

// W z for one full vector (scaled z-space point).
RVector apply_W(const ConeDims& dims, const BlockLayout& L, const Scaling& W,
                const RVector& v) {
    RVector out(v.size());
    if (W.identity) return v;
    for (int i = 0; i < dims.nonneg; ++i)
        out(L.nn_start + i) = std::sqrt(W.nn.w2(i)) * v(L.nn_start + i);
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        out.segment(L.soc_start[k], q) =
            W.soc[k].eta * soc_apply_wbar(W.soc[k].wbar, v.segment(L.soc_start[k], q), false);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix V = smat(v.segment(L.psd_start[k], tri(p)));
        out.segment(L.psd_start[k], tri(p)) =
            svec(W.psd[k].r.transpose() * V * W.psd[k].r);
    }
    return out;
}

// W^{-T} s (scaled s-space point).
RVector apply_WinvT(const ConeDims& dims, const BlockLayout& L, const Scaling& W,
                    const RVector& v) {
    RVector out(v.size());
    if (W.identity) return v;
    for (int i = 0; i < dims.nonneg; ++i)
        out(L.nn_start + i) = v(L.nn_start + i) / std::sqrt(W.nn.w2(i));
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        out.segment(L.soc_start[k], q) =
            (1.0 / W.soc[k].eta) *
            soc_apply_wbar(W.soc[k].wbar, v.segment(L.soc_start[k], q), true);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix V = smat(v.segment(L.psd_start[k], tri(p)));
        out.segment(L.psd_start[k], tri(p)) =
            svec(W.psd[k].rinv * V * W.psd[k].rinv.transpose());
    }
    return out;
}

// W^T u, mapping a scaled s-space vector back: ds = W'(q).
RVector apply_WT(const ConeDims& dims, const BlockLayout& L, const Scaling& W,
                 const RVector& v) {
    RVector out(v.size());
    if (W.identity) return v;
    for (int i = 0; i < dims.nonneg; ++i)
        out(L.nn_start + i) = std::sqrt(W.nn.w2(i)) * v(L.nn_start + i);
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        out.segment(L.soc_start[k], q) =
            W.soc[k].eta * soc_apply_wbar(W.soc[k].wbar, v.segment(L.soc_start[k], q), false);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix V = smat(v.segment(L.psd_start[k], tri(p)));
        out.segment(L.psd_start[k], tri(p)) =
            svec(W.psd[k].r * V * W.psd[k].r.transpose());
    }
    return out;
}

// W'W v, used when reconstructing ds.
RVector apply_WtW(const ConeDims& dims, const BlockLayout& L, const Scaling& W,
                  const RVector& v) {
    return apply_WT(dims, L, W, apply_W(dims, L, W, v));
}

// Dense (W'W)^{-1} for one PSD block: symmetrized Kronecker of Tm^{-1} = (r r')^{-1}.
RMatrix psd_wtw_inv(const PsdScaling& sc) {
    const int p = static_cast<int>(sc.r.rows());
    // Tm^{-1} = r^{-T} r^{-1}; rinv here stores r^{-1}.
    RMatrix Tinv = sc.rinv.transpose() * sc.rinv;
    const int m = tri(p);
    RMatrix out(m, m);
    const double r2 = std::sqrt(2.0);
    int col = 0;
    RMatrix E(p, p);
    for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
            // unit svec basis element (i,j)
            RMatrix M;
            if (i == j)
                M = Tinv.col(j) * Tinv.row(j);
            else
                M = (Tinv.col(i) * Tinv.row(j) + Tinv.col(j) * Tinv.row(i)) / r2;
            out.col(col++) = svec((M + M.transpose()) * 0.5);
        }
    }
    return out;
}

// Jordan product u o v blockwise.
RVector jordan_prod(const ConeDims& dims, const BlockLayout& L, const RVector& u,
                    const RVector& v) {
    RVector out(u.size());
    for (int i = 0; i < dims.nonneg; ++i)
        out(L.nn_start + i) = u(L.nn_start + i) * v(L.nn_start + i);
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        auto ub = u.segment(L.soc_start[k], q);
        auto vb = v.segment(L.soc_start[k], q);
        out(L.soc_start[k]) = ub.dot(vb);
        out.segment(L.soc_start[k] + 1, q - 1) =
            ub(0) * vb.tail(q - 1) + vb(0) * ub.tail(q - 1);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix U = smat(u.segment(L.psd_start[k], tri(p)));
        RMatrix V = smat(v.segment(L.psd_start[k], tri(p)));
        out.segment(L.psd_start[k], tri(p)) = svec(0.5 * (U * V + V * U));
    }
    return out;
}

// Jordan identity element.
RVector jordan_e(const ConeDims& dims, const BlockLayout& L, int m) {
    RVector e = RVector::Zero(m);
    for (int i = 0; i < dims.nonneg; ++i) e(L.nn_start + i) = 1.0;
    for (size_t k = 0; k < dims.soc.size(); ++k) e(L.soc_start[k]) = 1.0;
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        e.segment(L.psd_start[k], tri(p)) = svec(RMatrix::Identity(p, p));
    }
    return e;
}

// Solve lambda o u = v for u, with lambda the (block-diagonal) scaled point.
RVector jordan_div_lambda(const ConeDims& dims, const BlockLayout& L, const Scaling& W,
                          const RVector& v) {
    RVector out(v.size());
    for (int i = 0; i < dims.nonneg; ++i)
        out(L.nn_start + i) = v(L.nn_start + i) / W.nn.lam(i);
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        const RVector& lam = W.soc[k].lam;
        auto vb = v.segment(L.soc_start[k], q);
        double den = lam(0) * lam(0) - lam.tail(q - 1).squaredNorm();
        double u0 = (lam(0) * vb(0) - lam.tail(q - 1).dot(vb.tail(q - 1))) / den;
        out(L.soc_start[k]) = u0;
        out.segment(L.soc_start[k] + 1, q - 1) =
            (vb.tail(q - 1) - u0 * lam.tail(q - 1)) / lam(0);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        const RVector& lam = W.psd[k].lam;
        RMatrix V = smat(v.segment(L.psd_start[k], tri(p)));
        RMatrix U(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) U(i, j) = 2.0 * V(i, j) / (lam(i) + lam(j));
        out.segment(L.psd_start[k], tri(p)) = svec(U);
    }
    return out;
}

// lambda as a full vector (svec for PSD blocks).
RVector lambda_vec(const ConeDims& dims, const BlockLayout& L, const Scaling& W, int m) {
    RVector out = RVector::Zero(m);
    for (int i = 0; i < dims.nonneg; ++i) out(L.nn_start + i) = W.nn.lam(i);
    for (size_t k = 0; k < dims.soc.size(); ++k)
        out.segment(L.soc_start[k], dims.soc[k]) = W.soc[k].lam;
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        out.segment(L.psd_start[k], tri(p)) =
            svec(RMatrix(W.psd[k].lam.asDiagonal()));
    }
    return out;
}

// Largest step t such that u + t*du stays in the cone (u strictly feasible).
double max_step(const ConeDims& dims, const BlockLayout& L, const RVector& u,
                const RVector& du) {
    double tmax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dims.nonneg; ++i) {
        double d = du(L.nn_start + i);
        if (d < 0) tmax = std::min(tmax, -u(L.nn_start + i) / d);
    }
    for (size_t k = 0; k < dims.soc.size(); ++k) {
        const int q = dims.soc[k];
        auto ub = u.segment(L.soc_start[k], q);
        auto db = du.segment(L.soc_start[k], q);
        // roots of (u0+t d0)^2 - ||u1+t d1||^2 = 0, first positive crossing
        double a = db(0) * db(0) - db.tail(q - 1).squaredNorm();
        double b2 = ub(0) * db(0) - ub.tail(q - 1).dot(db.tail(q - 1));
        double cc = ub(0) * ub(0) - ub.tail(q - 1).squaredNorm();
        double tq = std::numeric_limits<double>::infinity();
        if (std::abs(a) < 1e-300) {
            if (b2 < 0) tq = -cc / (2.0 * b2);
        } else {
            double disc = b2 * b2 - a * cc;
            if (disc >= 0) {
                double sq = std::sqrt(disc);
                double r1 = (-b2 + sq) / a, r2 = (-b2 - sq) / a;
                if (r1 > r2) std::swap(r1, r2);
                if (r1 > 0)
                    tq = r1;
                else if (r2 > 0 && a < 0)
                    tq = r2;
                else if (r1 <= 0 && r2 <= 0 && a < 0)
                    tq = 0.0;
            } else if (a < 0) {
                tq = 0.0;
            }
        }
        if (db(0) < 0) tq = std::min(tq, -ub(0) / db(0));
        tmax = std::min(tmax, tq);
    }
    for (size_t k = 0; k < dims.psd.size(); ++k) {
        const int p = dims.psd[k];
        RMatrix U = smat(u.segment(L.psd_start[k], tri(p)));
        RMatrix D = smat(du.segment(L.psd_start[k], tri(p)));
        Eigen::LLT<RMatrix> llt(U);
        if (llt.info() != Eigen::Success) return 0.0;
        RMatrix Lc = llt.matrixL();
        RMatrix Mtx = Lc.triangularView<Eigen::Lower>().solve(D);
        Mtx = Lc.triangularView<Eigen::Lower>().solve(Mtx.transpose()).transpose();
        Eigen::SelfAdjointEigenSolver<RMatrix> es((Mtx + Mtx.transpose()) * 0.5);
        double emin = es.eigenvalues().minCoeff();
        if (emin < 0) tmax = std::min(tmax, -1.0 / emin);
    }
    return tmax;
}

// ---------------------------------------------------------------------------
// KKT factorization:  [0 A' G'; A 0 0; G 0 -W'W] via Schur complements.
// ---------------------------------------------------------------------------
struct KktFactor {
    const ConeDims* dims = nullptr;
    const BlockLayout* layout = nullptr;
    const Scaling* W = nullptr;
    const RMatrix *A = nullptr, *G = nullptr;
    std::vector<RMatrix> wtw_inv_nn_soc_psd;  // blockwise dense (W'W)^{-1}
    Eigen::LLT<RMatrix> Hfac;
    Eigen::LLT<RMatrix> Sfac;  // A H^{-1} A'
    bool psd_block_is_neg_identity_cached = false;
    std::vector<bool> psd_neg_identity;

    // (W'W)^{-1} v using the cached dense blocks
    RVector wtw_inv(const RVector& v) const {
        RVector out(v.size());
        const auto& L = *layout;
        int bi = 0;
        if (dims->nonneg > 0) {
            out.segment(L.nn_start, dims->nonneg) =
                wtw_inv_nn_soc_psd[bi].diagonal().cwiseProduct(
                    v.segment(L.nn_start, dims->nonneg));
            ++bi;
        }
        for (size_t k = 0; k < dims->soc.size(); ++k, ++bi)
            out.segment(L.soc_start[k], dims->soc[k]) =
                wtw_inv_nn_soc_psd[bi] * v.segment(L.soc_start[k], dims->soc[k]);
        for (size_t k = 0; k < dims->psd.size(); ++k, ++bi)
            out.segment(L.psd_start[k], tri(dims->psd[k])) =
                wtw_inv_nn_soc_psd[bi] * v.segment(L.psd_start[k], tri(dims->psd[k]));
        return out;
    }

    bool factor() {
        const auto& L = *layout;
        const int n = static_cast<int>(G->cols());
        wtw_inv_nn_soc_psd.clear();
        if (dims->nonneg > 0) {
            RMatrix D = RMatrix::Zero(dims->nonneg, dims->nonneg);
            for (int i = 0; i < dims->nonneg; ++i)
                D(i, i) = W->identity ? 1.0 : 1.0 / W->nn.w2(i);
            wtw_inv_nn_soc_psd.push_back(D);
        }
        for (size_t k = 0; k < dims->soc.size(); ++k) {
            const int q = dims->soc[k];
            RMatrix Mq(q, q);
            if (W->identity) {
                Mq.setIdentity();
            } else {
                for (int j = 0; j < q; ++j) {
                    RVector ej = RVector::Zero(q);
                    ej(j) = 1.0;
                    RVector t = soc_apply_wbar(W->soc[k].wbar, ej, true);
                    t = soc_apply_wbar(W->soc[k].wbar, t, true);
                    Mq.col(j) = t / (W->soc[k].eta * W->soc[k].eta);
                }
            }
            wtw_inv_nn_soc_psd.push_back((Mq + Mq.transpose()) * 0.5);
        }
        for (size_t k = 0; k < dims->psd.size(); ++k) {
            if (W->identity) {
                wtw_inv_nn_soc_psd.push_back(
                    RMatrix::Identity(tri(dims->psd[k]), tri(dims->psd[k])));
            } else {
                wtw_inv_nn_soc_psd.push_back(psd_wtw_inv(W->psd[k]));
            }
        }
        if (!psd_block_is_neg_identity_cached) {
            psd_neg_identity.clear();
            for (size_t k = 0; k < dims->psd.size(); ++k) {
                const int mb = tri(dims->psd[k]);
                RMatrix Gb = G->middleRows(L.psd_start[k], mb);
                bool negid = (Gb.rows() == Gb.cols()) &&
                             ((Gb + RMatrix::Identity(mb, mb)).cwiseAbs().maxCoeff() == 0.0);
                psd_neg_identity.push_back(negid);
            }
            psd_block_is_neg_identity_cached = true;
        }

        // H = G' (W'W)^{-1} G assembled blockwise
        RMatrix H = RMatrix::Zero(n, n);
        int bi = 0;
        if (dims->nonneg > 0) {
            const RMatrix& D = wtw_inv_nn_soc_psd[bi++];
            RMatrix Gb = G->middleRows(L.nn_start, dims->nonneg);
            H.noalias() += Gb.transpose() * D.diagonal().asDiagonal() * Gb;
        }
        for (size_t k = 0; k < dims->soc.size(); ++k, ++bi) {
            RMatrix Gb = G->middleRows(L.soc_start[k], dims->soc[k]);
            H.noalias() += Gb.transpose() * wtw_inv_nn_soc_psd[bi] * Gb;
        }
        for (size_t k = 0; k < dims->psd.size(); ++k, ++bi) {
            const int mb = tri(dims->psd[k]);
            if (psd_neg_identity[k]) {
                H.noalias() += wtw_inv_nn_soc_psd[bi];
            } else {
                RMatrix Gb = G->middleRows(L.psd_start[k], mb);
                H.noalias() += Gb.transpose() * wtw_inv_nn_soc_psd[bi] * Gb;
            }
        }
        double reg = kRegScale * std::max(1.0, H.diagonal().mean());
        H.diagonal().array() += reg;
        Hfac.compute(H);
        if (Hfac.info() != Eigen::Success) return false;
        if (A->rows() > 0) {
            RMatrix AHiAt = *A * Hfac.solve(A->transpose());
            AHiAt.diagonal().array() += reg;
            Sfac.compute(AHiAt);
            if (Sfac.info() != Eigen::Success) return false;
        }
        return true;
    }

    // Solves  A'uy + G'uz = bx;  A ux = by;  G ux - W'W uz = bz.
    void solve_once(const RVector& bx, const RVector& by, const RVector& bz, RVector& ux,
                    RVector& uy, RVector& uz) const {
        RVector r1 = bx + G->transpose() * wtw_inv(bz);
        if (A->rows() > 0) {
            uy = Sfac.solve(*A * Hfac.solve(r1) - by);
            ux = Hfac.solve(r1 - A->transpose() * uy);
        } else {
            uy.resize(0);
            ux = Hfac.solve(r1);
        }
        uz = wtw_inv(*G * ux - bz);
    }

    void solve(const RVector& bx, const RVector& by, const RVector& bz, RVector& ux,
               RVector& uy, RVector& uz, int refine = 3) const {
        solve_once(bx, by, bz, ux, uy, uz);
        double scale = std::max({1.0, bx.norm(), by.size() ? by.norm() : 0.0, bz.norm()});
        for (int it = 0; it < refine; ++it) {
            RVector r1 = bx - (A->rows() ? RVector(A->transpose() * uy) : RVector::Zero(bx.size())) -
                         G->transpose() * uz;
            RVector r2 = A->rows() ? RVector(by - *A * ux) : RVector(0);
            RVector r3 = bz - (*G * ux - apply_WtW(*dims, *layout, *W, uz));
            double rnorm = std::max({r1.norm(), r2.size() ? r2.norm() : 0.0, r3.norm()});
            if (rnorm < 1e-14 * scale) break;
            RVector cx, cy, cz;
            solve_once(r1, r2, r3, cx, cy, cz);
            ux += cx;
            if (A->rows()) uy += cy;
            uz += cz;
        }
    }
};

}  // namespace

Result solve(const RVector& c, const RMatrix& A, const RVector& b, const RMatrix& G,
             const RVector& h, const ConeDims& dims, const Options& opts) {
    Result res;
    const int n = static_cast<int>(c.size());
    const int p = static_cast<int>(A.rows());
    const int m = dims.rows();
    if (G.rows() != m || G.cols() != n || h.size() != m || (p > 0 && A.cols() != n) ||
        b.size() != p) {
        throw DimensionMismatch("conelp: inconsistent problem dimensions");
    }
    if (m == 0) throw DimensionMismatch("conelp: empty cone");

    BlockLayout L = make_layout(dims);
    const RVector e = jordan_e(dims, L, m);
    const int degree = dims.degree() + 1;

    Scaling W;
    W.identity = true;
    KktFactor kkt;
    kkt.dims = &dims;
    kkt.layout = &L;
    kkt.W = &W;
    kkt.A = &A;
    kkt.G = &G;

    // --- initial point: least-squares solves with W = I, shifted into the cone
    if (!kkt.factor()) {
        res.status = Status::NumericalFailure;
        return res;
    }
    RVector x, y, z, s, uy;
    {
        RVector ux, uz;
        kkt.solve(RVector::Zero(n), b, h, ux, uy, uz, 1);
        x = ux;
        y = uy;
        s = -uz;
        // shift s strictly inside the cone by its smallest cone-eigenvalue
        double mineig = std::numeric_limits<double>::infinity();
        for (int i = 0; i < dims.nonneg; ++i) mineig = std::min(mineig, s(L.nn_start + i));
        for (size_t k = 0; k < dims.soc.size(); ++k) {
            const int q = dims.soc[k];
            auto sb = s.segment(L.soc_start[k], q);
            mineig = std::min(mineig, sb(0) - sb.tail(q - 1).norm());
        }
        for (size_t k = 0; k < dims.psd.size(); ++k) {
            const int pq = dims.psd[k];
            Eigen::SelfAdjointEigenSolver<RMatrix> es(smat(s.segment(L.psd_start[k], tri(pq))));
            mineig = std::min(mineig, es.eigenvalues().minCoeff());
        }
        if (mineig < 0) s += (1.0 - mineig) * e;
        else if (mineig == std::numeric_limits<double>::infinity()) s = e;
        else if (mineig < 1e-8) s += e;

        RVector dx, dz2;
        kkt.solve(-c, RVector::Zero(p), RVector::Zero(m), dx, uy, dz2, 1);
        y = uy;
        z = dz2;
        double mineigz = std::numeric_limits<double>::infinity();
        for (int i = 0; i < dims.nonneg; ++i) mineigz = std::min(mineigz, z(L.nn_start + i));
        for (size_t k = 0; k < dims.soc.size(); ++k) {
            const int q = dims.soc[k];
            auto zb = z.segment(L.soc_start[k], q);
            mineigz = std::min(mineigz, zb(0) - zb.tail(q - 1).norm());
        }
        for (size_t k = 0; k < dims.psd.size(); ++k) {
            const int pq = dims.psd[k];
            Eigen::SelfAdjointEigenSolver<RMatrix> es(smat(z.segment(L.psd_start[k], tri(pq))));
            mineigz = std::min(mineigz, es.eigenvalues().minCoeff());
        }
        if (mineigz < 0) z += (1.0 - mineigz) * e;
        else if (mineigz == std::numeric_limits<double>::infinity()) z = e;
        else if (mineigz < 1e-8) z += e;
    }
    double tau = 1.0, kappa = 1.0;
    int stalled = 0;

    struct Snapshot {
        RVector x, y, z, s;
        double tau = 1.0, kappa = 1.0;
        double score = std::numeric_limits<double>::infinity();
    } best;

    const double resx0 = std::max(1.0, c.norm());
    const double resy0 = std::max(1.0, b.size() ? b.norm() : 0.0);
    const double resz0 = std::max(1.0, h.norm());

    auto record_point = [&](Result& r) {
        r.x = x / tau;
        r.y = (p > 0) ? RVector(y / tau) : RVector(0);
        r.z = z / tau;
        r.s = s / tau;
        r.pobj = c.dot(r.x);
        r.dobj = -((p ? b.dot(r.y) : 0.0) + h.dot(r.z));
        r.gap = r.s.dot(r.z);
    };

    // accepts the current point at `relax` times the requested tolerances;
    // used both for the normal exit and when progress stalls at the
    // attainable numerical floor
    auto try_accept = [&](double relax, Result& r) -> bool {
        RVector rx = G.transpose() * z + c * tau;
        if (p) rx += A.transpose() * y;
        RVector ry = p ? RVector(A * x - b * tau) : RVector(0);
        RVector rz = G * x + s - h * tau;
        double pcost = c.dot(x) / tau;
        double dcost = -((p ? b.dot(y) : 0.0) + h.dot(z)) / tau;
        double gap = s.dot(z) / (tau * tau);
        double relgap = gap / std::max({1.0, std::abs(pcost), std::abs(dcost)});
        double pres = std::max(p ? ry.norm() / resy0 : 0.0, rz.norm() / resz0) / tau;
        double dres = rx.norm() / resx0 / tau;
        if (pres <= relax * opts.feastol && dres <= relax * opts.feastol &&
            (gap <= relax * opts.abstol || relgap <= relax * opts.reltol)) {
            record_point(r);
            r.pres = pres;
            r.dres = dres;
            r.status = Status::Optimal;
            return true;
        }
        return false;
    };

    auto finish_fail = [&](Result& r, Status st) -> Result& {
        if (try_accept(10.0, r)) return r;
        if (std::isfinite(best.score)) {
            x = best.x;
            y = best.y;
            z = best.z;
            s = best.s;
            tau = best.tau;
            kappa = best.kappa;
            if (try_accept(10.0, r)) return r;
        }
        record_point(r);
        r.status = st;
        return r;
    };

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        res.iterations = iter;
        // residuals of the self-dual system
        RVector rx = G.transpose() * z + c * tau;
        if (p) rx += A.transpose() * y;
        RVector ry = p ? RVector(A * x - b * tau) : RVector(0);
        RVector rz = G * x + s - h * tau;
        double rt = kappa + c.dot(x) + (p ? b.dot(y) : 0.0) + h.dot(z);

        double pcost = c.dot(x) / tau;
        double dcost = -((p ? b.dot(y) : 0.0) + h.dot(z)) / tau;
        double gap = s.dot(z) / (tau * tau);
        double relgap = gap / std::max({1.0, std::abs(pcost), std::abs(dcost)});

        double pres = std::max(p ? ry.norm() / resy0 : 0.0, rz.norm() / resz0) / tau;
        double dres = rx.norm() / resx0 / tau;

        if (getenv("TWRS_CONELP_TRACE"))
            fprintf(stderr,
                    "it=%2d gap=%9.2e relgap=%9.2e pres=%9.2e dres=%9.2e tau=%9.2e kap=%9.2e rt=%9.2e\n",
                    iter, gap, relgap, pres, dres, tau, kappa, rt);

        double score = std::max({pres, dres, relgap});
        if (score < best.score) {
            best = {x, y, z, s, tau, kappa, score};
        }

        if (pres <= opts.feastol && dres <= opts.feastol &&
            (gap <= opts.abstol || relgap <= opts.reltol)) {
            record_point(res);
            res.pres = pres;
            res.dres = dres;
            res.status = Status::Optimal;
            return res;
        }

        // infeasibility certificates
        double by_hz = (p ? b.dot(y) : 0.0) + h.dot(z);
        if (by_hz < 0) {
            RVector hres = G.transpose() * z;
            if (p) hres += A.transpose() * y;
            double pinf = hres.norm() / resx0 / (-by_hz);
            if (pinf <= opts.feastol) {
                res.status = Status::PrimalInfeasible;
                double sc = -1.0 / by_hz;
                res.y = (p > 0) ? RVector(y * sc) : RVector(0);
                res.z = z * sc;
                res.x.resize(0);
                res.s.resize(0);
                return res;
            }
        }
        if (c.dot(x) < 0) {
            double cx = -c.dot(x);
            double dinf =
                std::max(p ? (A * x).norm() / resy0 : 0.0, (G * x + s).norm() / resz0) / cx;
            if (dinf <= opts.feastol) {
                res.status = Status::DualInfeasible;
                res.x = x / cx;
                res.s = s / cx;
                res.y.resize(0);
                res.z.resize(0);
                return res;
            }
        }

        // scaling and factorization at the current point
        if (!compute_scaling(dims, L, s, z, W)) {
            return finish_fail(res, Status::NumericalFailure);
        }
        if (!kkt.factor()) {
            return finish_fail(res, Status::NumericalFailure);
        }
        RVector lam = lambda_vec(dims, L, W, m);
        double mu = (s.dot(z) + tau * kappa) / degree;

        RVector x1, y1, z1;
        kkt.solve(-c, b, h, x1, y1, z1, 2);
        double denom_static = c.dot(x1) + (p ? b.dot(y1) : 0.0) + h.dot(z1) - kappa / tau;

        auto direction = [&](const RVector& ds_rhs, double dkt_rhs, RVector& dx, RVector& dy,
                             RVector& dz, RVector& ds, double& dtau, double& dkappa) {
            RVector bz_eff = -rz - apply_WT(dims, L, W, jordan_div_lambda(dims, L, W, ds_rhs));
            RVector x2, y2, z2;
            kkt.solve(-rx, p ? RVector(-ry) : RVector(0), bz_eff, x2, y2, z2, 2);
            double num = -rt - (c.dot(x2) + (p ? b.dot(y2) : 0.0) + h.dot(z2)) - dkt_rhs / tau;
            dtau = num / denom_static;
            dx = x2 + dtau * x1;
            dy = p ? RVector(y2 + dtau * y1) : RVector(0);
            dz = z2 + dtau * z1;
            // recover ds from the primal row (equals W'(lambda \ ds_rhs) - W'W dz in
            // exact arithmetic, but keeps the primal residual recursion exact when
            // the scaling is ill-conditioned near the boundary)
            ds = -rz + h * dtau - G * dx;
            dkappa = (dkt_rhs - kappa * dtau) / tau;
        };

        // affine (predictor) direction
        RVector ds_rhs_aff = -jordan_prod(dims, L, lam, lam);
        double dkt_aff = -tau * kappa;
        RVector dxa, dya, dza, dsa;
        double dta, dka;
        direction(ds_rhs_aff, dkt_aff, dxa, dya, dza, dsa, dta, dka);

        double alpha_aff = 1.0;
        alpha_aff = std::min(alpha_aff, max_step(dims, L, s, dsa));
        alpha_aff = std::min(alpha_aff, max_step(dims, L, z, dza));
        if (dta < 0) alpha_aff = std::min(alpha_aff, -tau / dta);
        if (dka < 0) alpha_aff = std::min(alpha_aff, -kappa / dka);
        alpha_aff = std::max(0.0, std::min(1.0, alpha_aff));
        double sigma = std::pow(1.0 - alpha_aff, 3);
        sigma = std::min(1.0, std::max(0.0, sigma));

        // combined (corrector) direction with Mehrotra second-order term
        RVector ws = apply_WinvT(dims, L, W, dsa);
        RVector wz = apply_W(dims, L, W, dza);
        RVector eta_corr = jordan_prod(dims, L, ws, wz);
        RVector ds_rhs = -jordan_prod(dims, L, lam, lam) - eta_corr + sigma * mu * e;
        double dkt = -tau * kappa - dta * dka + sigma * mu;
        RVector dx, dy, dz, ds;
        double dtau, dkappa;
        direction(ds_rhs, dkt, dx, dy, dz, ds, dtau, dkappa);

        double alpha = 1.0;
        alpha = std::min(alpha, kStepBack * max_step(dims, L, s, ds));
        alpha = std::min(alpha, kStepBack * max_step(dims, L, z, dz));
        if (dtau < 0) alpha = std::min(alpha, kStepBack * (-tau / dtau));
        if (dkappa < 0) alpha = std::min(alpha, kStepBack * (-kappa / dkappa));
        alpha = std::min(1.0, alpha);
        if (getenv("TWRS_CONELP_TRACE"))
            fprintf(stderr, "      alpha_aff=%9.2e sigma=%9.2e alpha=%9.2e mu=%9.2e\n",
                    alpha_aff, sigma, alpha, mu);
        if (!(alpha > 1e-8) || !std::isfinite(alpha)) {
            return finish_fail(res, Status::NumericalFailure);
        }

        x += alpha * dx;
        if (p) y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if (tau <= 0 || kappa <= 0) {
            return finish_fail(res, Status::NumericalFailure);
        }

        // stall detection: repeated micro-steps cannot improve the iterate
        if (alpha < 1e-4) {
            if (++stalled >= 3) {
                return finish_fail(res, Status::NumericalFailure);
            }
        } else {
            stalled = 0;
        }
    }

    return finish_fail(res, Status::MaxIterations);
}

}  // namespace twrs::conelp
