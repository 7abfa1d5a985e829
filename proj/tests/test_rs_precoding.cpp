#include "twrs/rs_precoding.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace twrs;

namespace {

std::mt19937_64 rng(1);

Complex crand() {
    std::normal_distribution<double> g;
    return Complex(g(rng), g(rng)) / std::sqrt(2.0);
}

CMatrix random_cmatrix(int r, int c) {
    CMatrix X(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) X(i, j) = crand();
    return X;
}

CMatrix random_hermitian(int n) {
    CMatrix X = random_cmatrix(n, n);
    return (X + X.adjoint()) * 0.5;
}

CMatrix random_psd(int n) {
    CMatrix X = random_cmatrix(n, n);
    return X * X.adjoint();
}

ChannelSet random_channel(int N, int M, int K, double P = 1.0, double L = 1.0) {
    ChannelSet ch;
    ch.H1 = random_cmatrix(M, N);
    ch.H2 = random_cmatrix(M, K);
    ch.G1 = random_cmatrix(N, M);
    ch.G2 = random_cmatrix(K, M);
    ch.sigma2_k.assign(K, 1.0);
    ch.P_k.assign(K, P);
    ch.P_R = P;
    ch.P_B = L * P;
    ch.validate();
    return ch;
}

std::vector<double> scaled_targets(const ChannelSet& ch, double frac) {
    auto eps = baseline_sinr(ch);
    for (auto& e : eps) e *= frac;
    return eps;
}

// KKT-consistent planted instance: the lifted optimum is x* x*^H with
// x* = [1; f*], every inequality active, and a psd dual slack vanishing on x*.
struct Planted {
    HomogenizedQcqp h;
    QcqpInstance q;
    CVector fstar;
    double opt;
};

Planted plant_rank_one(int M, int n_stream, std::uint64_t seed) {
    rng.seed(seed);
    const int m2 = M * M;
    const int n = m2 + 1;
    Planted p;
    p.fstar = random_cmatrix(m2, 1);
    CVector xstar(n);
    xstar(0) = 1.0;
    xstar.tail(m2) = p.fstar;

    p.q.M = M;
    p.q.Qx = random_psd(m2) + 0.5 * CMatrix::Identity(m2, m2);
    p.q.P_R = ((p.fstar.adjoint() * p.q.Qx * p.fstar)(0, 0)).real();
    for (int k = 0; k < n_stream; ++k) {
        CMatrix Qk = random_hermitian(m2);
        double rhs = ((p.fstar.adjoint() * Qk * p.fstar)(0, 0)).real();
        if (rhs < 0) {
            Qk = -Qk;
            rhs = -rhs;
        }
        if (rhs < 0.05) {
            Qk += 0.1 * CMatrix::Identity(m2, m2);
            rhs = ((p.fstar.adjoint() * Qk * p.fstar)(0, 0)).real();
        }
        p.q.Qk.push_back(Qk);
        p.q.rhs_k.push_back(rhs);
        p.q.stream_of.push_back(k);
    }

    // dual slack psd and vanishing exactly on x*
    CMatrix R = random_cmatrix(n, n);
    CMatrix proj = CMatrix::Identity(n, n) - xstar * xstar.adjoint() / xstar.squaredNorm();
    CMatrix Z = proj * (R * R.adjoint()) * proj;
    Z = (Z + Z.adjoint()) * 0.5;

    HomogenizedQcqp h;
    h.dim = n;
    h.M = M;
    h.Qtx = CMatrix::Zero(n, n);
    h.Qtx(0, 0) = -p.q.P_R;
    h.Qtx.block(1, 1, m2, m2) = p.q.Qx;
    for (int k = 0; k < n_stream; ++k) {
        CMatrix Qtk = CMatrix::Zero(n, n);
        Qtk(0, 0) = p.q.rhs_k[k];
        Qtk.block(1, 1, m2, m2) = -p.q.Qk[k];
        h.Qtk.push_back(Qtk);
    }
    h.Q = CMatrix::Zero(n, n);
    h.Q(0, 0) = 1.0;

    std::uniform_real_distribution<double> ud(0.3, 1.2);
    double yx = ud(rng), y4 = ud(rng) - 0.6;
    h.Qt0 = Z - yx * h.Qtx - y4 * h.Q;
    for (int k = 0; k < n_stream; ++k) h.Qt0 -= ud(rng) * h.Qtk[k];
    h.Qt0 = (h.Qt0 + h.Qt0.adjoint()) * 0.5;
    p.h = h;

    // objective record for the inhomogeneous form
    p.q.q0s = h.Qt0(0, 0).real();
    p.q.q0 = -h.Qt0.block(1, 0, m2, 1);
    p.q.Q0 = h.Qt0.block(1, 1, m2, m2);
    p.opt = ((xstar.adjoint() * h.Qt0 * xstar)(0, 0)).real();
    return p;
}

}  // namespace

TEST_CASE("assembly: degenerate decoder gives the constant objective") {
    rng.seed(11);
    ChannelSet ch = random_channel(2, 2, 2);
    auto q = assemble_qcqp(CMatrix::Zero(2, 2), CMatrix::Identity(2, 2),
                           baseline_bs_precoder(ch), ch, {0.1, 0.1});
    CHECK(q.Q0.norm() == doctest::Approx(0.0));
    CHECK(q.q0.norm() == doctest::Approx(0.0));
    CHECK(q.q0s == doctest::Approx(2.0));
}

TEST_CASE("assembly equivalence: quadratic forms match the model metrics") {
    rng.seed(12);
    for (int t = 0; t < 100; ++t) {
        int K = 1 + static_cast<int>(rng() % 3);
        int N = K + static_cast<int>(rng() % 2);
        int M = K + static_cast<int>(rng() % 2);
        ChannelSet ch = random_channel(N, M, K, 1.0 + (t % 3), 2.0);
        CMatrix B = random_cmatrix(N, K);
        CMatrix W = random_cmatrix(K, N);
        CMatrix A = random_psd(K) + 0.2 * CMatrix::Identity(K, K);
        std::vector<double> lambda(K);
        for (int k = 0; k < K; ++k) lambda[k] = 0.05 + 0.4 * (k + 1);
        auto q = assemble_qcqp(W, A, B, ch, lambda);
        CMatrix F = random_cmatrix(M, M);
        CVector f = numkit::vec_mat(F);

        double obj_direct = weighted_mse_objective(F, W, A, ch);
        CHECK(q.objective(f) ==
              doctest::Approx(obj_direct).epsilon(1e-9));
        CHECK(q.power(f) == doctest::Approx(relay_tx_power(B, F, ch)).epsilon(1e-9));
        for (size_t i = 0; i < q.Qk.size(); ++i) {
            int k = q.stream_of[i];
            double lhs = q.sinr_form(static_cast<int>(i), f) - q.rhs_k[i];
            double rhs = downlink_sinr(k, B, F, ch) - lambda[k];
            CHECK(lhs * rhs >= -1e-12);  // matching signs
        }
    }
}

TEST_CASE("homogenization: corner-only and rotation identities") {
    rng.seed(13);
    ChannelSet ch = random_channel(2, 2, 2);
    auto q0case = assemble_qcqp(CMatrix::Zero(2, 2), CMatrix::Identity(2, 2),
                                baseline_bs_precoder(ch), ch, {0.1, 0.1});
    auto h0 = homogenize_qcqp(q0case);
    CHECK((h0.Qt0 - q0case.q0s * h0.Q).norm() == doctest::Approx(0.0));

    auto q = assemble_qcqp(random_cmatrix(2, 2), CMatrix::Identity(2, 2),
                           random_cmatrix(2, 2), ch, {0.2, 0.3});
    auto h = homogenize_qcqp(q);
    CMatrix F = random_cmatrix(2, 2);
    CVector f = numkit::vec_mat(F);
    CVector x(h.dim);
    x(0) = 1.0;
    x.tail(4) = f;
    double lifted = ((x.adjoint() * h.Qt0 * x)(0, 0)).real();
    CHECK(lifted == doctest::Approx(q.objective(f)).epsilon(1e-12));

    Complex t = std::exp(Complex(0, M_PI / 3));
    CVector xr(h.dim);
    xr(0) = t;
    xr.tail(4) = t * f;
    double lifted_r = ((xr.adjoint() * h.Qt0 * xr)(0, 0)).real();
    CHECK(lifted_r == doctest::Approx(q.objective(f)).epsilon(1e-12));

    // power and stream forms embed with the same block pattern
    double pw = ((x.adjoint() * h.Qtx * x)(0, 0)).real();
    CHECK(pw == doctest::Approx(q.power(f) - q.P_R).epsilon(1e-12));
}

TEST_CASE("solve_sdr: planted rank-one optimum is recovered") {
    int hit = 0;
    for (int t = 0; t < 6; ++t) {
        auto p = plant_rank_one(2, 2, 100 + t);
        auto out = solve_sdr(p.h);
        REQUIRE(out.status == SolveStatus::Optimal);
        CHECK(out.objective_lb == doctest::Approx(p.opt).epsilon(1e-5));
        if (out.rank == 1) {
            ++hit;
            CVector f = extract_rank_one(out);
            double align = std::abs((f.adjoint() * p.fstar)(0, 0)) /
                           (f.norm() * p.fstar.norm());
            CHECK(align > 1.0 - 1e-4);
        }
    }
    CHECK(hit >= 4);  // the planted face is a single ray; rank one is generic
}

TEST_CASE("solve_sdr: unreachable targets are certified infeasible") {
    rng.seed(14);
    ChannelSet ch = random_channel(2, 2, 2);
    CMatrix B = baseline_bs_precoder(ch);
    auto q = assemble_qcqp(mmse_decoder(baseline_rs_precoder(ch), ch),
                           CMatrix::Identity(2, 2), B, ch, {1e9, 1e9});
    auto out = solve_sdr(homogenize_qcqp(q));
    CHECK(out.status == SolveStatus::Infeasible);
}

TEST_CASE("solve_sdr: relaxation value lower-bounds sampled feasible points") {
    rng.seed(15);
    ChannelSet ch = random_channel(2, 2, 2, 2.0, 2.0);
    CMatrix B = baseline_bs_precoder(ch);
    CMatrix F0 = baseline_rs_precoder(ch);
    auto lambda = scaled_targets(ch, 0.6);
    auto q = assemble_qcqp(mmse_decoder(F0, ch), CMatrix::Identity(2, 2), B, ch, lambda);
    auto out = solve_sdr(homogenize_qcqp(q));
    REQUIRE(out.status == SolveStatus::Optimal);
    int feasible = 0;
    for (int s = 0; s < 10000; ++s) {
        CVector f = numkit::vec_mat(random_cmatrix(2, 2));
        double p = q.power(f);
        if (p > q.P_R) f *= std::sqrt(q.P_R / p);
        if (!q.feasible(f)) continue;
        ++feasible;
        CHECK(q.objective(f) >= out.objective_lb - 1e-6);
    }
    CHECK(feasible > 0);
}

TEST_CASE("reduce_rank_by_slack: conservation on a constructed rank-2 instance") {
    rng.seed(16);
    const int M = 2, m2 = 4, n = 5;
    for (int t = 0; t < 10; ++t) {
        CVector f1 = numkit::vec_mat(random_cmatrix(m2, 1));
        CVector f2 = numkit::vec_mat(random_cmatrix(m2, 1));
        CVector x1(n), x2(n);
        x1(0) = 1.0;
        x1.tail(m2) = f1;
        x2(0) = 0.0;
        x2.tail(m2) = f2;
        CMatrix X = x1 * x1.adjoint() + x2 * x2.adjoint();

        HomogenizedQcqp h;
        h.dim = n;
        h.M = M;
        CMatrix Qx = random_psd(m2) + 0.5 * CMatrix::Identity(m2, m2);
        double PR = ((f1.adjoint() * Qx * f1)(0, 0)).real() +
                    ((f2.adjoint() * Qx * f2)(0, 0)).real();
        h.Qtx = CMatrix::Zero(n, n);
        h.Qtx(0, 0) = -PR;
        h.Qtx.block(1, 1, m2, m2) = Qx;

        CMatrix Q1 = random_hermitian(m2);
        double v1 = ((f1.adjoint() * Q1 * f1)(0, 0)).real() +
                    ((f2.adjoint() * Q1 * f2)(0, 0)).real();
        if (v1 < 0) {
            Q1 = -Q1;
            v1 = -v1;
        }
        CMatrix Qt1 = CMatrix::Zero(n, n);
        Qt1(0, 0) = v1;  // active
        Qt1.block(1, 1, m2, m2) = -Q1;

        CMatrix Q2 = random_hermitian(m2);
        double v2 = ((f1.adjoint() * Q2 * f1)(0, 0)).real() +
                    ((f2.adjoint() * Q2 * f2)(0, 0)).real();
        CMatrix Qt2 = CMatrix::Zero(n, n);
        Qt2(0, 0) = v2 - 0.8;  // slack 0.8
        Qt2.block(1, 1, m2, m2) = -Q2;

        h.Qtk = {Qt1, Qt2};
        h.Q = CMatrix::Zero(n, n);
        h.Q(0, 0) = 1.0;

        // dual slack vanishing on span{x1, x2}; inactive multiplier is zero
        CMatrix V(n, 2);
        V << x1, x2;
        CMatrix proj = CMatrix::Identity(n, n) -
                       V * (V.adjoint() * V).inverse() * V.adjoint();
        CMatrix Z = proj * random_psd(n) * proj;
        Z = (Z + Z.adjoint()) * 0.5;
        double y1 = 0.7, yx = 0.9, y4 = -0.3;
        h.Qt0 = Z - y1 * Qt1 - yx * h.Qtx - y4 * h.Q;
        h.Qt0 = (h.Qt0 + h.Qt0.adjoint()) * 0.5;

        SdrOutcome out;
        out.status = SolveStatus::Optimal;
        out.X = X;
        out.duals = {y1, 0.0, yx, y4};
        out.objective_lb = (h.Qt0 * X).trace().real();
        out.rank = 2;
        out.active = {true, false, true};

        auto red = reduce_rank_by_slack(out, h);
        CHECK(red.rank == 1);
        CHECK(red.X(0, 0).real() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((h.Qt0 * red.X).trace().real() ==
              doctest::Approx(out.objective_lb).epsilon(1e-7));
        // feasibility and complementary slackness with the same duals
        CHECK((h.Qtx * red.X).trace().real() <= 1e-7);
        CHECK((Qt1 * red.X).trace().real() <= 1e-7);
        CHECK((Qt2 * red.X).trace().real() <= 1e-7);
        CHECK(std::abs(y1 * (Qt1 * red.X).trace().real()) < 1e-5);
        CHECK(std::abs(yx * (h.Qtx * red.X).trace().real()) < 1e-5);
        CHECK(std::abs((Z * red.X).trace().real()) < 1e-5);

        // idempotent on rank-one input
        auto red2 = reduce_rank_by_slack(red, h);
        CHECK((red2.X - red.X).norm() <= 1e-12);
    }
}

TEST_CASE("joint_pair_decomposition: reconstruction and per-vector equalities") {
    rng.seed(17);
    for (int t = 0; t < 20; ++t) {
        int n = 5, R = 3;
        CMatrix V = random_cmatrix(n, R);
        CMatrix X = V * V.adjoint();
        CMatrix A1 = random_hermitian(n);
        CMatrix A2 = random_hermitian(n);
        CMatrix P = joint_pair_decomposition(X, A1, A2);
        CHECK((P * P.adjoint() - X).norm() <= 1e-8 * std::max(1.0, X.norm()));
        double d1 = (A1 * X).trace().real() / P.cols();
        double d2 = (A2 * X).trace().real() / P.cols();
        for (int r = 0; r < P.cols(); ++r) {
            CHECK(((P.col(r).adjoint() * A1 * P.col(r))(0, 0)).real() ==
                  doctest::Approx(d1).epsilon(1e-7));
            CHECK(((P.col(r).adjoint() * A2 * P.col(r))(0, 0)).real() ==
                  doctest::Approx(d2).epsilon(1e-7));
        }
    }
}

TEST_CASE("reduce_rank_d3: all-active rank-3 input yields a tight rank-one point") {
    rng.seed(18);
    int built = 0;
    for (int t = 0; t < 12 && built < 6; ++t) {
        const int M = 2, m2 = 4, n = 5;
        // three lifted vectors, first corner nonzero, constraints active by
        // construction of the right-hand sides
        CMatrix Vr = random_cmatrix(n, 3);
        Vr(0, 0) = 1.0;
        Vr(0, 1) = Complex(0.4, 0.2);
        Vr(0, 2) = Complex(-0.1, 0.5);
        double corner = Vr.row(0).squaredNorm();
        Vr /= std::sqrt(corner);  // Tr(Q X) = 1
        CMatrix X = Vr * Vr.adjoint();

        HomogenizedQcqp h;
        h.dim = n;
        h.M = M;
        CMatrix Qx = random_psd(m2) + 0.5 * CMatrix::Identity(m2, m2);
        CMatrix Q1 = random_hermitian(m2);
        CMatrix Q2 = random_hermitian(m2);
        CMatrix blkX = X.block(1, 1, m2, m2);
        double px = (Qx * blkX).trace().real();
        double r1 = (Q1 * blkX).trace().real();
        double r2 = (Q2 * blkX).trace().real();
        if (r1 < 0) { Q1 = -Q1; r1 = -r1; }
        if (r2 < 0) { Q2 = -Q2; r2 = -r2; }
        if (r1 < 0.05 || r2 < 0.05 || px < 0.05) continue;
        ++built;
        h.Qtx = CMatrix::Zero(n, n);
        h.Qtx(0, 0) = -px;
        h.Qtx.block(1, 1, m2, m2) = Qx;
        CMatrix Qt1 = CMatrix::Zero(n, n);
        Qt1(0, 0) = r1;
        Qt1.block(1, 1, m2, m2) = -Q1;
        CMatrix Qt2 = CMatrix::Zero(n, n);
        Qt2(0, 0) = r2;
        Qt2.block(1, 1, m2, m2) = -Q2;
        h.Qtk = {Qt1, Qt2};
        h.Q = CMatrix::Zero(n, n);
        h.Q(0, 0) = 1.0;
        CMatrix proj = CMatrix::Identity(n, n) -
                       Vr * (Vr.adjoint() * Vr).inverse() * Vr.adjoint();
        CMatrix Z = proj * random_psd(n) * proj;
        double y1 = 0.5, y2 = 0.8, yx = 0.6, y4 = 0.1;
        h.Qt0 = Z - y1 * Qt1 - y2 * Qt2 - yx * h.Qtx - y4 * h.Q;
        h.Qt0 = (h.Qt0 + h.Qt0.adjoint()) * 0.5;

        SdrOutcome out;
        out.status = SolveStatus::Optimal;
        out.X = X;
        out.duals = {y1, y2, yx, y4};
        out.objective_lb = (h.Qt0 * X).trace().real();
        out.rank = 3;
        out.active = {true, true, true};

        auto red = reduce_rank_d3(out, h);
        CHECK(red.rank == 1);
        // the extracted direction meets every constraint with equality
        CHECK(std::abs((Qt1 * red.X).trace().real()) < 1e-7);
        CHECK(std::abs((Qt2 * red.X).trace().real()) < 1e-7);
        CHECK(std::abs((h.Qtx * red.X).trace().real()) < 1e-7);
        CHECK(red.X(0, 0).real() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((h.Qt0 * red.X).trace().real() ==
              doctest::Approx(out.objective_lb).epsilon(1e-6));
    }
    CHECK(built >= 6);
}

TEST_CASE("reduce_rank_d3: rejects the excluded all-active rank-2 case") {
    auto p = plant_rank_one(2, 2, 321);
    SdrOutcome fake;
    fake.status = SolveStatus::Optimal;
    CVector x1(5), x2(5);
    x1.setZero();
    x2.setZero();
    x1(0) = 1.0;
    x2(1) = 1.0;
    fake.X = x1 * x1.adjoint() + x2 * x2.adjoint();
    fake.rank = 2;
    fake.active = {true, true, true};
    CHECK_THROWS_AS(reduce_rank_d3(fake, p.h), PreconditionViolated);
}

TEST_CASE("suboptimal_d2: all-active rank-2 fallback is feasible with equalities") {
    rng.seed(19);
    int built = 0;
    for (int t = 0; t < 20 && built < 8; ++t) {
        const int M = 2, m2 = 4, n = 5;
        CVector f1 = numkit::vec_mat(random_cmatrix(m2, 1));
        CVector f2 = numkit::vec_mat(random_cmatrix(m2, 1));
        CVector x1(n), x2(n);
        x1(0) = Complex(0.8, 0.0);
        x1.tail(m2) = f1;
        x2(0) = Complex(0.6, 0.0);
        x2.tail(m2) = f2;
        CMatrix X = x1 * x1.adjoint() + x2 * x2.adjoint();  // corner = 1

        HomogenizedQcqp h;
        h.dim = n;
        h.M = M;
        CMatrix blkX = X.block(1, 1, m2, m2);
        CMatrix Qx = random_psd(m2) + 0.5 * CMatrix::Identity(m2, m2);
        CMatrix Q1 = random_hermitian(m2);
        CMatrix Q2 = random_hermitian(m2);
        double px = (Qx * blkX).trace().real();
        double r1 = (Q1 * blkX).trace().real();
        double r2 = (Q2 * blkX).trace().real();
        if (r1 < 0) { Q1 = -Q1; r1 = -r1; }
        if (r2 < 0) { Q2 = -Q2; r2 = -r2; }
        if (r1 < 0.05 || r2 < 0.05) continue;
        ++built;
        h.Qtx = CMatrix::Zero(n, n);
        h.Qtx(0, 0) = -px;
        h.Qtx.block(1, 1, m2, m2) = Qx;
        CMatrix Qt1 = CMatrix::Zero(n, n);
        Qt1(0, 0) = r1;
        Qt1.block(1, 1, m2, m2) = -Q1;
        CMatrix Qt2 = CMatrix::Zero(n, n);
        Qt2(0, 0) = r2;
        Qt2.block(1, 1, m2, m2) = -Q2;
        h.Qtk = {Qt1, Qt2};
        h.Q = CMatrix::Zero(n, n);
        h.Q(0, 0) = 1.0;
        h.Qt0 = random_hermitian(n);

        SdrOutcome out;
        out.status = SolveStatus::Optimal;
        out.X = X;
        out.duals = {0.1, 0.1, 0.1, 0.0};
        out.objective_lb = (h.Qt0 * X).trace().real();
        out.rank = 2;
        out.active = {true, true, true};

        auto sub = suboptimal_d2(out, h);
        CHECK(sub.rank == 1);
        CVector f = extract_rank_one(sub);
        // every quadratic form lands exactly on its target
        CHECK(((f.adjoint() * Qx * f)(0, 0)).real() == doctest::Approx(px).epsilon(1e-7));
        CHECK(((f.adjoint() * Q1 * f)(0, 0)).real() == doctest::Approx(r1).epsilon(1e-7));
        CHECK(((f.adjoint() * Q2 * f)(0, 0)).real() == doctest::Approx(r2).epsilon(1e-7));
    }
    CHECK(built >= 8);
}

TEST_CASE("randomization: degenerate covariance returns the mean") {
    auto p = plant_rank_one(2, 2, 777);
    CVector x(5);
    x(0) = 1.0;
    x.tail(4) = p.fstar;
    SdrOutcome out;
    out.status = SolveStatus::Optimal;
    out.X = x * x.adjoint();
    out.rank = 1;
    std::mt19937_64 r(3);
    auto f = randomize_from_sdr(p.q, out, 50, r);
    REQUIRE(f.has_value());
    CHECK((*f - p.fstar).norm() <= 1e-9 * std::max(1.0, p.fstar.norm()));
}

TEST_CASE("randomization: nested sample counts never get worse") {
    rng.seed(20);
    ChannelSet ch = random_channel(3, 3, 3, 2.0, 2.0);
    CMatrix B = baseline_bs_precoder(ch);
    CMatrix F0 = baseline_rs_precoder(ch);
    auto lambda = scaled_targets(ch, 0.8);
    auto q = assemble_qcqp(mmse_decoder(F0, ch), CMatrix::Identity(3, 3), B, ch, lambda);
    auto out = solve_sdr(homogenize_qcqp(q));
    REQUIRE(out.status == SolveStatus::Optimal);

    double prev = 1e300;
    for (int count : {100, 500, 2000, 5000}) {
        std::mt19937_64 r(99);  // same stream: smaller counts are prefixes
        auto f = randomize_from_sdr(q, out, count, r);
        REQUIRE(f.has_value());
        double obj = q.objective(*f);
        CHECK(obj <= prev + 1e-12);
        CHECK(obj >= out.objective_lb - 1e-6);
        prev = obj;
    }
}

TEST_CASE("update_weight_matrix: scaled mse matrix with bounded spectrum") {
    rng.seed(21);
    ChannelSet ch = random_channel(2, 2, 2);
    CHECK((update_weight_matrix(CMatrix::Zero(2, 2), ch) -
           CMatrix::Identity(2, 2) / std::log(2.0))
              .norm() <= 1e-12);
    for (int t = 0; t < 10; ++t) {
        CMatrix F = random_cmatrix(2, 2);
        CMatrix A = update_weight_matrix(F, ch);
        CHECK((A - mse_matrix_E(F, ch) / std::log(2.0)).norm() <= 1e-10);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(A);
        CHECK(es.eigenvalues().minCoeff() >= 1.0 / std::log(2.0) - 1e-9);
    }
}

TEST_CASE("weight scale cancels in the precoder update") {
    rng.seed(22);
    ChannelSet ch = random_channel(2, 2, 2, 1.0, 2.0);
    CMatrix B = baseline_bs_precoder(ch);
    CMatrix F0 = baseline_rs_precoder(ch);
    CMatrix W = mmse_decoder(F0, ch);
    CMatrix A = update_weight_matrix(F0, ch);
    auto lambda = scaled_targets(ch, 0.7);
    RsOptions opts;
    std::mt19937_64 r1(5), r2(5);
    auto s1 = rs_step_update_F(W, A, B, ch, lambda, F0, opts, r1);
    auto s2 = rs_step_update_F(W, CMatrix(3.7 * A), B, ch, lambda, F0, opts, r2);
    REQUIRE(s1.status == SolveStatus::Optimal);
    REQUIRE(s2.status == SolveStatus::Optimal);
    CHECK((s1.F - s2.F).norm() <= 1e-4 * std::max(1.0, s1.F.norm()));
}

TEST_CASE("rs_step_update_F: never increases the weighted objective") {
    rng.seed(23);
    for (int t = 0; t < 10; ++t) {
        int K = 1 + static_cast<int>(rng() % 3);
        ChannelSet ch = random_channel(K + 1, K + 1, K, 1.0 + (t % 2), 2.0);
        CMatrix B = baseline_bs_precoder(ch);
        auto lambda = scaled_targets(ch, 0.8);
        RsOptions opts;
        auto F0 = find_initial_F(B, ch, lambda, opts);
        REQUIRE(F0.has_value());
        CMatrix W = mmse_decoder(*F0, ch);
        CMatrix I = CMatrix::Identity(K, K);
        auto q = assemble_qcqp(W, I, B, ch, lambda);
        std::mt19937_64 r(7);
        auto step = rs_step_update_F(W, I, B, ch, lambda, *F0, opts, r);
        REQUIRE(step.status == SolveStatus::Optimal);
        CHECK(q.objective(numkit::vec_mat(step.F)) <=
              q.objective(numkit::vec_mat(*F0)) + 1e-9);
        CHECK(q.feasible(numkit::vec_mat(step.F), 1e-5));
    }
}

TEST_CASE("rs_precode_mse: monotone trace and quick convergence at talk-scale") {
    rng.seed(24);
    int converged = 0, total = 0;
    for (int t = 0; t < 10; ++t) {
        double P = std::pow(10.0, 5.0 / 10.0);  // 5 dB
        ChannelSet ch = random_channel(2, 2, 2, P, 5.0);
        CMatrix B = baseline_bs_precoder(ch);
        auto lambda = baseline_sinr(ch);
        RsOptions opts;
        opts.tol = 1e-3;
        auto res = rs_precode_mse(B, ch, lambda, opts);
        if (res.status != SolveStatus::Optimal) continue;
        ++total;
        const auto& tr = res.metrics.objective_trace;
        for (size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] <= tr[i - 1] + 1e-9);
        if (res.metrics.iterations < 20) ++converged;
        // final point satisfies targets and budget
        for (int k = 0; k < 2; ++k)
            CHECK(res.metrics.sinr[k] >= lambda[k] * (1.0 - 1e-5));
        CHECK(res.metrics.relay_power <= ch.P_R * (1.0 + 1e-5));
    }
    CHECK(total >= 9);
    CHECK(converged >= static_cast<int>(0.9 * total));
}

TEST_CASE("rs_precode_mse: K=3 path with randomization stays feasible") {
    rng.seed(25);
    double P = std::pow(10.0, 5.0 / 10.0);
    ChannelSet ch = random_channel(3, 3, 3, P, 5.0);
    CMatrix B = baseline_bs_precoder(ch);
    auto lambda = baseline_sinr(ch);
    RsOptions opts;
    opts.tol = 1e-3;
    auto res = rs_precode_mse(B, ch, lambda, opts);
    REQUIRE(res.status == SolveStatus::Optimal);
    const auto& tr = res.metrics.objective_trace;
    for (size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] <= tr[i - 1] + 1e-9);
    for (int k = 0; k < 3; ++k) CHECK(res.metrics.sinr[k] >= lambda[k] * (1.0 - 1e-5));
    CHECK(res.metrics.relay_power <= ch.P_R * (1.0 + 1e-5));
    CHECK(res.metrics.iterations <= 30);
}

TEST_CASE("rs_precode_rate: frozen weight reproduces the mse trajectory") {
    rng.seed(26);
    ChannelSet ch = random_channel(2, 2, 2, 2.0, 3.0);
    CMatrix B = baseline_bs_precoder(ch);
    auto lambda = baseline_sinr(ch);
    RsOptions opts;
    opts.tol = 0.0;  // run the full budget on both sides
    opts.max_iter = 6;
    auto mse = rs_precode_mse(B, ch, lambda, opts);
    RsOptions fopts = opts;
    fopts.freeze_weight = true;
    auto frozen = rs_precode_rate(B, ch, lambda, fopts);
    REQUIRE(mse.status == SolveStatus::Optimal);
    REQUIRE(frozen.status == SolveStatus::Optimal);
    CHECK((mse.F - frozen.F).norm() <= 1e-12 * std::max(1.0, mse.F.norm()));
}

TEST_CASE("rs_precode_rate: monotone rate and final beats start") {
    rng.seed(27);
    ChannelSet ch = random_channel(2, 2, 2, 2.0, 3.0);
    CMatrix B = baseline_bs_precoder(ch);
    auto lambda = baseline_sinr(ch);
    RsOptions opts;
    opts.tol = 1e-4;
    auto res = rs_precode_rate(B, ch, lambda, opts);
    REQUIRE(res.status == SolveStatus::Optimal);
    const auto& tr = res.metrics.objective_trace;
    for (size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] >= tr[i - 1] - 1e-9);
    CHECK(tr.back() >= tr.front() - 1e-9);
}

TEST_CASE("rs_precode_rate: targets rate better than the mse design usually") {
    rng.seed(28);
    int wins = 0, total = 0;
    for (int t = 0; t < 10; ++t) {
        ChannelSet ch = random_channel(2, 2, 2, 2.0, 2.0);
        CMatrix B = baseline_bs_precoder(ch);
        auto lambda = baseline_sinr(ch);
        RsOptions opts;
        auto rmse = rs_precode_mse(B, ch, lambda, opts);
        auto rrate = rs_precode_rate(B, ch, lambda, opts);
        if (rmse.status != SolveStatus::Optimal || rrate.status != SolveStatus::Optimal)
            continue;
        ++total;
        if (rrate.metrics.sum_rate >= rmse.metrics.sum_rate - 1e-9) ++wins;
    }
    CHECK(total >= 9);
    CHECK(wins >= static_cast<int>(0.8 * total));
}

TEST_CASE("initialization robustness: different starts land together") {
    rng.seed(29);
    double P = std::pow(10.0, 5.0 / 10.0);
    ChannelSet ch = random_channel(2, 2, 2, P, 5.0);
    CMatrix B = baseline_bs_precoder(ch);
    auto lambda = baseline_sinr(ch);
    RsOptions opts;
    opts.tol = 1e-5;
    opts.max_iter = 40;

    std::vector<double> finals;
    auto base = rs_precode_mse(B, ch, lambda, opts);
    REQUIRE(base.status == SolveStatus::Optimal);
    finals.push_back(base.metrics.total_mse);

    int tries = 0;
    while (finals.size() < 4 && tries++ < 30) {
        CMatrix Fr = random_cmatrix(2, 2);
        double p = relay_tx_power(B, Fr, ch);
        Fr *= std::sqrt(ch.P_R / p);
        bool feas = true;
        for (int k = 0; k < 2; ++k)
            if (downlink_sinr(k, B, Fr, ch) < lambda[k]) feas = false;
        if (!feas) continue;
        RsOptions ro = opts;
        ro.initial_F = Fr;
        auto r = rs_precode_mse(B, ch, lambda, ro);
        if (r.status == SolveStatus::Optimal) finals.push_back(r.metrics.total_mse);
    }
    REQUIRE(finals.size() >= 3);
    double lo = *std::min_element(finals.begin(), finals.end());
    double hi = *std::max_element(finals.begin(), finals.end());
    CHECK((hi - lo) / lo < 0.01);
}
