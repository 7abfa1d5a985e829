#include "twrs/system_model.hpp"

#include <cmath>

namespace twrs {

namespace {

// (s_R^2 G1 F F^H G1^H + s_B^2 I)^{-1}, shared by the E and rate paths
CMatrix uplink_noise_inverse(const CMatrix& F, const ChannelSet& ch) {
    const int N = ch.N();
    CMatrix Rn = ch.sigma2_R * (ch.G1 * F * F.adjoint() * ch.G1.adjoint()) +
                 ch.sigma2_B * CMatrix::Identity(N, N);
    Eigen::LDLT<CMatrix> ldlt((Rn + Rn.adjoint()) * 0.5);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().real().minCoeff() <= 1e-14 * std::max(1.0, Rn.norm()))
        throw SingularNoise("uplink noise covariance is singular");
    return ldlt.solve(CMatrix::Identity(N, N));
}

}  // namespace

CMatrix ChannelSet::P() const {
    CMatrix D = CMatrix::Zero(K(), K());
    for (int k = 0; k < K(); ++k) D(k, k) = std::sqrt(P_k[k]);
    return D;
}

void ChannelSet::validate() const {
    require(H1.rows() == M() && H1.cols() == N(), "ChannelSet: H1 shape");
    require(H2.rows() == M() && H2.cols() == K(), "ChannelSet: H2 shape");
    require(G1.rows() == N() && G1.cols() == M(), "ChannelSet: G1 shape");
    require(G2.rows() == K() && G2.cols() == M(), "ChannelSet: G2 shape");
    require(N() >= K() && M() >= K(), "ChannelSet: needs N >= K and M >= K");
    require(static_cast<int>(sigma2_k.size()) == K(), "ChannelSet: sigma2_k size");
    require(static_cast<int>(P_k.size()) == K(), "ChannelSet: P_k size");
    require(sigma2_R >= 0 && sigma2_B >= 0, "ChannelSet: negative noise variance");
    for (double v : sigma2_k) require(v >= 0, "ChannelSet: negative noise variance");
    require(P_B > 0 && P_R > 0, "ChannelSet: powers must be positive");
    for (double v : P_k) require(v > 0, "ChannelSet: powers must be positive");
}

double relay_tx_power(const CMatrix& B, const CMatrix& F, const ChannelSet& ch) {
    require(B.rows() == ch.N() && B.cols() == ch.K(), "relay_tx_power: B shape");
    require(F.rows() == ch.M() && F.cols() == ch.M(), "relay_tx_power: F shape");
    CMatrix P = ch.P();
    CMatrix R = ch.H1 * B * B.adjoint() * ch.H1.adjoint() +
                ch.H2 * P * P.adjoint() * ch.H2.adjoint() +
                ch.sigma2_R * CMatrix::Identity(ch.M(), ch.M());
    return (F * R * F.adjoint()).trace().real();
}

double downlink_sinr(int k, const CMatrix& B, const CMatrix& F, const ChannelSet& ch) {
    require(k >= 0 && k < ch.K(), "downlink_sinr: stream index");
    require(B.rows() == ch.N() && B.cols() == ch.K(), "downlink_sinr: B shape");
    require(F.rows() == ch.M() && F.cols() == ch.M(), "downlink_sinr: F shape");
    const Eigen::RowVectorXcd gF = ch.G2.row(k) * F;  // g_2k^T F
    const Eigen::RowVectorXcd gFH1 = gF * ch.H1;
    double num = std::norm((gFH1 * B.col(k)).value());
    double den = ch.sigma2_R * gF.squaredNorm() + ch.sigma2_k[k];
    for (int i = 0; i < ch.K(); ++i) {
        if (i == k) continue;
        den += std::norm((gFH1 * B.col(i)).value());                    // downlink CCI
        den += ch.P_k[i] * std::norm((gF * ch.H2.col(i)).value());      // uplink CCI
    }
    return num / den;
}

CMatrix mse_matrix_E(const CMatrix& F, const ChannelSet& ch) {
    require(F.rows() == ch.M() && F.cols() == ch.M(), "mse_matrix_E: F shape");
    const int K = ch.K();
    CMatrix GFH2P = ch.G1 * F * ch.H2 * ch.P();
    CMatrix E = CMatrix::Identity(K, K) +
                GFH2P.adjoint() * uplink_noise_inverse(F, ch) * GFH2P;
    return (E + E.adjoint()) * 0.5;
}

double total_mse(const CMatrix& F, const ChannelSet& ch) {
    CMatrix E = mse_matrix_E(F, ch);
    return E.inverse().trace().real();
}

CMatrix mmse_decoder(const CMatrix& F, const ChannelSet& ch) {
    require(F.rows() == ch.M() && F.cols() == ch.M(), "mmse_decoder: F shape");
    const int N = ch.N();
    CMatrix GFH2P = ch.G1 * F * ch.H2 * ch.P();
    CMatrix Ry = GFH2P * GFH2P.adjoint() +
                 ch.sigma2_R * (ch.G1 * F * F.adjoint() * ch.G1.adjoint()) +
                 ch.sigma2_B * CMatrix::Identity(N, N);
    Eigen::LDLT<CMatrix> ldlt((Ry + Ry.adjoint()) * 0.5);
    if (ldlt.info() != Eigen::Success ||
        ldlt.vectorD().real().minCoeff() <= 1e-14 * std::max(1.0, Ry.norm()))
        throw SingularNoise("mmse_decoder: received covariance is singular");
    return GFH2P.adjoint() * ldlt.solve(CMatrix::Identity(N, N));
}

double sum_rate(const CMatrix& F, const ChannelSet& ch) {
    CMatrix E = mse_matrix_E(F, ch);
    Eigen::PartialPivLU<CMatrix> lu(E);
    double logdet = std::log(std::abs(lu.determinant().real()));
    return 0.5 * logdet / std::log(2.0);
}

double weighted_mse_objective(const CMatrix& F, const CMatrix& W, const CMatrix& A,
                              const ChannelSet& ch) {
    require(F.rows() == ch.M() && F.cols() == ch.M(), "weighted_mse_objective: F shape");
    require(W.rows() == ch.K() && W.cols() == ch.N(), "weighted_mse_objective: W shape");
    require(A.rows() == ch.K() && A.cols() == ch.K(), "weighted_mse_objective: A shape");
    const int K = ch.K();
    CMatrix P = ch.P();
    CMatrix WG1F = W * ch.G1 * F;
    CMatrix S = WG1F * ch.H2 * P;  // K x K effective signal map
    CMatrix Mse = S * S.adjoint() + ch.sigma2_R * (WG1F * WG1F.adjoint()) +
                  ch.sigma2_B * (W * W.adjoint()) + CMatrix::Identity(K, K) - S -
                  S.adjoint();
    return (A * Mse).trace().real();
}

CMatrix baseline_bs_precoder(const ChannelSet& ch) {
    CMatrix B = CMatrix::Zero(ch.N(), ch.K());
    B.topRows(ch.K()) = std::sqrt(ch.P_B / ch.K()) * CMatrix::Identity(ch.K(), ch.K());
    return B;
}

CMatrix baseline_rs_precoder(const ChannelSet& ch) {
    CMatrix B = baseline_bs_precoder(ch);
    CMatrix I = CMatrix::Identity(ch.M(), ch.M());
    double p = relay_tx_power(B, I, ch);
    return std::sqrt(ch.P_R / p) * I;
}

std::vector<double> baseline_sinr(const ChannelSet& ch) {
    CMatrix B = baseline_bs_precoder(ch);
    CMatrix F = baseline_rs_precoder(ch);
    std::vector<double> out(ch.K());
    for (int k = 0; k < ch.K(); ++k) out[k] = downlink_sinr(k, B, F, ch);
    return out;
}

}  // namespace twrs
