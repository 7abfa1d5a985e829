#pragma once

// Two-way relay signal model and its closed-form uplink/downlink metrics:
// relay transmit power, per-MS downlink SINR, MSE matrix, Total-MSE, MMSE
// decoder, sum rate, the weighted MSE objective, and the no-precoding
// baseline SINRs. All pure functions over an immutable ChannelSet.

#include <vector>

#include "twrs/numkit.hpp"

namespace twrs {

// One channel realization plus noise variances and power budgets.
// Dimensions: N BS antennas, M RS antennas, K single-antenna mobiles,
// with N >= K and M >= K.
struct ChannelSet {
    CMatrix H1;  // M x N, BS -> RS
    CMatrix H2;  // M x K, columns are the MS -> RS vectors
    CMatrix G1;  // N x M, RS -> BS
    CMatrix G2;  // K x M, row k is the RS -> MS k channel (transposed vector)
    double sigma2_R = 1.0;
    double sigma2_B = 1.0;
    std::vector<double> sigma2_k;
    double P_B = 1.0;
    double P_R = 1.0;
    std::vector<double> P_k;

    int N() const { return static_cast<int>(H1.cols()); }
    int M() const { return static_cast<int>(H1.rows()); }
    int K() const { return static_cast<int>(H2.cols()); }

    // Diag(sqrt(P_1), ..., sqrt(P_K))
    CMatrix P() const;
    void validate() const;
};

struct PrecodingState {
    CMatrix B;      // N x K BS precoder
    double alpha = 1.0;
    CMatrix F;      // M x M RS precoder
    CMatrix W;      // K x N BS decoder
    CMatrix A;      // K x K rate weight (identity for the plain MSE objective)
    bool feasible = true;
};

struct MetricsRecord {
    double total_mse = 0.0;
    double sum_rate = 0.0;
    std::vector<double> sinr;
    double relay_power = 0.0;
    int iterations = 0;
    std::vector<double> objective_trace;
};

// Tr{F (H1 B B^H H1^H + H2 P P^H H2^H + sigma_R^2 I) F^H}
double relay_tx_power(const CMatrix& B, const CMatrix& F, const ChannelSet& ch);

// Downlink SINR of MS k (0-based index).
double downlink_sinr(int k, const CMatrix& B, const CMatrix& F, const ChannelSet& ch);

// E = I_K + P^H H2^H F^H G1^H (s_R^2 G1 F F^H G1^H + s_B^2 I)^{-1} G1 F H2 P
CMatrix mse_matrix_E(const CMatrix& F, const ChannelSet& ch);

// Tr(E^{-1}), in (0, K].
double total_mse(const CMatrix& F, const ChannelSet& ch);

// Linear MMSE decoder for the normalized uplink streams.
CMatrix mmse_decoder(const CMatrix& F, const ChannelSet& ch);

// 0.5 log2 det(E), bits per channel use.
double sum_rate(const CMatrix& F, const ChannelSet& ch);

// Tr(A * M(F, W)) with M the uplink MSE matrix for decoder W; A = I recovers
// the plain objective that total_mse minimizes over W.
double weighted_mse_objective(const CMatrix& F, const CMatrix& W, const CMatrix& A,
                              const ChannelSet& ch);

// SINRs with the no-precoding choice: B = sqrt(P_B/K) I_{NxK} and F a scaled
// identity meeting the relay budget with equality.
std::vector<double> baseline_sinr(const ChannelSet& ch);

// The identity-shaped precoders behind baseline_sinr, reused by the harness.
CMatrix baseline_bs_precoder(const ChannelSet& ch);
CMatrix baseline_rs_precoder(const ChannelSet& ch);

}  // namespace twrs
