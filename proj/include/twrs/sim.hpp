#pragma once

// Monte Carlo harness: Rayleigh channel generation, QPSK uplink BER with the
// linear MMSE receiver, per-realization target setting from the no-precoding
// baseline, sweeps over the transmit power grid, complexity estimates and
// CSV emission. Realizations are independent work items with their own
// deterministic random streams, so worker count never changes the output.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twrs/joint_precoding.hpp"

namespace twrs {

enum class DesignKind { None, Bs, RsMse, RsRate, JointMse, JointRate };

std::string design_name(DesignKind d);
std::optional<DesignKind> design_from_name(const std::string& name);

struct ExperimentScenario {
    int N = 2, M = 2, K = 2;
    double L = 1.0;                          // P_B = L * P
    std::vector<double> snr_grid_db = {0.0}; // P values in dB (P_R = P_k = P)
    int realizations = 100;
    int symbols_per_realization = 2000;
    DesignKind design = DesignKind::RsMse;
    bool epsilon_targets = true;             // per-realization baseline targets
    std::vector<double> fixed_lambda;        // linear targets when not baseline
    std::uint64_t seed = 1;
    int workers = 1;
    RsOptions rs;
    JointOptions joint;
};

ExperimentScenario scenario_from_json(const std::string& text);
ExperimentScenario load_scenario(const std::string& path);

// deterministic per-(point, realization) stream
std::mt19937_64 trial_stream(std::uint64_t seed, int point, int realization);

ChannelSet gen_rayleigh_channels(int N, int M, int K, double P, double L,
                                 std::mt19937_64& rng);

// Gray-mapped unit-energy QPSK scaled to sqrt(energy): bit 0 maps to the
// positive half-axis, first bit on I, second on Q.
std::vector<Complex> qpsk_modulate(const std::vector<int>& bits, double symbol_scale);
std::vector<int> qpsk_detect(const std::vector<Complex>& estimates);

struct UplinkStats {
    double ber = 0.0;
    std::vector<double> stream_mse;  // empirical, normalized streams
};

// Simulates the two-hop uplink with explicit echo cancellation of the known
// BS transmission, applies W and detects per-stream QPSK.
UplinkStats simulate_uplink(const PrecodingState& state, const ChannelSet& ch,
                            int n_symbols, std::mt19937_64& rng);
double simulate_uplink_ber(const PrecodingState& state, const ChannelSet& ch,
                           int n_symbols, std::mt19937_64& rng);

struct TrialOutput {
    bool feasible = false;
    MetricsRecord metrics;
    double ber = 0.0;
    double min_sinr_margin = 0.0;
    std::vector<std::string> branch_audit;
};

TrialOutput run_trial(const ExperimentScenario& scen, double P_db, int point,
                      int realization);

struct PointAggregate {
    double P_db = 0.0;
    int total = 0;
    int feasible_count = 0;
    double mean_total_mse = 0.0;
    double mean_sum_rate = 0.0;
    double mean_ber = 0.0;
    double se_total_mse = 0.0;  // standard error of the mean, feasible trials
    double se_sum_rate = 0.0;
};

struct ExperimentResult {
    std::string csv;  // header plus one row per (design, P, L, realization)
    std::vector<PointAggregate> aggregates;
};

ExperimentResult run_experiment(const ExperimentScenario& scen);

// closed-form design cost estimates; n_rd is zero for K <= 2
struct ComplexityReport {
    double n_bs = 0.0;
    double n_rd = 0.0;
    double n_rs = 0.0;
    double n_joint = 0.0;
};

ComplexityReport complexity_report(int N, int M, int K, double eps, int l_rs, int l_j,
                                   int rand_samples);

// per-iteration objective traces from several starts on fixed channels
struct ConvergenceRow {
    int channel = 0;
    int init = 0;
    int iteration = 0;
    double objective = 0.0;
};

struct ConvergenceResult {
    std::string csv;
    std::vector<ConvergenceRow> rows;
};

ConvergenceResult run_convergence(const ExperimentScenario& scen, int n_inits);

}  // namespace twrs
