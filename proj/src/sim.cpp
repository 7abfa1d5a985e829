#include "twrs/sim.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace twrs {

namespace {

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

CMatrix random_gaussian(int r, int c, std::mt19937_64& rng) {
    CMatrix X(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) X(i, j) = complex_normal(rng);
    return X;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::string design_name(DesignKind d) {
    switch (d) {
        case DesignKind::None: return "none";
        case DesignKind::Bs: return "bs";
        case DesignKind::RsMse: return "rs-mse";
        case DesignKind::RsRate: return "rs-rate";
        case DesignKind::JointMse: return "joint-mse";
        case DesignKind::JointRate: return "joint-rate";
    }
    return "none";
}

std::optional<DesignKind> design_from_name(const std::string& name) {
    if (name == "none") return DesignKind::None;
    if (name == "bs") return DesignKind::Bs;
    if (name == "rs-mse") return DesignKind::RsMse;
    if (name == "rs-rate") return DesignKind::RsRate;
    if (name == "joint-mse") return DesignKind::JointMse;
    if (name == "joint-rate") return DesignKind::JointRate;
    return std::nullopt;
}

ExperimentScenario scenario_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExperimentScenario s;
    s.N = j.value("N", s.N);
    s.M = j.value("M", s.M);
    s.K = j.value("K", s.K);
    s.L = j.value("L", s.L);
    if (j.contains("snr_grid_db"))
        s.snr_grid_db = j["snr_grid_db"].get<std::vector<double>>();
    else if (j.contains("P_db"))
        s.snr_grid_db = {j["P_db"].get<double>()};
    s.realizations = j.value("realizations", s.realizations);
    s.symbols_per_realization =
        j.value("symbols_per_realization", s.symbols_per_realization);
    if (j.contains("design")) {
        auto d = design_from_name(j["design"].get<std::string>());
        if (!d) throw Error("unknown design: " + j["design"].get<std::string>());
        s.design = *d;
    }
    std::string mode = j.value("target_mode", std::string("epsilon-baseline"));
    if (mode == "epsilon-baseline") {
        s.epsilon_targets = true;
    } else if (mode == "fixed") {
        s.epsilon_targets = false;
        if (j.contains("lambda"))
            s.fixed_lambda = j["lambda"].get<std::vector<double>>();
        else if (j.contains("lambda_db")) {
            for (double v : j["lambda_db"].get<std::vector<double>>())
                s.fixed_lambda.push_back(std::pow(10.0, v / 10.0));
        } else {
            throw Error("target_mode=fixed needs lambda or lambda_db");
        }
    } else {
        throw Error("unknown target_mode: " + mode);
    }
    s.seed = j.value("seed", s.seed);
    s.workers = j.value("workers", s.workers);
    s.rs.tol = j.value("tol", s.rs.tol);
    s.rs.max_iter = j.value("max_iter", s.rs.max_iter);
    s.rs.rand_samples = j.value("rand_samples", s.rs.rand_samples);
    s.rs.solver.eps = j.value("solver_eps", s.rs.solver.eps);
    s.joint.tol = j.value("outer_tol", s.joint.tol);
    s.joint.outer_max = j.value("outer_max", s.joint.outer_max);
    s.joint.rs = s.rs;
    return s;
}

ExperimentScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

std::mt19937_64 trial_stream(std::uint64_t seed, int point, int realization) {
    std::uint64_t mixed = splitmix64(seed ^ splitmix64(0x9E2B + 1000003ull * point) ^
                                     splitmix64(0xC0FFEE + 7919ull * realization));
    return std::mt19937_64(mixed);
}

ChannelSet gen_rayleigh_channels(int N, int M, int K, double P, double L,
                                 std::mt19937_64& rng) {
    ChannelSet ch;
    ch.H1 = random_gaussian(M, N, rng);
    ch.H2 = random_gaussian(M, K, rng);
    ch.G1 = random_gaussian(N, M, rng);
    ch.G2 = random_gaussian(K, M, rng);
    ch.sigma2_R = 1.0;
    ch.sigma2_B = 1.0;
    ch.sigma2_k.assign(K, 1.0);
    ch.P_k.assign(K, P);
    ch.P_R = P;
    ch.P_B = L * P;
    ch.validate();
    return ch;
}

std::vector<Complex> qpsk_modulate(const std::vector<int>& bits, double symbol_scale) {
    require(bits.size() % 2 == 0, "qpsk_modulate: bit count must be even");
    std::vector<Complex> out(bits.size() / 2);
    const double amp = symbol_scale / std::sqrt(2.0);
    for (size_t i = 0; i < out.size(); ++i) {
        double re = bits[2 * i] == 0 ? amp : -amp;
        double im = bits[2 * i + 1] == 0 ? amp : -amp;
        out[i] = Complex(re, im);
    }
    return out;
}

std::vector<int> qpsk_detect(const std::vector<Complex>& estimates) {
    std::vector<int> bits;
    bits.reserve(2 * estimates.size());
    for (const Complex& e : estimates) {
        bits.push_back(e.real() >= 0 ? 0 : 1);
        bits.push_back(e.imag() >= 0 ? 0 : 1);
    }
    return bits;
}

UplinkStats simulate_uplink(const PrecodingState& state, const ChannelSet& ch,
                            int n_symbols, std::mt19937_64& rng) {
    const int K = ch.K(), M = ch.M(), N = ch.N();
    UplinkStats stats;
    stats.stream_mse.assign(K, 0.0);
    if (n_symbols <= 0) return stats;
    std::uniform_int_distribution<int> bit(0, 1);
    const CMatrix echo = ch.G1 * state.F * ch.H1 * state.B;
    long errors = 0;
    for (int t = 0; t < n_symbols; ++t) {
        std::vector<int> bits_B(2 * K), bits_M(2 * K);
        for (auto& b : bits_B) b = bit(rng);
        for (auto& b : bits_M) b = bit(rng);
        auto sB = qpsk_modulate(bits_B, 1.0);
        CVector s_B = Eigen::Map<CVector>(sB.data(), K);
        CVector s_M(K), s_norm(K);
        for (int k = 0; k < K; ++k) {
            auto sk = qpsk_modulate({bits_M[2 * k], bits_M[2 * k + 1]},
                                    std::sqrt(ch.P_k[k]));
            s_M(k) = sk[0];
            s_norm(k) = sk[0] / std::sqrt(ch.P_k[k]);
        }
        CVector n_R(M), n_B(N);
        for (int i = 0; i < M; ++i) n_R(i) = std::sqrt(ch.sigma2_R) * complex_normal(rng);
        for (int i = 0; i < N; ++i) n_B(i) = std::sqrt(ch.sigma2_B) * complex_normal(rng);

        CVector y_R = ch.H1 * state.B * s_B + ch.H2 * s_M + n_R;
        CVector y_tilde = ch.G1 * (state.F * y_R) + n_B;
        CVector y_B = y_tilde - echo * s_B;  // cancel the known echo
        CVector est = state.W * y_B;

        std::vector<Complex> est_v(est.data(), est.data() + K);
        auto bits_hat = qpsk_detect(est_v);
        for (int k = 0; k < K; ++k) {
            errors += (bits_hat[2 * k] != bits_M[2 * k]);
            errors += (bits_hat[2 * k + 1] != bits_M[2 * k + 1]);
            stats.stream_mse[k] += std::norm(est(k) - s_norm(k));
        }
    }
    stats.ber = static_cast<double>(errors) / (2.0 * K * n_symbols);
    for (auto& v : stats.stream_mse) v /= n_symbols;
    return stats;
}

double simulate_uplink_ber(const PrecodingState& state, const ChannelSet& ch,
                           int n_symbols, std::mt19937_64& rng) {
    return simulate_uplink(state, ch, n_symbols, rng).ber;
}

namespace {

struct DesignOutput {
    bool feasible = false;
    PrecodingState state;
    int iterations = 0;
    std::vector<double> trace;
    std::vector<std::string> audit;
};

DesignOutput run_design(const ExperimentScenario& scen, const ChannelSet& ch,
                        const std::vector<double>& lambda) {
    DesignOutput out;
    const int K = ch.K(), M = ch.M();
    out.state.A = CMatrix::Identity(K, K);
    switch (scen.design) {
        case DesignKind::None: {
            out.state.B = baseline_bs_precoder(ch);
            out.state.F = baseline_rs_precoder(ch);
            out.state.W = mmse_decoder(out.state.F, ch);
            out.iterations = 0;
            out.feasible = true;
            for (int k = 0; k < K; ++k)
                if (downlink_sinr(k, out.state.B, out.state.F, ch) <
                    lambda[k] * (1.0 - 1e-9))
                    out.feasible = false;
            break;
        }
        case DesignKind::Bs: {
            auto res = solve_bs_precoding(CMatrix::Identity(M, M), ch, lambda,
                                          scen.rs.solver);
            if (res.status != SolveStatus::Optimal) return out;
            out.state.B = res.B;
            out.state.alpha = res.alpha;
            out.state.F = res.alpha * CMatrix::Identity(M, M);
            out.state.W = mmse_decoder(out.state.F, ch);
            out.iterations = res.iterations;
            out.feasible = true;
            break;
        }
        case DesignKind::RsMse:
        case DesignKind::RsRate: {
            CMatrix B = baseline_bs_precoder(ch);
            auto res = scen.design == DesignKind::RsMse
                           ? rs_precode_mse(B, ch, lambda, scen.rs)
                           : rs_precode_rate(B, ch, lambda, scen.rs);
            if (res.status != SolveStatus::Optimal) return out;
            out.state.B = B;
            out.state.F = res.F;
            out.state.W = res.W;
            out.state.A = res.A;
            out.iterations = res.metrics.iterations;
            out.trace = res.metrics.objective_trace;
            out.audit = res.branch_audit;
            out.feasible = true;
            break;
        }
        case DesignKind::JointMse:
        case DesignKind::JointRate: {
            JointOptions jo = scen.joint;
            jo.rs = scen.rs;
            auto res = joint_precode(ch, lambda,
                                     scen.design == DesignKind::JointMse
                                         ? DesignObjective::TotalMse
                                         : DesignObjective::SumRate,
                                     jo);
            if (res.status != SolveStatus::Optimal) return out;
            out.state.B = res.B;
            out.state.F = res.F;
            out.state.W = res.W;
            out.state.A = res.A;
            out.iterations = res.metrics.iterations;
            out.trace = res.metrics.objective_trace;
            out.audit = res.branch_audit;
            out.feasible = true;
            break;
        }
    }
    return out;
}

}  // namespace

TrialOutput run_trial(const ExperimentScenario& scen, double P_db, int point,
                      int realization) {
    TrialOutput out;
    const double P = std::pow(10.0, P_db / 10.0);
    std::mt19937_64 rng = trial_stream(scen.seed, point, realization);
    ChannelSet ch = gen_rayleigh_channels(scen.N, scen.M, scen.K, P, scen.L, rng);
    std::vector<double> lambda =
        scen.epsilon_targets ? baseline_sinr(ch) : scen.fixed_lambda;
    require(static_cast<int>(lambda.size()) == scen.K, "run_trial: lambda size");

    DesignOutput d = run_design(scen, ch, lambda);
    out.feasible = d.feasible;
    out.branch_audit = d.audit;
    if (!d.feasible) return out;

    // independent re-check of every budget and target before recording
    double margin = 1e300;
    for (int k = 0; k < scen.K; ++k)
        margin = std::min(margin, downlink_sinr(k, d.state.B, d.state.F, ch) - lambda[k]);
    double rp = relay_tx_power(d.state.B, d.state.F, ch);
    double bp = (d.state.B * d.state.B.adjoint()).trace().real();
    if (margin < -1e-5 || rp > ch.P_R * (1.0 + 1e-5) || bp > ch.P_B * (1.0 + 1e-5)) {
        out.feasible = false;
        return out;
    }
    out.min_sinr_margin = margin;
    out.metrics.total_mse = total_mse(d.state.F, ch);
    out.metrics.sum_rate = sum_rate(d.state.F, ch);
    out.metrics.relay_power = rp;
    out.metrics.iterations = d.iterations;
    out.metrics.objective_trace = d.trace;
    for (int k = 0; k < scen.K; ++k)
        out.metrics.sinr.push_back(downlink_sinr(k, d.state.B, d.state.F, ch));
    if (scen.symbols_per_realization > 0)
        out.ber = simulate_uplink_ber(d.state, ch, scen.symbols_per_realization, rng);
    return out;
}

ExperimentResult run_experiment(const ExperimentScenario& scen) {
    ExperimentResult res;
    std::ostringstream csv;
    csv << "design,P_db,L,realization,feasible,total_mse,sum_rate,ber,iterations,"
           "min_sinr_margin\n";

    for (size_t gi = 0; gi < scen.snr_grid_db.size(); ++gi) {
        const double P_db = scen.snr_grid_db[gi];
        std::vector<TrialOutput> trials(scen.realizations);
        const int workers = std::max(1, scen.workers);
        std::atomic<int> next{0};
        auto work = [&]() {
            for (;;) {
                int r = next.fetch_add(1);
                if (r >= scen.realizations) break;
                trials[r] = run_trial(scen, P_db, static_cast<int>(gi), r);
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }

        PointAggregate agg;
        agg.P_db = P_db;
        agg.total = scen.realizations;
        double sq_mse = 0.0, sq_rate = 0.0;
        for (int r = 0; r < scen.realizations; ++r) {
            const TrialOutput& t = trials[r];
            csv << design_name(scen.design) << ',' << fmt(P_db) << ',' << fmt(scen.L)
                << ',' << r << ',' << (t.feasible ? 1 : 0) << ',';
            if (t.feasible) {
                csv << fmt(t.metrics.total_mse) << ',' << fmt(t.metrics.sum_rate) << ','
                    << fmt(t.ber) << ',' << t.metrics.iterations << ','
                    << fmt(t.min_sinr_margin) << '\n';
                agg.feasible_count++;
                agg.mean_total_mse += t.metrics.total_mse;
                agg.mean_sum_rate += t.metrics.sum_rate;
                agg.mean_ber += t.ber;
                sq_mse += t.metrics.total_mse * t.metrics.total_mse;
                sq_rate += t.metrics.sum_rate * t.metrics.sum_rate;
            } else {
                csv << "nan,nan,nan,0,nan\n";
            }
        }
        if (agg.feasible_count > 0) {
            const double n = agg.feasible_count;
            agg.mean_total_mse /= n;
            agg.mean_sum_rate /= n;
            agg.mean_ber /= n;
            if (agg.feasible_count > 1) {
                double var_mse =
                    std::max(0.0, (sq_mse / n - agg.mean_total_mse * agg.mean_total_mse) *
                                      n / (n - 1));
                double var_rate =
                    std::max(0.0, (sq_rate / n - agg.mean_sum_rate * agg.mean_sum_rate) *
                                      n / (n - 1));
                agg.se_total_mse = std::sqrt(var_mse / n);
                agg.se_sum_rate = std::sqrt(var_rate / n);
            }
        }
        res.aggregates.push_back(agg);
    }
    res.csv = csv.str();
    return res;
}

ComplexityReport complexity_report(int N, int M, int K, double eps, int l_rs, int l_j,
                                   int rand_samples) {
    ComplexityReport r;
    const double log_acc = std::log(1.0 / eps);
    r.n_bs = std::pow(N * K + 1.0, 2.0) * std::sqrt(K + 2.0) *
             (2.0 * N * K + K * K + 2.0 * K + 4.0) * log_acc;
    // per-sample cost of evaluating the K+1 quadratic forms on an M^2 vector
    r.n_rd = K <= 2 ? 0.0
                    : static_cast<double>(rand_samples) * (K + 1.0) * std::pow(M, 4.0);
    double m2 = std::max(static_cast<double>(M) * M, K + 2.0);
    r.n_rs = l_rs * (std::pow(m2, 4.0) * M * log_acc + r.n_rd);
    r.n_joint = l_j * (r.n_bs + r.n_rs);
    return r;
}

ConvergenceResult run_convergence(const ExperimentScenario& scen, int n_inits) {
    ConvergenceResult res;
    std::ostringstream csv;
    csv << "design,P_db,L,channel,init,iteration,objective\n";
    const double P_db = scen.snr_grid_db.empty() ? 0.0 : scen.snr_grid_db.front();
    const double P = std::pow(10.0, P_db / 10.0);

    for (int c = 0; c < scen.realizations; ++c) {
        std::mt19937_64 rng = trial_stream(scen.seed, 0, c);
        ChannelSet ch = gen_rayleigh_channels(scen.N, scen.M, scen.K, P, scen.L, rng);
        std::vector<double> lambda =
            scen.epsilon_targets ? baseline_sinr(ch) : scen.fixed_lambda;

        for (int init = 0; init < std::max(1, n_inits); ++init) {
            std::vector<double> trace;
            RsOptions ro = scen.rs;
            if (init > 0) {
                // budget-scaled random start; the first update moves it onto
                // the feasible set
                CMatrix B = baseline_bs_precoder(ch);
                CMatrix Fr = random_gaussian(scen.M, scen.M, rng);
                Fr *= std::sqrt(ch.P_R / relay_tx_power(B, Fr, ch));
                ro.initial_F = Fr;
            }
            switch (scen.design) {
                case DesignKind::RsMse:
                case DesignKind::RsRate: {
                    CMatrix B = baseline_bs_precoder(ch);
                    auto r = scen.design == DesignKind::RsMse
                                 ? rs_precode_mse(B, ch, lambda, ro)
                                 : rs_precode_rate(B, ch, lambda, ro);
                    if (r.status == SolveStatus::Optimal)
                        trace = r.metrics.objective_trace;
                    break;
                }
                case DesignKind::JointMse:
                case DesignKind::JointRate: {
                    JointOptions jo = scen.joint;
                    jo.rs = ro;
                    auto r = joint_precode(ch, lambda,
                                           scen.design == DesignKind::JointMse
                                               ? DesignObjective::TotalMse
                                               : DesignObjective::SumRate,
                                           jo);
                    if (r.status == SolveStatus::Optimal)
                        trace = r.metrics.objective_trace;
                    break;
                }
                default:
                    throw Error("convergence traces need an iterative design");
            }
            for (size_t it = 0; it < trace.size(); ++it) {
                csv << design_name(scen.design) << ',' << fmt(P_db) << ','
                    << fmt(scen.L) << ',' << c << ',' << init << ',' << it << ','
                    << fmt(trace[it]) << '\n';
                res.rows.push_back({c, init, static_cast<int>(it), trace[it]});
            }
        }
    }
    res.csv = csv.str();
    return res;
}

}  // namespace twrs
