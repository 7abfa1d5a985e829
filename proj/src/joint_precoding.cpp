#include "twrs/joint_precoding.hpp"

#include <cmath>

namespace twrs {

JointResult joint_precode(const ChannelSet& ch, const std::vector<double>& lambda,
                          DesignObjective mode, const JointOptions& opts) {
    ch.validate();
    JointResult res;
    const bool rate_mode = mode == DesignObjective::SumRate;

    CMatrix B = baseline_bs_precoder(ch);
    RsOptions rs_opts = opts.rs;

    auto metric = [&](const CMatrix& F) {
        return rate_mode ? sum_rate(F, ch) : total_mse(F, ch);
    };

    CMatrix F;
    double m = 0.0;
    int outer_done = opts.outer_max;
    for (int outer = 1; outer <= opts.outer_max; ++outer) {
        RsResult rs = rate_mode ? rs_precode_rate(B, ch, lambda, rs_opts)
                                : rs_precode_mse(B, ch, lambda, rs_opts);
        if (rs.status != SolveStatus::Optimal) {
            res.status = rs.status;
            return res;
        }
        F = rs.F;
        res.W = rs.W;
        res.A = rs.A;
        for (auto& b : rs.branch_audit) res.branch_audit.push_back(std::move(b));

        // BS step with the relay shape fixed; the scaled product alpha*F is
        // what the next inner loop starts from
        BsDesignResult bs = solve_bs_precoding(F, ch, lambda, rs_opts.solver);
        double alpha = 1.0;
        if (bs.status == SolveStatus::Optimal && bs.alpha >= 1.0) {
            B = bs.B;
            alpha = bs.alpha;
        }  // otherwise the current iterate is already the best scale-1 point

        double mnew = metric(alpha * F);
        res.metrics.objective_trace.push_back(mnew);
        double rel = outer == 1 ? 1.0 : std::abs(mnew - m) / std::max(std::abs(m), 1e-12);
        m = mnew;
        F = alpha * F;
        rs_opts.initial_F = F;
        if (outer > 1 && rel < opts.tol) {
            outer_done = outer;
            break;
        }
    }

    res.status = SolveStatus::Optimal;
    res.B = B;
    res.F = F;
    res.W = mmse_decoder(F, ch);
    res.metrics.iterations = outer_done;
    res.metrics.total_mse = total_mse(F, ch);
    res.metrics.sum_rate = sum_rate(F, ch);
    res.metrics.relay_power = relay_tx_power(B, F, ch);
    for (int k = 0; k < ch.K(); ++k)
        res.metrics.sinr.push_back(downlink_sinr(k, B, F, ch));
    return res;
}

}  // namespace twrs
