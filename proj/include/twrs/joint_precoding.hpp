#pragma once

// Joint BS-RS design: alternate the RS inner loop and the scale-maximizing
// BS design, handing the scaled relay precoder to the next inner loop so the
// outer objective never regresses.

#include <vector>

#include "twrs/bs_precoding.hpp"
#include "twrs/rs_precoding.hpp"

namespace twrs {

enum class DesignObjective { TotalMse, SumRate };

struct JointOptions {
    double tol = 1e-4;
    int outer_max = 10;
    RsOptions rs;
};

struct JointResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix B;
    CMatrix F;
    CMatrix W;
    CMatrix A;  // identity unless the sum-rate objective is selected
    MetricsRecord metrics;  // iterations = outer iterations; trace per outer cycle
    std::vector<std::string> branch_audit;
};

JointResult joint_precode(const ChannelSet& ch, const std::vector<double>& lambda,
                          DesignObjective mode, const JointOptions& opts = {});

}  // namespace twrs
