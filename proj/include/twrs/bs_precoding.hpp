#pragma once

// BS precoding with the relay precoder fixed up to scale (F = alpha * Ftilde).
// The design reduces to maximizing alpha; the search is a second-order cone
// program over the realified stacked precoder with the per-stream inner
// products rotated real.

#include <vector>

#include "twrs/conic.hpp"
#include "twrs/system_model.hpp"

namespace twrs {

struct BsDesignResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    CMatrix B;      // N x K
    double alpha = 0.0;
    std::vector<double> achieved_sinrs;
    int iterations = 0;
};

// Decision vector layout: interleaved (Re, Im) per entry of vec(Btilde),
// followed by alpha. The cone maps depend on this layout.
SocpProblem bs_socp_build(const CMatrix& Ftilde, const ChannelSet& ch,
                          const std::vector<double>& lambda);

BsDesignResult solve_bs_precoding(const CMatrix& Ftilde, const ChannelSet& ch,
                                  const std::vector<double>& lambda,
                                  const SolverOptions& opts = {});

}  // namespace twrs
