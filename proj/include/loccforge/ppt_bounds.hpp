#pragma once

#include "loccforge/quantum.hpp"
#include "loccforge/sdp.hpp"

#include <vector>

namespace loccforge {

/// Transpose on the listed tensor factors of `op`.
Matrix partial_transpose(const Matrix& op, const Dims& dims, const std::vector<int>& subsystems);

struct PptBound {
  double value = 0.0;  // dual objective when the solver provides one
  SdpSolution solution;  // blocks: E, F, then slacks
};

/// Upper bound on the average fidelity with a rank-d maximally entangled
/// state reachable from rho_AB by PPT operations. `cut` = {d_A, d_B}.
PptBound ppt_avg_fidelity_bound(const Matrix& rho_ab, const Dims& cut, int d, const SdpOptions& opts = {});

/// Upper bound on the conditional fidelity at success probability exactly p,
/// i.e. the numerator at fixed Tr[rho (E + (d^2-1) F)] = p divided by p.
PptBound ppt_fidelity_bound(const Matrix& rho_ab, const Dims& cut, int d, double p, const SdpOptions& opts = {});

std::vector<PptBound> ppt_fidelity_bound_sweep(const Matrix& rho_ab, const Dims& cut, int d,
                                               const std::vector<double>& p_grid, const SdpOptions& opts = {});

/// Operator X with F_ave = Re Tr[J X] for the Choi operator J of a channel
/// AB -> B'B'' (input first), for qubit R, A, B.
Matrix merging_fidelity_operator(const PureState& psi_rab);

/// Upper bound on the average merging fidelity (k = m = 1) over PPT
/// channels AB -> B'B'' with respect to the A | B cut.
PptBound ppt_merging_bound(const PureState& psi_rab, const SdpOptions& opts = {});

}  // namespace loccforge
