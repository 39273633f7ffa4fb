#pragma once

#include "loccforge/quantum.hpp"

#include <string>
#include <vector>

namespace loccforge {

enum class NoiseKind { Depolarizing, AmplitudeDamping, Dephasing, Gadc };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

/// Where a copy's noise acts: on the whole N-party copy, or only on the last
/// party's qubit.
enum class NoiseLocus { JointCopy, OneSided };

std::string to_string(NoiseLocus locus);
NoiseLocus noise_locus_from_string(const std::string& s);

struct NoiseChannel {
  NoiseKind kind = NoiseKind::Depolarizing;
  std::vector<double> params;  // {gamma}, or {gamma_a, gamma_n} for GADC
  int dim = 2;
  KrausSet kraus;

  Matrix apply(const Matrix& rho) const { return kraus.apply(rho); }
};

/// TP Kraus representation of the named channel on a d-dimensional system.
/// Depolarizing uses sqrt(1-g) I plus the d^2 Weyl operators scaled by
/// sqrt(g)/d; GADC is qubit only.
NoiseChannel make_noise(NoiseKind kind, const std::vector<double>& params, int d);

/// Stacks M per-copy states (each with n_parties subsystems) and regroups the
/// subsystems agent-major: [p1 c1, p1 c2, ..., p2 c1, ...].
QState copies_agent_major(const std::vector<QState>& copies, int n_parties);

/// M copies of the n-party GHZ state, copy k sent through noises[k].
QState noisy_bell_input(int copies, const std::vector<NoiseChannel>& noises, int n_parties = 2,
                        NoiseLocus locus = NoiseLocus::JointCopy);

/// (id x N_gadc)(Phi) with dims [2, 2].
QState gadc_choi_state(double gamma_a, double gamma_n);

}  // namespace loccforge
