#pragma once

#include "loccforge/noise.hpp"
#include "loccforge/optimizer.hpp"
#include "loccforge/protocol.hpp"

#include <optional>
#include <string>
#include <vector>

namespace loccforge {

inline constexpr double kProbabilityFloor = 1e-12;

enum class ObjectiveKind { AvgDistillFid, DistillFid, BlockCoherentInfo, MergeFid, AvgMergeFid };

std::string to_string(ObjectiveKind kind);

/// A scalar figure of merit of a protocol acting on a fixed input.
///
/// Fidelity kinds score the output against `target`, a Hermitian operator on
/// the output party space [reference, agent_1 out, ...]. The coherent
/// information kind scores I(A'>B' flag) / block_copies with agent 0 as A'.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::AvgDistillFid;
  LoccProtocol protocol;
  QState input;
  Matrix target;
  std::optional<std::vector<int>> selected_outcome;
  int block_copies = 1;

  /// Throws if the fields are inconsistent with each other.
  void validate() const;
};

struct ObjectiveValue {
  double value = 0.0;
  double success_probability = 1.0;
  bool failed = false;  // selected branch below the probability floor
};

struct ValueAndGradient {
  double value = 0.0;
  ProductTangent gradient;  // 2 df/dX* per part
};

ObjectiveValue evaluate(const Objective& obj, const ProductPoint& point);
ValueAndGradient value_and_gradient(const Objective& obj, const ProductPoint& point);
ProductTangent euclidean_gradient(const Objective& obj, const ProductPoint& point);

/// -value, so that minimize() maximizes the objective. The objective is
/// copied into the returned closures.
CostFunction negated_cost(Objective obj);

double avg_distill_fidelity(const ProductPoint& point, const Objective& obj);
/// Conditional fidelity of the selected branch; see evaluate() for the
/// success probability.
double distill_fidelity(const ProductPoint& point, const Objective& obj);
double block_coherent_info(const ProductPoint& point, const Objective& obj);
double merge_fidelity(const ProductPoint& point, const Objective& obj);
double avg_merge_fidelity(const ProductPoint& point, const Objective& obj);

// ---------------------------------------------------------------------------
// Problem setups

/// Phi+ on the copy-1 subsystems, identity on the others, agent-major order.
Matrix distill_target(int n_parties, int copies);

/// Each agent holds `copies` qubits; instruments keep the local dimension.
LoccProtocol distill_ips_protocol(int n_parties, int copies, int outcomes, int kraus_order);
LoccProtocol distill_general_protocol(int n_parties, int copies, const std::vector<RoundSpec>& rounds);
/// Channel of the given Kraus order, then a computational-basis measurement
/// of every copy except the first.
LoccProtocol distill_cmps_protocol(int n_parties, int copies, int kraus_order);

Objective avg_distill_objective(LoccProtocol protocol, QState input, int n_parties, int copies);
Objective distill_fid_objective(LoccProtocol protocol, QState input, int n_parties, int copies);

/// Two-round protocol (agent 0 then agent 1) with identity followers on n
/// qubit pairs.
LoccProtocol coherent_info_protocol(int copies, int outcomes);
Objective coherent_info_objective(LoccProtocol protocol, QState input, int copies);

/// IPS merging protocol for qubit R, A, B with a rank-k resource and a
/// rank-m output. Kraus order 0 selects the full order d_in * d_out.
LoccProtocol merge_protocol(int k, int m, int outcomes, int alice_kraus = 0, int bob_kraus = 0);

/// psi_RAB (x) Phi_k in party layout [R, (A, A_e), (B, B_e)].
QState merge_input(const PureState& psi_rab, int k);
/// Phi'_m (x) psi_{R B' B''} in output layout [R, A_e', (B_e', B', B'')].
Matrix merge_target(const PureState& psi_rab, int m);

Objective merge_objective(LoccProtocol protocol, const PureState& psi_rab, int k, int m, bool average);

}  // namespace loccforge
