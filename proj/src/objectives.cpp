#include "loccforge/objectives.hpp"

#include <cmath>
#include <memory>

namespace loccforge {

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::AvgDistillFid: return "avg_distill_fidelity";
    case ObjectiveKind::DistillFid: return "distill_fidelity";
    case ObjectiveKind::BlockCoherentInfo: return "block_coherent_info";
    case ObjectiveKind::MergeFid: return "merge_fidelity";
    case ObjectiveKind::AvgMergeFid: return "avg_merge_fidelity";
  }
  return "unknown";
}

namespace {

bool is_conditional(ObjectiveKind k) { return k == ObjectiveKind::DistillFid || k == ObjectiveKind::MergeFid; }

// Tr[W rho]
double trace_product(const Matrix& w, const Matrix& rho) { return w.cwiseProduct(rho.transpose()).sum().real(); }

Matrix clamped_log2(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(h));
  Eigen::VectorXd logs = es.eigenvalues().unaryExpr([](double l) { return std::log2(std::max(l, kEntropyFloor)); });
  return es.eigenvectors() * logs.asDiagonal() * es.eigenvectors().adjoint();
}

TreeEvaluation run(const Objective& obj, const ProductPoint& point, bool want_grad, ObjectiveValue& info) {
  obj.validate();
  const Matrix& rho = obj.input.matrix();
  info = ObjectiveValue{};

  if (obj.kind == ObjectiveKind::BlockCoherentInfo) {
    const Dims out = obj.protocol.output_party_dims();
    const int da = out[0] * out[1];
    const int db = total_dim(out) / da;
    const double n = obj.block_copies;
    LeafFunctional leaf = [&](const Matrix& state, const std::vector<int>&, bool adj) {
      const Matrix sigma_b = partial_trace(state, {da, db}, {1});
      LeafResult r;
      r.value = (entropy_bits(sigma_b) - entropy_bits(state)) / n;
      if (adj) r.adjoint = (clamped_log2(state) - tensor(Matrix::Identity(da, da), clamped_log2(sigma_b))) / n;
      return r;
    };
    return evaluate_tree(obj.protocol, point, rho, leaf, std::nullopt, want_grad);
  }

  const Matrix& w = obj.target;
  if (!is_conditional(obj.kind)) {
    LeafFunctional leaf = [&](const Matrix& state, const std::vector<int>&, bool adj) {
      LeafResult r;
      r.value = trace_product(w, state);
      if (adj) r.adjoint = w;
      return r;
    };
    return evaluate_tree(obj.protocol, point, rho, leaf, std::nullopt, want_grad);
  }

  LeafFunctional leaf = [&](const Matrix& state, const std::vector<int>&, bool adj) {
    LeafResult r;
    const double p = state.trace().real();
    info.success_probability = p;
    if (p < kProbabilityFloor) {
      info.failed = true;
      if (adj) r.adjoint = Matrix::Zero(state.rows(), state.cols());
      return r;
    }
    r.value = trace_product(w, state) / p;
    if (adj) r.adjoint = (w - r.value * Matrix::Identity(w.rows(), w.cols())) / p;
    return r;
  };
  return evaluate_tree(obj.protocol, point, rho, leaf, obj.selected_outcome, want_grad);
}

double value_of_kind(const Objective& obj, const ProductPoint& point, ObjectiveKind kind) {
  if (obj.kind != kind) throw std::invalid_argument("objective is " + to_string(obj.kind) + ", not " + to_string(kind));
  return evaluate(obj, point).value;
}

}  // namespace

void Objective::validate() const {
  if (selected_outcome.has_value() != is_conditional(kind))
    throw std::invalid_argument("selected outcome must be set exactly for conditional objectives");
  if (selected_outcome && static_cast<int>(selected_outcome->size()) != protocol.outcome_length())
    throw DimensionError("selected outcome has the wrong length");
  if (input.dim() != total_dim(protocol.input_party_dims())) throw DimensionError("input does not fit the protocol");
  const int out_dim = total_dim(protocol.output_party_dims());
  if (kind == ObjectiveKind::BlockCoherentInfo) {
    if (block_copies < 1) throw std::invalid_argument("block_copies must be >= 1");
    if (protocol.reference_dim() != 1 || protocol.n_agents() != 2)
      throw DimensionError("coherent information needs two agents and no reference");
  } else if (target.rows() != out_dim || target.cols() != out_dim) {
    throw DimensionError("target does not fit the protocol output");
  }
}

ObjectiveValue evaluate(const Objective& obj, const ProductPoint& point) {
  ObjectiveValue info;
  const TreeEvaluation t = run(obj, point, false, info);
  info.value = t.value;
  if (!is_conditional(obj.kind)) info.success_probability = 1.0;
  return info;
}

ValueAndGradient value_and_gradient(const Objective& obj, const ProductPoint& point) {
  ObjectiveValue info;
  TreeEvaluation t = run(obj, point, true, info);
  return {t.value, std::move(t.gradient)};
}

ProductTangent euclidean_gradient(const Objective& obj, const ProductPoint& point) {
  return value_and_gradient(obj, point).gradient;
}

CostFunction negated_cost(Objective obj) {
  auto shared = std::make_shared<const Objective>(std::move(obj));
  CostFunction f;
  f.value = [shared](const ProductPoint& x) { return -evaluate(*shared, x).value; };
  f.value_and_gradient = [shared](const ProductPoint& x) {
    ValueAndGradient vg = value_and_gradient(*shared, x);
    for (auto& g : vg.gradient) g = -g;
    return CostEvaluation{-vg.value, std::move(vg.gradient)};
  };
  return f;
}

double avg_distill_fidelity(const ProductPoint& point, const Objective& obj) {
  return value_of_kind(obj, point, ObjectiveKind::AvgDistillFid);
}
double distill_fidelity(const ProductPoint& point, const Objective& obj) {
  return value_of_kind(obj, point, ObjectiveKind::DistillFid);
}
double block_coherent_info(const ProductPoint& point, const Objective& obj) {
  return value_of_kind(obj, point, ObjectiveKind::BlockCoherentInfo);
}
double merge_fidelity(const ProductPoint& point, const Objective& obj) {
  return value_of_kind(obj, point, ObjectiveKind::MergeFid);
}
double avg_merge_fidelity(const ProductPoint& point, const Objective& obj) {
  return value_of_kind(obj, point, ObjectiveKind::AvgMergeFid);
}

// ---------------------------------------------------------------------------

Matrix distill_target(int n_parties, int copies) {
  if (n_parties < 2 || copies < 1) throw std::invalid_argument("distill_target: need >= 2 parties and >= 1 copy");
  const int rest = 1 << (n_parties * (copies - 1));
  const Matrix copy_major = tensor(max_entangled(n_parties, 2).projector(), Matrix::Identity(rest, rest));
  std::vector<int> perm;
  for (int p = 0; p < n_parties; ++p)
    for (int k = 0; k < copies; ++k) perm.push_back(k * n_parties + p);
  return permute_subsystems(copy_major, Dims(n_parties * copies, 2), perm);
}

LoccProtocol distill_ips_protocol(int n_parties, int copies, int outcomes, int kraus_order) {
  const int d = 1 << copies;
  return LoccProtocol::ips(std::vector<InstrumentSpec>(n_parties, InstrumentSpec{outcomes, kraus_order, d, d}));
}

LoccProtocol distill_general_protocol(int n_parties, int copies, const std::vector<RoundSpec>& rounds) {
  return LoccProtocol::general(std::vector<int>(n_parties, 1 << copies), rounds);
}

LoccProtocol distill_cmps_protocol(int n_parties, int copies, int kraus_order) {
  const int d = 1 << copies;
  std::vector<bool> mask(copies, true);
  mask[0] = false;
  const auto meas = computational_measurement(Dims(copies, 2), mask);
  return LoccProtocol::cmps(std::vector<InstrumentSpec>(n_parties, InstrumentSpec{1, kraus_order, d, d}),
                            std::vector<std::vector<KrausSet>>(n_parties, meas));
}

Objective avg_distill_objective(LoccProtocol protocol, QState input, int n_parties, int copies) {
  Objective obj{ObjectiveKind::AvgDistillFid, std::move(protocol), std::move(input), distill_target(n_parties, copies),
                std::nullopt, 1};
  obj.validate();
  return obj;
}

Objective distill_fid_objective(LoccProtocol protocol, QState input, int n_parties, int copies) {
  const int len = protocol.outcome_length();
  Objective obj{ObjectiveKind::DistillFid, std::move(protocol), std::move(input), distill_target(n_parties, copies),
                std::vector<int>(len, 0), 1};
  obj.validate();
  return obj;
}

LoccProtocol coherent_info_protocol(int copies, int outcomes) {
  const int d = 1 << copies;
  return LoccProtocol::general({d, d}, {RoundSpec{0, outcomes, 1, 1}, RoundSpec{1, outcomes, 1, 1}}, true);
}

Objective coherent_info_objective(LoccProtocol protocol, QState input, int copies) {
  Objective obj{ObjectiveKind::BlockCoherentInfo, std::move(protocol), std::move(input), Matrix(), std::nullopt, copies};
  obj.validate();
  return obj;
}

namespace {

void check_ranks(int k, int m) {
  if (k < 1 || k > 2 || m < 1 || m > 2) throw std::invalid_argument("merging ranks k, m must be 1 or 2");
}

PureState resource(int rank) {
  if (rank == 1) return PureState(Vector::Ones(1), {1, 1});
  return max_entangled(2, rank);
}

void check_rab(const PureState& psi) {
  if (psi.dims() != Dims{2, 2, 2}) throw DimensionError("merging expects qubit R, A, B");
}

}  // namespace

LoccProtocol merge_protocol(int k, int m, int outcomes, int alice_kraus, int bob_kraus) {
  check_ranks(k, m);
  const int a_in = 2 * k, a_out = m, b_in = 2 * k, b_out = 4 * m;
  const InstrumentSpec alice{outcomes, alice_kraus > 0 ? alice_kraus : a_in * a_out, a_in, a_out};
  const InstrumentSpec bob{outcomes, bob_kraus > 0 ? bob_kraus : b_in * b_out, b_in, b_out};
  return LoccProtocol::ips({alice, bob}, 2);
}

QState merge_input(const PureState& psi_rab, int k) {
  check_rab(psi_rab);
  check_ranks(k, 1);
  // [R, A, B, Ae, Be] -> [R, A, Ae, B, Be]
  return QState::from_pure(permute_subsystems(tensor(psi_rab, resource(k)), {0, 1, 3, 2, 4}));
}

Matrix merge_target(const PureState& psi_rab, int m) {
  check_rab(psi_rab);
  check_ranks(1, m);
  // [Ae', Be', R, B', B''] -> [R, Ae', Be', B', B'']
  return permute_subsystems(tensor(resource(m), psi_rab), {2, 0, 1, 3, 4}).projector();
}

Objective merge_objective(LoccProtocol protocol, const PureState& psi_rab, int k, int m, bool average) {
  const int len = protocol.outcome_length();
  Objective obj{average ? ObjectiveKind::AvgMergeFid : ObjectiveKind::MergeFid,
                std::move(protocol),
                merge_input(psi_rab, k),
                merge_target(psi_rab, m),
                average ? std::nullopt : std::optional<std::vector<int>>(std::vector<int>(len, 0)),
                1};
  obj.validate();
  return obj;
}

}  // namespace loccforge
