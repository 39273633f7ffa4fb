#include "loccforge/noise.hpp"

#include <cmath>
#include <numbers>

namespace loccforge {

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Depolarizing: return "depolarizing";
    case NoiseKind::AmplitudeDamping: return "amplitude_damping";
    case NoiseKind::Dephasing: return "dephasing";
    case NoiseKind::Gadc: return "gadc";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "depolarizing" || s == "depol") return NoiseKind::Depolarizing;
  if (s == "amplitude_damping" || s == "ad") return NoiseKind::AmplitudeDamping;
  if (s == "dephasing" || s == "deph") return NoiseKind::Dephasing;
  if (s == "gadc") return NoiseKind::Gadc;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

std::string to_string(NoiseLocus locus) { return locus == NoiseLocus::JointCopy ? "joint" : "one_sided"; }

NoiseLocus noise_locus_from_string(const std::string& s) {
  if (s == "joint") return NoiseLocus::JointCopy;
  if (s == "one_sided") return NoiseLocus::OneSided;
  throw std::invalid_argument("unknown noise locus '" + s + "'");
}

namespace {

void check_param(double g) {
  if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("noise parameter outside [0, 1]");
}

Matrix ket_bra(int d, int i, int j) {
  Matrix m = Matrix::Zero(d, d);
  m(i, j) = 1.0;
  return m;
}

std::vector<Matrix> depolarizing(double g, int d) {
  std::vector<Matrix> ops;
  ops.push_back(std::sqrt(1.0 - g) * Matrix::Identity(d, d));
  const double scale = std::sqrt(g) / d;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      // X^a Z^b
      Matrix w = Matrix::Zero(d, d);
      for (int k = 0; k < d; ++k) {
        const double phase = 2.0 * std::numbers::pi * b * k / d;
        w((k + a) % d, k) = std::polar(1.0, phase);
      }
      ops.push_back(scale * w);
    }
  }
  return ops;
}

std::vector<Matrix> amplitude_damping(double g, int d) {
  std::vector<Matrix> ops;
  Matrix k0 = Matrix::Zero(d, d);
  k0(0, 0) = 1.0;
  for (int i = 1; i < d; ++i) k0(i, i) = std::sqrt(1.0 - g);
  ops.push_back(k0);
  for (int i = 1; i < d; ++i) ops.push_back(std::sqrt(g) * ket_bra(d, i - 1, i));
  return ops;
}

std::vector<Matrix> dephasing(double g, int d) {
  std::vector<Matrix> ops;
  ops.push_back(std::sqrt(1.0 - g) * Matrix::Identity(d, d));
  for (int i = 0; i < d; ++i) ops.push_back(std::sqrt(g) * ket_bra(d, i, i));
  return ops;
}

std::vector<Matrix> gadc(double ga, double gn) {
  Matrix k1 = Matrix::Zero(2, 2), k2 = Matrix::Zero(2, 2), k3 = Matrix::Zero(2, 2), k4 = Matrix::Zero(2, 2);
  k1(0, 0) = 1.0;
  k1(1, 1) = std::sqrt(1.0 - ga);
  k1 *= std::sqrt(1.0 - gn);
  k2(0, 1) = std::sqrt(ga * (1.0 - gn));
  k3(0, 0) = std::sqrt(1.0 - ga);
  k3(1, 1) = 1.0;
  k3 *= std::sqrt(gn);
  k4(1, 0) = std::sqrt(ga * gn);
  return {k1, k2, k3, k4};
}

}  // namespace

NoiseChannel make_noise(NoiseKind kind, const std::vector<double>& params, int d) {
  if (d < 2) throw DimensionError("noise dimension must be at least 2");
  const std::size_t expected = kind == NoiseKind::Gadc ? 2 : 1;
  if (params.size() != expected) throw std::invalid_argument("wrong number of noise parameters for " + to_string(kind));
  for (double g : params) check_param(g);

  NoiseChannel ch;
  ch.kind = kind;
  ch.params = params;
  ch.dim = d;
  switch (kind) {
    case NoiseKind::Depolarizing: ch.kraus.ops = depolarizing(params[0], d); break;
    case NoiseKind::AmplitudeDamping: ch.kraus.ops = amplitude_damping(params[0], d); break;
    case NoiseKind::Dephasing: ch.kraus.ops = dephasing(params[0], d); break;
    case NoiseKind::Gadc:
      if (d != 2) throw DimensionError("GADC is defined on qubits");
      ch.kraus.ops = gadc(params[0], params[1]);
      break;
  }
  return ch;
}

QState copies_agent_major(const std::vector<QState>& copies, int n_parties) {
  if (copies.empty()) throw std::invalid_argument("need at least one copy");
  Matrix joint = Matrix::Ones(1, 1);
  Dims dims;
  for (const auto& c : copies) {
    if (static_cast<int>(c.dims().size()) != n_parties) throw DimensionError("copy does not have one subsystem per party");
    joint = tensor(joint, c.matrix());
    dims.insert(dims.end(), c.dims().begin(), c.dims().end());
  }
  const int m = static_cast<int>(copies.size());
  std::vector<int> perm;
  for (int p = 0; p < n_parties; ++p)
    for (int k = 0; k < m; ++k) perm.push_back(k * n_parties + p);
  return QState::trusted(permute_subsystems(joint, dims, perm), permuted_dims(dims, perm), true);
}

QState noisy_bell_input(int copies, const std::vector<NoiseChannel>& noises, int n_parties, NoiseLocus locus) {
  if (copies < 1) throw std::invalid_argument("copies must be >= 1");
  if (static_cast<int>(noises.size()) != copies) throw DimensionError("need one noise channel per copy");
  const Matrix phi = max_entangled(n_parties, 2).projector();
  const int d = 1 << n_parties;
  std::vector<QState> states;
  for (const auto& ch : noises) {
    Matrix rho;
    if (locus == NoiseLocus::JointCopy) {
      if (ch.dim != d) throw DimensionError("joint-copy noise must act on the full copy dimension");
      rho = ch.apply(phi);
    } else {
      if (ch.dim != 2) throw DimensionError("one-sided noise acts on a single qubit");
      KrausSet lifted;
      for (const auto& k : ch.kraus.ops) lifted.ops.push_back(tensor(Matrix::Identity(d / 2, d / 2), k));
      rho = lifted.apply(phi);
    }
    states.push_back(QState::trusted(rho, Dims(n_parties, 2), true));
  }
  return copies_agent_major(states, n_parties);
}

QState gadc_choi_state(double gamma_a, double gamma_n) {
  const NoiseChannel ch = make_noise(NoiseKind::Gadc, {gamma_a, gamma_n}, 2);
  KrausSet lifted;
  for (const auto& k : ch.kraus.ops) lifted.ops.push_back(tensor(Matrix::Identity(2, 2), k));
  return QState::trusted(lifted.apply(max_entangled(2, 2).projector()), {2, 2}, true);
}

}  // namespace loccforge
