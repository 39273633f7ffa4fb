#include "loccforge/protocol.hpp"

#include <algorithm>
#include <sstream>

namespace loccforge {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::General: return "general";
    case Scheme::Ips: return "ips";
    case Scheme::Cmps: return "cmps";
  }
  return "general";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "general" || s == "locc") return Scheme::General;
  if (s == "ips") return Scheme::Ips;
  if (s == "cmps") return Scheme::Cmps;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

void InstrumentSpec::validate() const {
  if (outcomes < 1 || kraus_order < 1 || dim_in < 1 || dim_out < 1)
    throw DimensionError("instrument spec entries must all be >= 1");
  if (rows() < dim_in) throw DimensionError("instrument spec: S*T*d_out must be >= d_in for a Stiefel factor");
}

Instrument instrument_from_point(const StiefelPoint& x, const InstrumentSpec& spec) {
  spec.validate();
  if (x.rows() != spec.rows() || x.cols() != spec.dim_in) throw DimensionError("instrument_from_point: shape mismatch with spec");
  Instrument inst;
  inst.branches.resize(spec.outcomes);
  for (int j = 0; j < spec.outcomes; ++j) {
    auto& ops = inst.branches[j].ops;
    ops.reserve(spec.kraus_order);
    for (int i = 0; i < spec.kraus_order; ++i)
      ops.push_back(x.matrix().middleRows((j * spec.kraus_order + i) * spec.dim_out, spec.dim_out));
  }
  return inst;
}

Matrix stack_instrument(const Instrument& inst) {
  Eigen::Index rows = 0, cols = -1;
  for (const auto& b : inst.branches)
    for (const auto& k : b.ops) {
      if (cols >= 0 && k.cols() != cols) throw DimensionError("stack_instrument: inconsistent input dims");
      cols = k.cols();
      rows += k.rows();
    }
  Matrix out(rows, std::max<Eigen::Index>(cols, 0));
  Eigen::Index r = 0;
  for (const auto& b : inst.branches)
    for (const auto& k : b.ops) {
      out.middleRows(r, k.rows()) = k;
      r += k.rows();
    }
  return out;
}

StiefelPoint point_from_instrument(const Instrument& inst, const InstrumentSpec& spec) {
  Matrix x = stack_instrument(inst);
  if (x.rows() != spec.rows() || x.cols() != spec.dim_in) throw DimensionError("point_from_instrument: shape mismatch with spec");
  return StiefelPoint(std::move(x), 1e-9);
}

namespace {

std::string outcome_string(const std::vector<int>& seq) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < seq.size(); ++i) os << (i ? "," : "") << seq[i];
  os << "]";
  return os.str();
}

// Mixed-radix digits of a prefix rank, most significant first.
std::vector<int> decode_prefix(int rank, const std::vector<RoundSpec>& rounds, int length) {
  std::vector<int> digits(length);
  for (int k = length - 1; k >= 0; --k) {
    digits[k] = rank % rounds[k].outcomes;
    rank /= rounds[k].outcomes;
  }
  return digits;
}

}  // namespace

int LoccProtocol::add_step(Step s) {
  steps_.push_back(std::move(s));
  return static_cast<int>(steps_.size()) - 1;
}

LoccProtocol LoccProtocol::general(std::vector<int> agent_dims, std::vector<RoundSpec> rounds, bool identity_followers,
                                   int reference_dim) {
  LoccProtocol p;
  p.scheme_ = Scheme::General;
  p.reference_dim_ = reference_dim;
  p.dims_in_ = agent_dims;
  p.dims_out_ = std::move(agent_dims);
  p.rounds_ = std::move(rounds);
  p.identity_followers_ = identity_followers;
  p.build_general();
  return p;
}

LoccProtocol LoccProtocol::ips(std::vector<InstrumentSpec> agents, int reference_dim) {
  LoccProtocol p;
  p.scheme_ = Scheme::Ips;
  p.reference_dim_ = reference_dim;
  for (const auto& s : agents) {
    s.validate();
    p.dims_in_.push_back(s.dim_in);
    p.dims_out_.push_back(s.dim_out);
  }
  p.agent_specs_ = std::move(agents);
  p.build_ips();
  return p;
}

LoccProtocol LoccProtocol::cmps(std::vector<InstrumentSpec> channels, std::vector<std::vector<KrausSet>> measurements,
                                int reference_dim) {
  if (channels.size() != measurements.size()) throw DimensionError("cmps: one measurement per agent required");
  LoccProtocol p;
  p.scheme_ = Scheme::Cmps;
  p.reference_dim_ = reference_dim;
  for (std::size_t a = 0; a < channels.size(); ++a) {
    const auto& s = channels[a];
    s.validate();
    if (s.outcomes != 1) throw DimensionError("cmps: channels must have a single outcome");
    if (measurements[a].empty()) throw DimensionError("cmps: measurement needs at least one outcome");
    Matrix completeness = Matrix::Zero(s.dim_out, s.dim_out);
    for (const auto& m : measurements[a]) {
      if (m.ops.empty() || m.dim_in() != s.dim_out || m.dim_out() != s.dim_out)
        throw DimensionError("cmps: measurement operators must act on the channel output space");
      completeness += m.completeness();
    }
    if (max_abs(completeness - Matrix::Identity(s.dim_out, s.dim_out)) > 1e-10)
      throw InvariantError("cmps: measurement is not complete");
    p.dims_in_.push_back(s.dim_in);
    p.dims_out_.push_back(s.dim_out);
  }
  p.agent_specs_ = std::move(channels);
  p.measurements_ = std::move(measurements);
  p.build_cmps();
  return p;
}

void LoccProtocol::build_general() {
  const int n = n_agents();
  const int r = static_cast<int>(rounds_.size());
  if (n < 1) throw DimensionError("general protocol needs at least one agent");
  for (int d : dims_in_)
    if (d < 1) throw DimensionError("agent dimension must be >= 1");
  for (const auto& rs : rounds_) {
    if (rs.leader < 0 || rs.leader >= n) throw DimensionError("round leader out of range");
    if (rs.outcomes < 1 || rs.kraus_order < 1 || rs.follower_kraus_order < 1)
      throw DimensionError("round spec entries must be >= 1");
  }

  // Part assignment, round-major; prefixes in lexicographic order.
  std::vector<std::vector<int>> leader_part(r);
  std::vector<std::vector<std::vector<int>>> follower_part(r);  // [round][prefix*S + j][follower]
  int prefixes = 1;
  for (int k = 0; k < r; ++k) {
    const auto& rs = rounds_[k];
    const int d = dims_in_[rs.leader];
    leader_part[k].resize(prefixes);
    follower_part[k].resize(static_cast<std::size_t>(prefixes) * rs.outcomes);
    for (int pr = 0; pr < prefixes; ++pr) {
      const auto prefix = decode_prefix(pr, rounds_, k);
      InstrumentSpec lspec{rs.outcomes, rs.kraus_order, d, d};
      lspec.validate();
      leader_part[k][pr] = static_cast<int>(layout_.size());
      layout_.push_back(lspec.shape());
      part_info_.push_back({"round " + std::to_string(k + 1) + " leader agent " + std::to_string(rs.leader) +
                                " after " + outcome_string(prefix),
                            Step::Kind::Instrument, rs.leader, lspec});
      if (identity_followers_) continue;
      for (int j = 0; j < rs.outcomes; ++j) {
        auto seq = prefix;
        seq.push_back(j);
        for (int a = 0; a < n; ++a) {
          if (a == rs.leader) continue;
          InstrumentSpec fspec{1, rs.follower_kraus_order, dims_in_[a], dims_in_[a]};
          follower_part[k][pr * rs.outcomes + j].push_back(static_cast<int>(layout_.size()));
          layout_.push_back(fspec.shape());
          part_info_.push_back({"round " + std::to_string(k + 1) + " follower agent " + std::to_string(a) + " after " +
                                    outcome_string(seq),
                                Step::Kind::Channel, a, fspec});
        }
      }
    }
    prefixes *= rs.outcomes;
  }

  // Step graph. Leader steps are created before their subtrees so the root
  // is the first step.
  std::function<int(int, int)> build = [&](int k, int pr) -> int {
    if (k == r) return -1;
    const auto& rs = rounds_[k];
    Step leader;
    leader.kind = Step::Kind::Instrument;
    leader.agent = rs.leader;
    leader.part = leader_part[k][pr];
    leader.spec = part_info_[leader.part].spec;
    leader.next.assign(rs.outcomes, -1);
    const int idx = add_step(leader);
    for (int j = 0; j < rs.outcomes; ++j) {
      const int child = pr * rs.outcomes + j;
      int next = build(k + 1, child);
      if (!identity_followers_) {
        const auto& fparts = follower_part[k][child];
        for (auto it = fparts.rbegin(); it != fparts.rend(); ++it) {
          Step f;
          f.kind = Step::Kind::Channel;
          f.agent = part_info_[*it].agent;
          f.part = *it;
          f.spec = part_info_[*it].spec;
          f.next = {next};
          next = add_step(f);
        }
      }
      steps_[idx].next[j] = next;
    }
    return idx;
  };
  root_ = build(0, 0);
}

void LoccProtocol::build_ips() {
  const int n = n_agents();
  std::vector<int> ids(n);
  for (int a = 0; a < n; ++a) {
    layout_.push_back(agent_specs_[a].shape());
    part_info_.push_back({"instrument agent " + std::to_string(a), Step::Kind::Instrument, a, agent_specs_[a]});
  }
  int next = -1;
  for (int a = n - 1; a >= 0; --a) {
    Step s;
    s.kind = Step::Kind::Instrument;
    s.agent = a;
    s.part = a;
    s.spec = agent_specs_[a];
    s.next.assign(s.spec.outcomes, next);
    next = add_step(s);
  }
  root_ = next;
}

void LoccProtocol::build_cmps() {
  const int n = n_agents();
  for (int a = 0; a < n; ++a) {
    layout_.push_back(agent_specs_[a].shape());
    part_info_.push_back({"channel agent " + std::to_string(a), Step::Kind::Channel, a, agent_specs_[a]});
  }
  int next = -1;
  for (int a = n - 1; a >= 0; --a) {
    Step m;
    m.kind = Step::Kind::Measurement;
    m.agent = a;
    m.measurement = a;
    m.spec = {static_cast<int>(measurements_[a].size()), 1, dims_out_[a], dims_out_[a]};
    m.next.assign(measurements_[a].size(), next);
    next = add_step(m);
    Step c;
    c.kind = Step::Kind::Channel;
    c.agent = a;
    c.part = a;
    c.spec = agent_specs_[a];
    c.next = {next};
    next = add_step(c);
  }
  root_ = next;
}

int LoccProtocol::n_rounds() const {
  return scheme_ == Scheme::General ? static_cast<int>(rounds_.size()) : n_agents();
}

int LoccProtocol::outcome_length() const { return n_rounds(); }

Dims LoccProtocol::input_party_dims() const {
  Dims d{reference_dim_};
  d.insert(d.end(), dims_in_.begin(), dims_in_.end());
  return d;
}

Dims LoccProtocol::output_party_dims() const {
  Dims d{reference_dim_};
  d.insert(d.end(), dims_out_.begin(), dims_out_.end());
  return d;
}

void check_layout(const LoccProtocol& protocol, const ProductPoint& point) {
  if (point.layout() != protocol.layout()) throw DimensionError("product point does not match the protocol layout");
}

// ---------------------------------------------------------------------------

namespace {

// K acts on the middle factor of a row space L x dx x R; A has L*dx*R rows.
Matrix left_apply(const Matrix& k, const Matrix& a, int left, int right) {
  const Eigen::Index dx = k.cols(), dy = k.rows(), cols = a.cols();
  Matrix out(left * dy * right, cols);
  const Eigen::Index blocks = left * cols;
  if (right == 1) {
    Eigen::Map<const Matrix> in(a.data(), dx, blocks);
    Eigen::Map<Matrix> o(out.data(), dy, blocks);
    o.noalias() = k * in;
  } else {
    const Matrix kt = k.transpose();
    for (Eigen::Index b = 0; b < blocks; ++b) {
      Eigen::Map<const Matrix> in(a.data() + b * dx * right, right, dx);
      Eigen::Map<Matrix> o(out.data() + b * dy * right, right, dy);
      o.noalias() = in * kt;
    }
  }
  return out;
}

// K rho K^dagger with K on the middle factor; rho Hermitian.
Matrix conjugate_local(const Matrix& k, const Matrix& rho, int left, int right) {
  const Matrix b = left_apply(k, rho, left, right);
  return left_apply(k, b.adjoint(), left, right);
}

// sum_{l,r} P[(l,a,r),(l,x,r)]
Matrix reduce_middle(const Matrix& p, int left, int dy, int dx, int right) {
  Matrix g = Matrix::Zero(dy, dx);
  for (int l = 0; l < left; ++l)
    for (int x = 0; x < dx; ++x)
      for (int r = 0; r < right; ++r) {
        const Eigen::Index col = (static_cast<Eigen::Index>(l) * dx + x) * right + r;
        for (int a = 0; a < dy; ++a) g(a, x) += p((static_cast<Eigen::Index>(l) * dy + a) * right + r, col);
      }
  return g;
}

struct Engine {
  const LoccProtocol& proto;
  const ProductPoint& point;
  const LeafFunctional& leaf;
  const std::optional<std::vector<int>>& selected;
  bool want_grad;
  ProductTangent grad;
  std::vector<int> outcomes;

  int outcome_count(const Step& s) const {
    return s.kind == Step::Kind::Measurement ? static_cast<int>(proto.measurements()[s.agent].size()) : s.spec.outcomes;
  }

  void kraus_ops(const Step& s, int j, std::vector<Matrix>& ops) const {
    ops.clear();
    if (s.kind == Step::Kind::Measurement) {
      ops = proto.measurements()[s.agent][j].ops;
      return;
    }
    const Matrix& x = point[s.part].matrix();
    for (int i = 0; i < s.spec.kraus_order; ++i)
      ops.push_back(x.middleRows((j * s.spec.kraus_order + i) * s.spec.dim_out, s.spec.dim_out));
  }

  LeafResult run(int idx, const Matrix& rho, const Dims& party_dims) {
    if (idx < 0) return leaf(rho, outcomes, want_grad);
    const Step& s = proto.steps()[idx];
    const int party = s.agent + 1;
    int left = 1, right = 1;
    for (int p = 0; p < party; ++p) left *= party_dims[p];
    for (std::size_t p = party + 1; p < party_dims.size(); ++p) right *= party_dims[p];
    const int dx = party_dims[party];
    if (dx != s.spec.dim_in) throw DimensionError("engine: party dimension does not match step input");
    Dims next_dims = party_dims;
    next_dims[party] = s.spec.dim_out;

    LeafResult acc;
    if (want_grad) acc.adjoint = Matrix::Zero(rho.rows(), rho.cols());
    std::vector<Matrix> ops;
    const int depth = static_cast<int>(outcomes.size());
    for (int j = 0; j < outcome_count(s); ++j) {
      if (s.records_outcome() && selected && (*selected)[depth] != j) continue;
      kraus_ops(s, j, ops);
      std::vector<Matrix> applied;  // K rho, kept for the gradient
      applied.reserve(ops.size());
      Matrix out = Matrix::Zero(static_cast<Eigen::Index>(left) * s.spec.dim_out * right,
                                static_cast<Eigen::Index>(left) * s.spec.dim_out * right);
      for (const auto& k : ops) {
        Matrix b = left_apply(k, rho, left, right);
        out.noalias() += left_apply(k, b.adjoint(), left, right);
        if (want_grad && s.part >= 0) applied.push_back(std::move(b));
      }
      if (s.records_outcome()) outcomes.push_back(j);
      LeafResult child = run(s.next[s.kind == Step::Kind::Channel ? 0 : j], out, next_dims);
      if (s.records_outcome()) outcomes.pop_back();
      acc.value += child.value;
      if (!want_grad) continue;
      const Matrix& w = child.adjoint;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        acc.adjoint.noalias() += conjugate_local(ops[i].adjoint(), w, left, right);
        if (s.part >= 0) {
          const Matrix pw = w * applied[i];
          const int row0 = (j * s.spec.kraus_order + static_cast<int>(i)) * s.spec.dim_out;
          grad[s.part].middleRows(row0, s.spec.dim_out) += 2.0 * reduce_middle(pw, left, s.spec.dim_out, dx, right);
        }
      }
    }
    return acc;
  }
};

Dims group_input(const LoccProtocol& protocol, const Dims& fine) {
  const Dims coarse = protocol.input_party_dims();
  std::size_t f = 0;
  for (int target : coarse) {
    if (target == 1) continue;
    long prod = 1;
    while (prod < target) {
      if (f == fine.size()) throw DimensionError("input state dims do not match the agent partition");
      prod *= fine[f++];
    }
    if (prod != target) throw DimensionError("input state dims do not match the agent partition");
  }
  for (; f < fine.size(); ++f)
    if (fine[f] != 1) throw DimensionError("input state dims do not match the agent partition");
  return coarse;
}

Dims output_dims_without_trivial_reference(const LoccProtocol& protocol) {
  Dims d = protocol.output_party_dims();
  if (d.front() == 1) d.erase(d.begin());
  return d;
}

std::vector<BranchOutcome> collect(const LoccProtocol& protocol, const ProductPoint& point, const QState& rho_in,
                                   const std::optional<std::vector<int>>& selected) {
  check_layout(protocol, point);
  group_input(protocol, rho_in.dims());
  const Dims out_dims = output_dims_without_trivial_reference(protocol);
  std::vector<BranchOutcome> branches;
  LeafFunctional leaf = [&](const Matrix& state, const std::vector<int>& seq, bool) {
    QState st = QState::trusted(state, out_dims, false);
    const double w = st.trace();
    branches.push_back({seq, std::move(st), w});
    return LeafResult{};
  };
  evaluate_tree(protocol, point, rho_in.matrix(), leaf, selected, false);
  return branches;
}

}  // namespace

TreeEvaluation evaluate_tree(const LoccProtocol& protocol, const ProductPoint& point, const Matrix& rho_in,
                             const LeafFunctional& leaf, const std::optional<std::vector<int>>& selected,
                             bool want_gradient) {
  check_layout(protocol, point);
  const Dims party_dims = protocol.input_party_dims();
  if (rho_in.rows() != total_dim(party_dims) || rho_in.cols() != rho_in.rows())
    throw DimensionError("input state dimension does not match the protocol");
  if (selected && static_cast<int>(selected->size()) != protocol.outcome_length())
    throw DimensionError("selected outcome sequence has the wrong length");
  Engine eng{protocol, point, leaf, selected, want_gradient, {}, {}};
  if (want_gradient)
    for (const auto& p : point.parts()) eng.grad.push_back(Matrix::Zero(p.rows(), p.cols()));
  LeafResult res = eng.run(protocol.root(), rho_in, party_dims);
  return {res.value, std::move(eng.grad)};
}

std::vector<BranchOutcome> apply(const LoccProtocol& protocol, const ProductPoint& point, const QState& rho_in) {
  return collect(protocol, point, rho_in, std::nullopt);
}

std::optional<BranchOutcome> apply_selected(const LoccProtocol& protocol, const ProductPoint& point,
                                            const QState& rho_in, const std::vector<int>& selected) {
  auto b = collect(protocol, point, rho_in, selected);
  if (b.empty()) return std::nullopt;
  return std::move(b.front());
}

std::vector<BranchOutcome> apply_cmps(const LoccProtocol& protocol, const ProductPoint& point, const QState& rho_in) {
  if (protocol.scheme() != Scheme::Cmps) throw std::invalid_argument("apply_cmps: protocol is not a CMPS protocol");
  return apply(protocol, point, rho_in);
}

std::vector<KrausSet> computational_measurement(const Dims& local_dims, const std::vector<bool>& measured) {
  if (local_dims.size() != measured.size()) throw DimensionError("computational_measurement: mask length mismatch");
  Dims mdims;
  for (std::size_t k = 0; k < local_dims.size(); ++k)
    if (measured[k]) mdims.push_back(local_dims[k]);
  const int n_outcomes = total_dim(mdims);
  std::vector<KrausSet> out;
  for (int o = 0; o < n_outcomes; ++o) {
    // digits of o over the measured subsystems, most significant first
    std::vector<int> digits(mdims.size());
    int rest = o;
    for (int k = static_cast<int>(mdims.size()) - 1; k >= 0; --k) {
      digits[k] = rest % mdims[k];
      rest /= mdims[k];
    }
    Matrix proj = Matrix::Ones(1, 1);
    for (std::size_t k = 0, m = 0; k < local_dims.size(); ++k) {
      Matrix factor;
      if (measured[k]) {
        factor = Matrix::Zero(local_dims[k], local_dims[k]);
        factor(digits[m], digits[m]) = 1.0;
        ++m;
      } else {
        factor = Matrix::Identity(local_dims[k], local_dims[k]);
      }
      proj = tensor(proj, factor);
    }
    out.push_back(KrausSet{{proj}});
  }
  return out;
}

std::pair<LoccProtocol, ProductPoint> ips_as_general(const LoccProtocol& ips, const ProductPoint& point) {
  if (ips.scheme() != Scheme::Ips) throw std::invalid_argument("ips_as_general: not an IPS protocol");
  check_layout(ips, point);
  std::vector<RoundSpec> rounds;
  for (int a = 0; a < ips.n_agents(); ++a) {
    const auto& s = ips.agent_specs()[a];
    if (s.dim_in != s.dim_out) throw DimensionError("ips_as_general: agents must keep their dimension");
    rounds.push_back({a, s.outcomes, s.kraus_order, 1});
  }
  LoccProtocol general = LoccProtocol::general(ips.agent_dims_in(), rounds, false, ips.reference_dim());
  std::vector<StiefelPoint> parts;
  for (const auto& info : general.part_info()) {
    if (info.kind == Step::Kind::Instrument)
      parts.push_back(point[info.agent]);
    else
      parts.push_back(StiefelPoint(Matrix::Identity(info.spec.dim_in, info.spec.dim_in)));
  }
  return {std::move(general), ProductPoint(std::move(parts))};
}

std::pair<LoccProtocol, ProductPoint> cmps_as_ips(const LoccProtocol& cmps, const ProductPoint& point) {
  if (cmps.scheme() != Scheme::Cmps) throw std::invalid_argument("cmps_as_ips: not a CMPS protocol");
  check_layout(cmps, point);
  std::vector<InstrumentSpec> specs;
  std::vector<StiefelPoint> parts;
  for (int a = 0; a < cmps.n_agents(); ++a) {
    const auto& ch = cmps.agent_specs()[a];
    const auto& meas = cmps.measurements()[a];
    const std::size_t per_outcome = meas.front().ops.size();
    for (const auto& m : meas)
      if (m.ops.size() != per_outcome) throw DimensionError("cmps_as_ips: measurement Kraus counts must be uniform");
    const Instrument channel = instrument_from_point(point[a], ch);
    InstrumentSpec spec{static_cast<int>(meas.size()), ch.kraus_order * static_cast<int>(per_outcome), ch.dim_in,
                        ch.dim_out};
    Instrument inst;
    for (const auto& m : meas) {
      KrausSet ks;
      for (const auto& mk : m.ops)
        for (const auto& k : channel.branches.front().ops) ks.ops.push_back(mk * k);
      inst.branches.push_back(std::move(ks));
    }
    parts.push_back(point_from_instrument(inst, spec));
    specs.push_back(spec);
  }
  return {LoccProtocol::ips(std::move(specs), cmps.reference_dim()), ProductPoint(std::move(parts))};
}

}  // namespace loccforge
