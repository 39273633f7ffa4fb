#pragma once

#include "loccforge/quantum.hpp"
#include "loccforge/stiefel.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace loccforge {

enum class Scheme { General, Ips, Cmps };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

/// Shape of one local instrument: S outcomes, T Kraus operators per outcome,
/// each d_out x d_in. A channel is an instrument with S = 1.
struct InstrumentSpec {
  int outcomes = 1;
  int kraus_order = 1;
  int dim_in = 1;
  int dim_out = 1;

  int rows() const { return outcomes * kraus_order * dim_out; }
  PartShape shape() const { return {rows(), dim_in}; }
  void validate() const;
  bool operator==(const InstrumentSpec&) const = default;
};

struct Instrument {
  std::vector<KrausSet> branches;
};

/// Slices the rows of X into contiguous d_out x d_in Kraus blocks, outcome
/// major then Kraus index.
Instrument instrument_from_point(const StiefelPoint& x, const InstrumentSpec& spec);

/// Inverse of instrument_from_point: stacks all Kraus blocks row-wise.
Matrix stack_instrument(const Instrument& inst);

/// One round of a general LOCC protocol: the leader applies an instrument,
/// every other agent applies a channel chosen by the full outcome history.
struct RoundSpec {
  int leader = 0;
  int outcomes = 2;
  int kraus_order = 1;
  int follower_kraus_order = 1;
  bool operator==(const RoundSpec&) const = default;
};

/// A node of the compiled protocol graph.
struct Step {
  enum class Kind { Instrument, Channel, Measurement };

  Kind kind = Kind::Channel;
  int agent = 0;
  int part = -1;             // ProductPoint part, -1 for fixed measurements
  int measurement = -1;      // index into LoccProtocol::measurements()
  InstrumentSpec spec;
  std::vector<int> next;     // per outcome; -1 terminates the branch

  bool records_outcome() const { return kind != Kind::Channel; }
};

/// Human-readable role of a product-manifold factor.
struct PartInfo {
  std::string role;
  Step::Kind kind = Step::Kind::Channel;
  int agent = 0;
  InstrumentSpec spec;
};

class LoccProtocol {
 public:
  /// r-round tree protocol on agents with fixed local dimensions.
  static LoccProtocol general(std::vector<int> agent_dims, std::vector<RoundSpec> rounds,
                              bool identity_followers = false, int reference_dim = 1);

  /// Independent local instruments, one per agent.
  static LoccProtocol ips(std::vector<InstrumentSpec> agents, int reference_dim = 1);

  /// Per agent: a channel (spec.outcomes must be 1) followed by a fixed
  /// measurement given as one KrausSet per outcome on the channel output.
  static LoccProtocol cmps(std::vector<InstrumentSpec> channels, std::vector<std::vector<KrausSet>> measurements,
                           int reference_dim = 1);

  Scheme scheme() const { return scheme_; }
  int n_agents() const { return static_cast<int>(dims_in_.size()); }
  int n_rounds() const;
  int reference_dim() const { return reference_dim_; }
  const std::vector<int>& agent_dims_in() const { return dims_in_; }
  const std::vector<int>& agent_dims_out() const { return dims_out_; }
  const std::vector<RoundSpec>& rounds() const { return rounds_; }
  bool identity_followers() const { return identity_followers_; }
  const std::vector<InstrumentSpec>& agent_specs() const { return agent_specs_; }
  const std::vector<std::vector<KrausSet>>& measurements() const { return measurements_; }

  /// Stiefel factor shapes, in the order of ProductPoint parts.
  const Layout& layout() const { return layout_; }
  const std::vector<PartInfo>& part_info() const { return part_info_; }

  const std::vector<Step>& steps() const { return steps_; }
  int root() const { return root_; }

  /// Number of recorded outcomes on every complete branch.
  int outcome_length() const;

  /// Party dims [reference, agent_1, ..., agent_N] before and after.
  Dims input_party_dims() const;
  Dims output_party_dims() const;

 private:
  LoccProtocol() = default;
  void build_general();
  void build_ips();
  void build_cmps();
  int add_step(Step s);

  Scheme scheme_ = Scheme::General;
  int reference_dim_ = 1;
  std::vector<int> dims_in_;
  std::vector<int> dims_out_;
  std::vector<RoundSpec> rounds_;
  bool identity_followers_ = false;
  std::vector<InstrumentSpec> agent_specs_;
  std::vector<std::vector<KrausSet>> measurements_;
  Layout layout_;
  std::vector<PartInfo> part_info_;
  std::vector<Step> steps_;
  int root_ = -1;
};

struct BranchOutcome {
  std::vector<int> outcomes;
  QState state;  // unnormalized
  double weight = 0.0;
};

/// Applies the protocol to `rho_in` and enumerates every outcome branch
/// depth first in lexicographic order. The output state carries party dims
/// [reference (omitted when 1), agent_1 out, ..., agent_N out].
std::vector<BranchOutcome> apply(const LoccProtocol& protocol, const ProductPoint& point, const QState& rho_in);

/// Only the branch matching `selected`.
std::optional<BranchOutcome> apply_selected(const LoccProtocol& protocol, const ProductPoint& point,
                                            const QState& rho_in, const std::vector<int>& selected);

/// apply() for CMPS protocols; throws for other schemes.
std::vector<BranchOutcome> apply_cmps(const LoccProtocol& protocol, const ProductPoint& point, const QState& rho_in);

/// Computational-basis measurement on an agent's output space. `local_dims`
/// lists the agent's subsystems; `measured` marks the ones that are
/// projected, the others pass through. Outcome 0 is all zeros.
std::vector<KrausSet> computational_measurement(const Dims& local_dims, const std::vector<bool>& measured);

/// Embeds an IPS point into the N-round general layout (identical leader
/// instruments per prefix, identity followers with Kraus order 1).
std::pair<LoccProtocol, ProductPoint> ips_as_general(const LoccProtocol& ips, const ProductPoint& point);

/// Composes each CMPS channel with its measurement into one IPS instrument.
std::pair<LoccProtocol, ProductPoint> cmps_as_ips(const LoccProtocol& cmps, const ProductPoint& point);

/// Stiefel point whose instrument has Kraus K_{j,i}; validates the shape.
StiefelPoint point_from_instrument(const Instrument& inst, const InstrumentSpec& spec);

void check_layout(const LoccProtocol& protocol, const ProductPoint& point);

// ---------------------------------------------------------------------------
// Evaluation engine shared by apply() and the objectives.

struct LeafResult {
  double value = 0.0;
  Matrix adjoint;  // d value / d state (Hermitian), empty when not requested
};

/// Called once per surviving branch with the unnormalized output state in
/// output party layout and the recorded outcome sequence.
using LeafFunctional =
    std::function<LeafResult(const Matrix& state, const std::vector<int>& outcomes, bool want_adjoint)>;

struct TreeEvaluation {
  double value = 0.0;
  ProductTangent gradient;  // Euclidean gradient 2 d value / dX*, per part
};

/// Sums the leaf functional over all branches (or only `selected`) and, when
/// requested, back-propagates the leaf adjoints to per-part gradients.
TreeEvaluation evaluate_tree(const LoccProtocol& protocol, const ProductPoint& point, const Matrix& rho_in,
                             const LeafFunctional& leaf, const std::optional<std::vector<int>>& selected,
                             bool want_gradient);

}  // namespace loccforge
