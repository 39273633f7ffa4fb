#include "loccforge/experiments.hpp"

#include "loccforge/ppt_bounds.hpp"
#include "loccforge/protocol_io.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace loccforge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Names

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::DistillAvg: return "distill-avg";
    case ExperimentKind::DistillFid: return "distill-fid";
    case ExperimentKind::CoherentInfo: return "coherent-info";
    case ExperimentKind::Merge: return "merge";
    case ExperimentKind::PptBound: return "ppt-bound";
    case ExperimentKind::Timing: return "timing";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::DistillAvg, ExperimentKind::DistillFid, ExperimentKind::CoherentInfo,
                 ExperimentKind::Merge, ExperimentKind::PptBound, ExperimentKind::Timing})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

namespace {

std::string to_string(PptProgram p) { return p == PptProgram::Average ? "avg" : "fixed_p"; }

SdpMethod sdp_method_from_string(const std::string& s) {
  for (auto m : {SdpMethod::Auto, SdpMethod::InteriorPoint, SdpMethod::Admm})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown SDP method '" + s + "'");
}

bool is_distill(ExperimentKind k) { return k == ExperimentKind::DistillAvg || k == ExperimentKind::DistillFid; }

}  // namespace

std::vector<double> linspace(double start, double stop, int n) {
  if (n < 1) throw std::invalid_argument("linspace: need at least one point");
  if (n == 1) return {start};
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = (start * (n - 1 - i) + stop * i) / (n - 1);
  out.back() = stop;
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)};
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

template <class T>
std::string type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "a list";
}

// One YAML mapping; remembers which keys were read so the rest can be
// reported as unknown.
class Fields {
 public:
  Fields(YAML::Node node, std::string path, std::vector<std::string>* defaulted)
      : node_(std::move(node)), path_(std::move(path)), defaulted_(defaulted) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a mapping");
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  bool read(const std::string& key, T& out) {
    known_.insert(key);
    if (!has(key)) {
      if (defaulted_) defaulted_->push_back(full(key));
      return false;
    }
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(full(key), "expected " + type_name<T>());
    }
    return true;
  }

  template <class T, class Convert>
  bool read_enum(const std::string& key, T& out, Convert convert) {
    std::string s;
    if (!read(key, s)) return false;
    try {
      out = convert(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(full(key), e.what());
    }
    return true;
  }

  Fields child(const std::string& key) {
    known_.insert(key);
    return Fields(has(key) ? node_[key] : YAML::Node(), full(key), defaulted_);
  }

  YAML::Node raw(const std::string& key) {
    known_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known_.count(key)) throw ConfigError(full(key), "unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::vector<std::string>* defaulted_;
  std::set<std::string> known_;
};

void apply_kind_defaults(ExperimentConfig& c) {
  c.noise.grid = linspace(0.0, 1.0, 11);
  c.optimizer.max_iters = 3000;
  switch (c.kind) {
    case ExperimentKind::DistillAvg:
      c.schemes = {"ips", "locc1", "locc2"};
      break;
    case ExperimentKind::DistillFid:
      c.schemes = {"cmps"};
      c.kraus_order = 2;
      break;
    case ExperimentKind::CoherentInfo:
      c.schemes = {"locc2"};
      c.noise.kinds = {NoiseKind::Gadc};
      c.optimizer.restarts = 5;
      break;
    case ExperimentKind::Merge:
      c.schemes = {"ips"};
      c.optimizer.restarts = 5;
      c.optimizer.max_iters = 2000;
      break;
    case ExperimentKind::PptBound: c.schemes = {}; break;
    case ExperimentKind::Timing:
      c.schemes = {"cmps"};
      c.optimizer.restarts = 1;
      break;
  }
}

void parse_grid(Fields& noise, ExperimentConfig& c) {
  const bool has_grid = noise.has("grid"), has_values = noise.has("values");
  if (has_grid && has_values) throw ConfigError(noise.full("grid"), "give either grid or values, not both");
  if (has_values) {
    noise.read("values", c.noise.grid);
    noise.child("grid");
    return;
  }
  noise.raw("values");
  Fields g = noise.child("grid");
  double start = 0.0, stop = 1.0;
  int points = 11;
  g.read("start", start);
  g.read("stop", stop);
  g.read("points", points);
  g.finish();
  if (points < 1) throw ConfigError(g.full("points"), "must be >= 1");
  c.noise.grid = linspace(start, stop, points);
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text, std::optional<ExperimentKind> kind) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<document>", std::string("not valid YAML: ") + e.what());
  }
  ExperimentConfig c;
  Fields top(root, "", &c.defaulted);
  std::string kind_name;
  if (top.read("experiment", kind_name)) {
    try {
      c.kind = experiment_kind_from_string(kind_name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("experiment", e.what());
    }
    if (kind && *kind != c.kind)
      throw ConfigError("experiment", "document is '" + kind_name + "' but '" + to_string(*kind) + "' was requested");
  } else if (kind) {
    c.kind = *kind;
  } else {
    throw ConfigError("experiment", "missing");
  }
  apply_kind_defaults(c);

  top.read("name", c.name);
  top.read("schemes", c.schemes);
  top.read("parties", c.parties);
  top.read("copies", c.copies);
  top.read("outcomes", c.outcomes);
  top.read("kraus_order", c.kraus_order);
  top.read("follower_kraus_order", c.follower_kraus_order);
  top.read("ppt", c.ppt);
  top.read("continuation", c.continuation);
  top.read("export_protocols", c.export_protocols);
  top.read("seed", c.seed);
  top.read("threads", c.threads);

  {
    Fields n = top.child("noise");
    std::vector<std::string> kinds;
    if (n.read("kinds", kinds)) {
      c.noise.kinds.clear();
      for (std::size_t i = 0; i < kinds.size(); ++i) {
        try {
          c.noise.kinds.push_back(noise_kind_from_string(kinds[i]));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(n.full("kinds") + "[" + std::to_string(i) + "]", e.what());
        }
      }
    }
    n.read_enum("placement", c.noise.placement, noise_locus_from_string);
    n.read("gamma_n", c.noise.gamma_n);
    parse_grid(n, c);
    n.finish();
  }
  {
    Fields m = top.child("merge");
    m.read("k", c.merge.k);
    m.read("m", c.merge.m);
    m.read("samples", c.merge.samples);
    m.read("outcomes", c.merge.outcomes);
    m.read("average", c.merge.average);
    m.read("alice_kraus", c.merge.alice_kraus);
    m.read("bob_kraus", c.merge.bob_kraus);
    m.read("ppt", c.merge.ppt);
    m.finish();
  }
  {
    Fields p = top.child("ppt_bound");
    p.read_enum("program", c.ppt_bound.program, [](const std::string& s) {
      if (s == "avg") return PptProgram::Average;
      if (s == "fixed_p") return PptProgram::FixedP;
      throw std::invalid_argument("unknown program '" + s + "' (avg or fixed_p)");
    });
    p.read("p_grid", c.ppt_bound.p_grid);
    p.read("overlay", c.ppt_bound.overlay);
    p.finish();
  }
  {
    Fields t = top.child("timing");
    t.read("copies", c.timing.copies);
    t.read("trials", c.timing.trials);
    t.read("gamma", c.timing.gamma);
    t.read("sdp_cap_seconds", c.timing.sdp_cap_seconds);
    t.finish();
  }
  {
    Fields o = top.child("optimizer");
    o.read("restarts", c.optimizer.restarts);
    o.read("max_iters", c.optimizer.max_iters);
    o.read("grad_tol", c.optimizer.grad_tol);
    o.read("armijo_c", c.optimizer.armijo_c);
    o.read("backtrack_factor", c.optimizer.backtrack_factor);
    o.read("init_step", c.optimizer.init_step);
    o.read("max_backtracks", c.optimizer.max_backtracks);
    o.finish();
  }
  {
    Fields s = top.child("sdp");
    s.read_enum("method", c.sdp.method, sdp_method_from_string);
    s.read("ipm_max_rows", c.sdp.ipm_max_rows);
    s.read("ipm_tol", c.sdp.ipm_tol);
    s.read("ipm_max_iters", c.sdp.ipm_max_iters);
    s.read("tol", c.sdp.tol);
    s.read("max_iters", c.sdp.max_iters);
    s.read("over_relaxation", c.sdp.over_relaxation);
    s.read("rho", c.sdp.rho);
    s.read("max_seconds", c.sdp.max_seconds);
    s.finish();
  }
  top.finish();
  if (c.name.empty()) c.name = to_string(c.kind);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind,
                             std::string* text) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (text) *text = ss.str();
  return parse_config(ss.str(), kind);
}

int scheme_rank(const std::string& scheme) {
  if (scheme == "ips") return 0;
  if (scheme == "cmps") return -1;
  if (scheme.rfind("locc", 0) == 0 && scheme.size() > 4) {
    const std::string digits = scheme.substr(4);
    if (std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) &&
        digits.size() < 4) {
      const int r = std::stoi(digits);
      if (r >= 1) return r;
    }
  }
  throw std::invalid_argument("unknown scheme '" + scheme + "' (ips, cmps, locc1, locc2, ...)");
}

void ExperimentConfig::validate() const {
  auto in_unit = [](double g) { return g >= 0.0 && g <= 1.0; };
  if (parties < 2) throw ConfigError("parties", "must be >= 2");
  if (copies < 1 || copies > 4) throw ConfigError("copies", "must be in 1..4");
  if (outcomes < 1) throw ConfigError("outcomes", "must be >= 1");
  if (kraus_order < 1) throw ConfigError("kraus_order", "must be >= 1");
  if (follower_kraus_order < 1) throw ConfigError("follower_kraus_order", "must be >= 1");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  if (name.empty() || name.find_first_of("/\\") != std::string::npos)
    throw ConfigError("name", "must be a non-empty file stem");

  std::set<std::string> seen;
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    const std::string field = "schemes[" + std::to_string(i) + "]";
    int rank = 0;
    try {
      rank = scheme_rank(schemes[i]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(field, e.what());
    }
    if (!seen.insert(schemes[i]).second) throw ConfigError(field, "duplicate scheme");
    const bool ok = [&] {
      switch (kind) {
        case ExperimentKind::DistillAvg: return rank >= 0;
        case ExperimentKind::DistillFid: return true;
        case ExperimentKind::CoherentInfo: return schemes[i] == "locc2";
        case ExperimentKind::Merge: return schemes[i] == "ips";
        case ExperimentKind::PptBound: return false;
        case ExperimentKind::Timing: return schemes[i] == "cmps";
      }
      return false;
    }();
    if (!ok) throw ConfigError(field, "scheme '" + schemes[i] + "' is not available for " + to_string(kind));
  }
  if (schemes.empty() && kind != ExperimentKind::PptBound) throw ConfigError("schemes", "must not be empty");

  if (noise.kinds.empty()) throw ConfigError("noise.kinds", "must not be empty");
  if (noise.grid.empty()) throw ConfigError("noise.grid", "must have at least one point");
  for (double g : noise.grid)
    if (!in_unit(g)) throw ConfigError("noise.grid", "values must lie in [0, 1]");
  if (!in_unit(noise.gamma_n)) throw ConfigError("noise.gamma_n", "must lie in [0, 1]");
  const bool gadc = std::find(noise.kinds.begin(), noise.kinds.end(), NoiseKind::Gadc) != noise.kinds.end();
  if (kind == ExperimentKind::CoherentInfo) {
    if (noise.kinds != std::vector<NoiseKind>{NoiseKind::Gadc})
      throw ConfigError("noise.kinds", "coherent-info uses [gadc]");
  } else if (is_distill(kind) || kind == ExperimentKind::PptBound || kind == ExperimentKind::Timing) {
    if (gadc) throw ConfigError("noise.kinds", "gadc is only used by coherent-info");
    if (noise.kinds.size() != 1 && static_cast<int>(noise.kinds.size()) != copies)
      throw ConfigError("noise.kinds", "give one kind, or one per copy");
  }

  if (merge.samples < 1) throw ConfigError("merge.samples", "must be >= 1");
  if (merge.k < 1 || merge.k > 2) throw ConfigError("merge.k", "must be 1 or 2");
  if (merge.m < 1 || merge.m > 2) throw ConfigError("merge.m", "must be 1 or 2");
  if (merge.outcomes < 1) throw ConfigError("merge.outcomes", "must be >= 1");
  if (merge.alice_kraus < 0) throw ConfigError("merge.alice_kraus", "must be >= 0");
  if (merge.bob_kraus < 0) throw ConfigError("merge.bob_kraus", "must be >= 0");
  if (kind == ExperimentKind::Merge && merge.ppt && (merge.k != 1 || merge.m != 1 || !merge.average))
    throw ConfigError("merge.ppt", "the PPT merging bound needs k = m = 1 and average: true");

  if (kind == ExperimentKind::PptBound) {
    if (parties != 2) throw ConfigError("parties", "PPT bounds are bipartite");
    if (ppt_bound.program == PptProgram::FixedP && ppt_bound.p_grid.empty() && ppt_bound.overlay.empty())
      throw ConfigError("ppt_bound.p_grid", "fixed_p needs a p grid or an overlay");
  }
  for (double p : ppt_bound.p_grid)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("ppt_bound.p_grid", "values must lie in (0, 1]");
  if (ppt && parties != 2) throw ConfigError("ppt", "PPT bounds are bipartite");

  if (timing.trials < 1) throw ConfigError("timing.trials", "must be >= 1");
  if (timing.copies.empty()) throw ConfigError("timing.copies", "must not be empty");
  for (int m : timing.copies)
    if (m < 1 || m > 4) throw ConfigError("timing.copies", "values must be in 1..4");
  if (!in_unit(timing.gamma)) throw ConfigError("timing.gamma", "must lie in [0, 1]");
  if (!(timing.sdp_cap_seconds >= 0)) throw ConfigError("timing.sdp_cap_seconds", "must be >= 0");

  try {
    OptimOptions o = optimizer;
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("optimizer", e.what());
  }
  if (!(sdp.tol > 0) || sdp.max_iters < 1 || !(sdp.over_relaxation > 0 && sdp.over_relaxation < 2) ||
      !(sdp.rho > 0) || !(sdp.ipm_tol > 0) || sdp.ipm_max_iters < 1 || !(sdp.max_seconds >= 0))
    throw ConfigError("sdp", "invalid solver options");
}

json config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.noise.kinds) kinds.push_back(to_string(k));
  json j;
  j["experiment"] = to_string(c.kind);
  j["name"] = c.name;
  j["schemes"] = c.schemes;
  j["parties"] = c.parties;
  j["copies"] = c.copies;
  j["outcomes"] = c.outcomes;
  j["kraus_order"] = c.kraus_order;
  j["follower_kraus_order"] = c.follower_kraus_order;
  j["ppt"] = c.ppt;
  j["continuation"] = c.continuation;
  j["export_protocols"] = c.export_protocols;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["noise"] = {{"kinds", kinds},
                {"placement", to_string(c.noise.placement)},
                {"grid", c.noise.grid},
                {"gamma_n", c.noise.gamma_n}};
  j["merge"] = {{"k", c.merge.k},
                {"m", c.merge.m},
                {"samples", c.merge.samples},
                {"outcomes", c.merge.outcomes},
                {"average", c.merge.average},
                {"alice_kraus", c.merge.alice_kraus},
                {"bob_kraus", c.merge.bob_kraus},
                {"ppt", c.merge.ppt}};
  j["ppt_bound"] = {
      {"program", to_string(c.ppt_bound.program)}, {"p_grid", c.ppt_bound.p_grid}, {"overlay", c.ppt_bound.overlay}};
  j["timing"] = {{"copies", c.timing.copies},
                 {"trials", c.timing.trials},
                 {"gamma", c.timing.gamma},
                 {"sdp_cap_seconds", c.timing.sdp_cap_seconds}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"restarts", o.restarts},         {"max_iters", o.max_iters},
                    {"grad_tol", o.grad_tol},         {"armijo_c", o.armijo_c},
                    {"backtrack_factor", o.backtrack_factor}, {"init_step", o.init_step},
                    {"max_backtracks", o.max_backtracks}};
  const auto& s = c.sdp;
  j["sdp"] = {{"method", to_string(s.method)}, {"ipm_max_rows", s.ipm_max_rows}, {"ipm_tol", s.ipm_tol},
              {"ipm_max_iters", s.ipm_max_iters}, {"tol", s.tol},                {"max_iters", s.max_iters},
              {"over_relaxation", s.over_relaxation}, {"rho", s.rho},           {"max_seconds", s.max_seconds}};
  return j;
}

// ---------------------------------------------------------------------------
// Protocols and embeddings

LoccProtocol make_distill_protocol(const std::string& scheme, const ExperimentConfig& c) {
  const int rank = scheme_rank(scheme);
  if (rank < 0) return distill_cmps_protocol(c.parties, c.copies, c.kraus_order);
  if (rank == 0) return distill_ips_protocol(c.parties, c.copies, c.outcomes, c.kraus_order);
  std::vector<RoundSpec> rounds;
  for (int r = 0; r < rank; ++r)
    rounds.push_back(RoundSpec{r % c.parties, c.outcomes, c.kraus_order, c.follower_kraus_order});
  return distill_general_protocol(c.parties, c.copies, rounds);
}

ProductPoint identity_point(const Layout& layout) {
  std::vector<StiefelPoint> parts;
  for (const auto& s : layout) parts.emplace_back(Matrix::Identity(s.rows, s.cols));
  return ProductPoint(std::move(parts));
}

namespace {

// Channel that applies every Kraus operator of `inst`, padded with zero
// operators to `order`.
std::optional<StiefelPoint> outcome_blind_channel(const Instrument& inst, const InstrumentSpec& target) {
  KrausSet all;
  for (const auto& b : inst.branches)
    for (const auto& k : b.ops) all.ops.push_back(k);
  if (static_cast<int>(all.ops.size()) > target.kraus_order || all.ops.empty()) return std::nullopt;
  if (all.ops[0].rows() != target.dim_out || all.ops[0].cols() != target.dim_in) return std::nullopt;
  while (static_cast<int>(all.ops.size()) < target.kraus_order)
    all.ops.push_back(Matrix::Zero(target.dim_out, target.dim_in));
  return point_from_instrument(Instrument{{all}}, target);
}

}  // namespace

std::optional<ProductPoint> lift_point(const LoccProtocol& from, const ProductPoint& point, const LoccProtocol& to) {
  check_layout(from, point);
  if (to.scheme() != Scheme::General || to.identity_followers() || to.rounds().empty()) return std::nullopt;
  if (from.reference_dim() != to.reference_dim() || from.agent_dims_in() != to.agent_dims_in() ||
      from.agent_dims_out() != to.agent_dims_out())
    return std::nullopt;

  std::vector<StiefelPoint> parts;
  if (from.scheme() == Scheme::General) {
    const auto& fr = from.rounds();
    const auto& tr = to.rounds();
    if (from.identity_followers() || fr.size() > tr.size() || !std::equal(fr.begin(), fr.end(), tr.begin()))
      return std::nullopt;
    parts = point.parts();
  } else if (from.scheme() == Scheme::Ips) {
    const RoundSpec& first = to.rounds()[0];
    const int n = from.n_agents();
    const auto& specs = from.agent_specs();
    const InstrumentSpec& leader = specs[first.leader];
    if (leader.outcomes != first.outcomes || leader.kraus_order != first.kraus_order) return std::nullopt;
    parts.push_back(point[first.leader]);
    for (int j = 0; j < first.outcomes; ++j) {
      for (int a = 0; a < n; ++a) {
        if (a == first.leader) continue;
        const InstrumentSpec target{1, first.follower_kraus_order, specs[a].dim_out, specs[a].dim_in};
        auto ch = outcome_blind_channel(instrument_from_point(point[a], specs[a]), target);
        if (!ch) return std::nullopt;
        parts.push_back(*ch);
      }
    }
  } else {
    return std::nullopt;
  }

  const Layout& layout = to.layout();
  if (parts.size() > layout.size()) return std::nullopt;
  for (std::size_t i = 0; i < parts.size(); ++i)
    if (!(PartShape{parts[i].rows(), parts[i].cols()} == layout[i])) return std::nullopt;
  for (std::size_t i = parts.size(); i < layout.size(); ++i)
    parts.emplace_back(Matrix::Identity(layout[i].rows, layout[i].cols));
  return ProductPoint(std::move(parts));
}

// ---------------------------------------------------------------------------
// Execution helpers

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Runs fn(i) for i in [0, n) on up to `threads` workers; results land in
// index order. A task that throws leaves its slot empty and records the error.
template <class R>
std::vector<std::optional<R>> parallel_map(int n, int threads, const std::function<R(int)>& fn,
                                           std::vector<std::string>& errors) {
  std::vector<std::optional<R>> out(n);
  errors.assign(n, "");
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int w = std::max(1, std::min(threads, n));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

// Seed streams.
enum : std::uint64_t { kStreamOptimize = 1, kStreamHaar = 2, kStreamTiming = 3 };

std::uint64_t scheme_code(const std::string& scheme) {
  const int r = scheme_rank(scheme);
  return r < 0 ? 1000 : static_cast<std::uint64_t>(r);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

QState distill_input(const ExperimentConfig& c, int copies, double gamma) {
  const int dim = c.noise.placement == NoiseLocus::JointCopy ? 1 << c.parties : 2;
  std::vector<NoiseChannel> noises;
  for (int k = 0; k < copies; ++k) {
    const NoiseKind kind = c.noise.kinds.size() == 1 ? c.noise.kinds[0] : c.noise.kinds[k];
    noises.push_back(make_noise(kind, {gamma}, dim));
  }
  return noisy_bell_input(copies, noises, c.parties, c.noise.placement);
}

std::string noise_label(const ExperimentConfig& c) {
  std::string s;
  for (auto k : c.noise.kinds) s += (s.empty() ? "" : "+") + to_string(k);
  return s;
}

Objective distill_objective(const ExperimentConfig& c, const LoccProtocol& p, double gamma) {
  QState rho = distill_input(c, c.copies, gamma);
  return c.kind == ExperimentKind::DistillAvg ? avg_distill_objective(p, std::move(rho), c.parties, c.copies)
                                              : distill_fid_objective(p, std::move(rho), c.parties, c.copies);
}

struct Candidate {
  ProductPoint point;
  double value = -std::numeric_limits<double>::infinity();
  OptimStatus status = OptimStatus::MaxIterations;
  std::string source;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

// Descent from `start`; the result is never below the start value.
Candidate descend(const CostFunction& cost, const ProductPoint& start, const OptimOptions& opts,
                  const std::string& source) {
  const auto t0 = Clock::now();
  OptimResult r = minimize(cost, start, opts);
  Candidate c;
  c.point = std::move(r.point);
  c.value = -r.value;
  c.status = r.trace.status;
  c.source = source;
  c.seed = opts.seed;
  c.seconds = seconds_since(t0);
  return c;
}

Candidate cold_start(const CostFunction& cost, const Layout& layout, const OptimOptions& opts) {
  const auto t0 = Clock::now();
  MultiRestartResult r = multi_restart(cost, layout, opts);
  Candidate c;
  c.point = std::move(r.best.point);
  c.value = -r.best.value;
  c.status = r.best.trace.status;
  c.source = "cold#" + std::to_string(r.best_index);
  c.seed = opts.seed;
  c.seconds = seconds_since(t0);
  return c;
}

void keep_better(Candidate& best, Candidate cand) {
  const double spent = best.seconds + cand.seconds;
  if (cand.value > best.value) best = std::move(cand);
  best.seconds = spent;
}

double bound_margin(double bound, double value) { return bound - value; }

PptBound distill_ppt(const QState& rho, int copies, std::optional<double> p, const SdpOptions& opts) {
  const int d_side = 1 << copies;
  if (p) return ppt_fidelity_bound(rho.matrix(), Dims{d_side, d_side}, 2, *p, opts);
  return ppt_avg_fidelity_bound(rho.matrix(), Dims{d_side, d_side}, 2, opts);
}

std::string grid_tag(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

// ---------------------------------------------------------------------------
// Experiments

void run_distill(const ExperimentConfig& c, ExperimentResult& res, const LogSink& log) {
  const int n_grid = static_cast<int>(c.noise.grid.size());
  std::vector<std::string> schemes = c.schemes;
  std::stable_sort(schemes.begin(), schemes.end(),
                   [](const std::string& a, const std::string& b) { return scheme_rank(a) < scheme_rank(b); });
  const bool avg = c.kind == ExperimentKind::DistillAvg;
  const std::string flags_base = "S=" + std::to_string(c.outcomes) + ";T=" + std::to_string(c.kraus_order) +
                                 ";f=" + std::to_string(c.follower_kraus_order) +
                                 ";placement=" + to_string(c.noise.placement);

  std::vector<LoccProtocol> protocols;
  for (const auto& s : schemes) protocols.push_back(make_distill_protocol(s, c));
  std::vector<std::vector<std::optional<Candidate>>> best(schemes.size());
  std::vector<std::vector<std::string>> errors(schemes.size());

  // Cold multi-restart and identity starts, independent per (scheme, gamma).
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    std::vector<std::string> errs;
    best[s] = parallel_map<Candidate>(
        n_grid, c.threads,
        [&](int i) {
          const double g = c.noise.grid[i];
          const CostFunction cost = negated_cost(distill_objective(c, protocols[s], g));
          OptimOptions o = c.optimizer;
          o.seed = derive_seed(c.seed, {kStreamOptimize, scheme_code(schemes[s]), static_cast<std::uint64_t>(i)});
          Candidate b = cold_start(cost, protocols[s].layout(), o);
          keep_better(b, descend(cost, identity_point(protocols[s].layout()), o, "identity"));
          return b;
        },
        errs);
    errors[s] = errs;
    log(schemes[s] + ": cold starts done");
  }

  // Continuation along the grid and embeddings of the next lower scheme,
  // processed lowest rank first so inclusions carry over.
  if (c.continuation) {
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      std::optional<std::size_t> lower;
      if (avg && scheme_rank(schemes[s]) > 0 && s > 0 && scheme_rank(schemes[s - 1]) >= 0) lower = s - 1;
      auto refine = [&](int i, int neighbour, const std::string& tag) {
        if (!best[s][i]) return;
        const CostFunction cost = negated_cost(distill_objective(c, protocols[s], c.noise.grid[i]));
        OptimOptions o = c.optimizer;
        o.seed = best[s][i]->seed;
        if (neighbour >= 0 && neighbour < n_grid && best[s][neighbour])
          keep_better(*best[s][i], descend(cost, best[s][neighbour]->point, o, tag));
        if (lower && best[*lower][i]) {
          if (auto lifted = lift_point(protocols[*lower], best[*lower][i]->point, protocols[s]))
            keep_better(*best[s][i], descend(cost, *lifted, o, "lift:" + schemes[*lower]));
        }
      };
      try {
        for (int i = 0; i < n_grid; ++i) refine(i, i - 1, "warm-");
        for (int i = n_grid - 1; i >= 0; --i) refine(i, i + 1, "warm+");
      } catch (const std::exception& e) {
        res.failures.push_back(schemes[s] + " continuation: " + e.what());
        log(res.failures.back());
      }
      log(schemes[s] + ": continuation done");
    }
  }

  // PPT bounds: per gamma for the average program, per achieved p otherwise.
  std::vector<std::optional<double>> avg_bound(n_grid);
  std::vector<double> avg_bound_seconds(n_grid, 0.0);
  if (c.ppt && avg) {
    std::vector<std::string> errs;
    auto bounds = parallel_map<std::pair<double, double>>(
        n_grid, c.threads,
        [&](int i) {
          const auto t0 = Clock::now();
          const double v = distill_ppt(distill_input(c, c.copies, c.noise.grid[i]), c.copies, std::nullopt, c.sdp).value;
          return std::make_pair(v, seconds_since(t0));
        },
        errs);
    for (int i = 0; i < n_grid; ++i) {
      if (bounds[i]) {
        avg_bound[i] = bounds[i]->first;
        avg_bound_seconds[i] = bounds[i]->second;
      } else {
        res.failures.push_back("ppt gamma=" + fmt_double(c.noise.grid[i]) + ": " + errs[i]);
      }
    }
  }

  for (std::size_t s = 0; s < schemes.size(); ++s) {
    for (int i = 0; i < n_grid; ++i) {
      const double g = c.noise.grid[i];
      ResultRow row;
      row.experiment = to_string(c.kind);
      row.scheme = schemes[s];
      row.copies = c.copies;
      row.gamma = g;
      row.flags = flags_base + ";noise=" + noise_label(c);
      if (!best[s][i]) {
        row.value = std::numeric_limits<double>::quiet_NaN();
        row.status = "error";
        res.failures.push_back(schemes[s] + " gamma=" + fmt_double(g) + ": " + errors[s][i]);
        log(res.failures.back());
        res.rows.push_back(row);
        continue;
      }
      const Candidate& b = *best[s][i];
      const Objective obj = distill_objective(c, protocols[s], g);
      const ObjectiveValue v = evaluate(obj, b.point);
      row.value = v.value;
      row.success_probability = v.success_probability;
      row.seed = b.seed;
      row.status = v.failed ? "failed_branch" : to_string(b.status);
      row.flags += ";source=" + b.source;
      row.wall_seconds = b.seconds;
      if (c.ppt) {
        try {
          if (avg) {
            row.ppt_bound = avg_bound[i];
          } else if (!v.failed) {
            const auto t0 = Clock::now();
            row.ppt_bound = distill_ppt(obj.input, c.copies, v.success_probability, c.sdp).value;
            row.wall_seconds += seconds_since(t0);
          }
        } catch (const std::exception& e) {
          res.failures.push_back("ppt " + schemes[s] + " gamma=" + fmt_double(g) + ": " + e.what());
        }
        if (row.ppt_bound) row.dominance_margin = bound_margin(*row.ppt_bound, row.value);
      }
      res.rows.push_back(row);
      if (c.export_protocols) {
        json meta = {{"experiment", row.experiment}, {"objective", to_string(obj.kind)},
                     {"scheme", schemes[s]},         {"parties", c.parties},
                     {"copies", c.copies},           {"gamma", g},
                     {"noise", noise_label(c)},      {"placement", to_string(c.noise.placement)},
                     {"value", v.value},             {"success_probability", v.success_probability},
                     {"seed", b.seed}};
        res.protocols.push_back(
            {"protocols/" + c.name + "_" + schemes[s] + "_" + grid_tag(i) + ".json", protocols[s], b.point, meta});
      }
    }
  }

  // Inclusion chain report.
  json chain = json::array();
  for (std::size_t s = 1; s < schemes.size(); ++s) {
    if (scheme_rank(schemes[s - 1]) < 0) continue;
    double worst = std::numeric_limits<double>::infinity(), gain = -worst;
    for (int i = 0; i < n_grid; ++i) {
      if (!best[s][i] || !best[s - 1][i]) continue;
      const double d = best[s][i]->value - best[s - 1][i]->value;
      worst = std::min(worst, d);
      gain = std::max(gain, d);
    }
    chain.push_back({{"higher", schemes[s]}, {"lower", schemes[s - 1]}, {"min_gain", worst}, {"max_gain", gain}});
  }
  res.report["inclusion_chain"] = chain;
}

void run_coherent_info(const ExperimentConfig& c, ExperimentResult& res, const LogSink& log) {
  const int n_grid = static_cast<int>(c.noise.grid.size());
  const LoccProtocol protocol = coherent_info_protocol(c.copies, c.outcomes);
  struct Point {
    double hashing = 0.0;
    Candidate best;
    double value = 0.0;
  };
  std::vector<std::string> errs;
  auto points = parallel_map<Point>(
      n_grid, c.threads,
      [&](int i) {
        const QState choi = gadc_choi_state(c.noise.grid[i], c.noise.gamma_n);
        Point pt;
        pt.hashing = coherent_information(choi, 1);
        const Objective obj = coherent_info_objective(
            protocol, copies_agent_major(std::vector<QState>(c.copies, choi), 2), c.copies);
        const CostFunction cost = negated_cost(obj);
        OptimOptions o = c.optimizer;
        o.seed = derive_seed(c.seed, {kStreamOptimize, 2000, static_cast<std::uint64_t>(i)});
        pt.best = cold_start(cost, protocol.layout(), o);
        keep_better(pt.best, descend(cost, identity_point(protocol.layout()), o, "identity"));
        pt.value = evaluate(obj, pt.best.point).value;
        return pt;
      },
      errs);

  double max_gap = -std::numeric_limits<double>::infinity(), min_gap = -max_gap;
  double gap_at = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < n_grid; ++i) {
    const double g = c.noise.grid[i];
    ResultRow base;
    base.experiment = to_string(c.kind);
    base.gamma = g;
    base.gamma_n = c.noise.gamma_n;
    if (!points[i]) {
      base.scheme = "locc2";
      base.copies = c.copies;
      base.value = std::numeric_limits<double>::quiet_NaN();
      base.status = "error";
      res.failures.push_back("gamma_a=" + fmt_double(g) + ": " + errs[i]);
      log(res.failures.back());
      res.rows.push_back(base);
      continue;
    }
    const Point& pt = *points[i];
    ResultRow h = base;
    h.scheme = "hashing";
    h.copies = 1;
    h.value = pt.hashing;
    h.status = "exact";
    res.rows.push_back(h);

    ResultRow r = base;
    r.scheme = "locc2";
    r.copies = c.copies;
    r.value = pt.value;
    r.seed = pt.best.seed;
    r.status = to_string(pt.best.status);
    r.flags = "S=" + std::to_string(c.outcomes) + ";T=1;followers=identity;source=" + pt.best.source;
    r.wall_seconds = pt.best.seconds;
    res.rows.push_back(r);
    const double gap = pt.value - pt.hashing;
    if (gap > max_gap) {
      max_gap = gap;
      gap_at = g;
    }
    min_gap = std::min(min_gap, gap);
    if (c.export_protocols) {
      json meta = {{"experiment", r.experiment}, {"objective", "block_coherent_info"}, {"copies", c.copies},
                   {"gamma_a", g},               {"gamma_n", c.noise.gamma_n},        {"value", pt.value},
                   {"hashing", pt.hashing},      {"seed", pt.best.seed}};
      res.protocols.push_back(
          {"protocols/" + c.name + "_locc2_" + grid_tag(i) + ".json", protocol, pt.best.point, meta});
    }
  }
  res.report["max_gap_over_hashing"] = max_gap;
  res.report["max_gap_gamma_a"] = gap_at;
  res.report["min_gap_over_hashing"] = min_gap;
}

void run_merge(const ExperimentConfig& c, ExperimentResult& res, const LogSink& log) {
  const auto& mc = c.merge;
  const LoccProtocol protocol = merge_protocol(mc.k, mc.m, mc.outcomes, mc.alice_kraus, mc.bob_kraus);
  struct Sample {
    double cond_entropy = 0.0;
    Candidate best;
    ObjectiveValue value;
    std::optional<double> bound;
    std::uint64_t state_seed = 0;
    double seconds = 0.0;
  };
  std::vector<std::string> errs;
  std::atomic<int> done{0};
  auto samples = parallel_map<Sample>(
      mc.samples, c.threads,
      [&](int i) {
        const auto t0 = Clock::now();
        Sample smp;
        smp.state_seed = derive_seed(c.seed, {kStreamHaar, static_cast<std::uint64_t>(i)});
        const PureState psi = haar_random_pure(Dims{2, 2, 2}, smp.state_seed);
        smp.cond_entropy = conditional_entropy(psi);
        const Objective obj = merge_objective(protocol, psi, mc.k, mc.m, mc.average);
        OptimOptions o = c.optimizer;
        o.seed = derive_seed(c.seed, {kStreamOptimize, 3000, static_cast<std::uint64_t>(i)});
        smp.best = cold_start(negated_cost(obj), protocol.layout(), o);
        smp.value = evaluate(obj, smp.best.point);
        if (mc.ppt) smp.bound = ppt_merging_bound(psi, c.sdp).value;
        smp.seconds = seconds_since(t0);
        if (const int d = ++done; d % 25 == 0) log("merge: " + std::to_string(d) + " samples");
        return smp;
      },
      errs);

  const std::string flags = "k=" + std::to_string(mc.k) + ";m=" + std::to_string(mc.m) +
                            ";S=" + std::to_string(mc.outcomes) + ";alice_kraus=" + std::to_string(mc.alice_kraus) +
                            ";bob_kraus=" + std::to_string(mc.bob_kraus) + (mc.average ? ";average" : ";selected");
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mc.samples; ++i) {
    ResultRow r;
    r.experiment = to_string(c.kind);
    r.scheme = "ips";
    r.copies = 1;
    r.sample = i;
    r.flags = flags;
    if (!samples[i]) {
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.status = "error";
      res.failures.push_back("sample " + std::to_string(i) + ": " + errs[i]);
      log(res.failures.back());
      res.rows.push_back(r);
      continue;
    }
    const Sample& s = *samples[i];
    r.cond_entropy = s.cond_entropy;
    r.value = s.value.value;
    r.success_probability = s.value.success_probability;
    r.ppt_bound = s.bound;
    if (s.bound) r.dominance_margin = bound_margin(*s.bound, r.value);
    r.seed = s.best.seed;
    r.status = s.value.failed ? "failed_branch" : to_string(s.best.status);
    r.flags += ";source=" + s.best.source;
    r.wall_seconds = s.seconds;
    worst = std::min(worst, r.value);
    res.rows.push_back(r);
    if (c.export_protocols) {
      json meta = {{"experiment", r.experiment},
                   {"objective", mc.average ? "avg_merge_fidelity" : "merge_fidelity"},
                   {"k", mc.k},
                   {"m", mc.m},
                   {"sample", i},
                   {"state_seed", s.state_seed},
                   {"value", r.value},
                   {"success_probability", s.value.success_probability},
                   {"seed", s.best.seed}};
      res.protocols.push_back({"protocols/" + c.name + "_sample_" + grid_tag(i) + ".json", protocol, s.best.point, meta});
    }
  }
  res.report["min_value"] = worst;
}

// Overlay rows (from a results CSV) checked against bounds at their gamma.
void overlay_dominance(const ExperimentConfig& c, ExperimentResult& res, const std::vector<ResultRow>& bounds) {
  std::ifstream in(c.ppt_bound.overlay);
  if (!in) throw ConfigError("ppt_bound.overlay", "cannot read " + c.ppt_bound.overlay);
  const std::vector<ResultRow> rows = read_csv(in);
  int checked = 0, violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (ResultRow r : rows) {
    if (!r.gamma || std::isnan(r.value) || r.scheme == "ppt") continue;
    std::optional<double> bound;
    const auto t0 = Clock::now();
    if (c.ppt_bound.program == PptProgram::Average) {
      for (const auto& b : bounds)
        if (b.gamma && std::abs(*b.gamma - *r.gamma) < 1e-12) bound = b.value;
    } else if (r.success_probability && *r.success_probability > 0) {
      bound = distill_ppt(distill_input(c, c.copies, *r.gamma), c.copies, *r.success_probability, c.sdp).value;
    }
    if (!bound) continue;
    r.ppt_bound = bound;
    r.dominance_margin = *bound - r.value;
    r.wall_seconds = seconds_since(t0);
    ++checked;
    if (*r.dominance_margin < -1e-4) ++violations;
    min_margin = std::min(min_margin, *r.dominance_margin);
    res.rows.push_back(r);
  }
  res.report["dominance"] = {{"checked", checked}, {"violations", violations}, {"min_margin", min_margin},
                             {"tolerance", 1e-4}};
}

void run_ppt_bound(const ExperimentConfig& c, ExperimentResult& res, const LogSink& log) {
  const int n_grid = static_cast<int>(c.noise.grid.size());
  std::vector<std::optional<double>> ps;
  if (c.ppt_bound.program == PptProgram::Average) {
    ps.push_back(std::nullopt);
  } else {
    for (double p : c.ppt_bound.p_grid) ps.push_back(p);
  }
  const int n_tasks = n_grid * static_cast<int>(ps.size());
  std::vector<std::string> errs;
  auto out = parallel_map<ResultRow>(
      n_tasks, c.threads,
      [&](int t) {
        const int i = t / static_cast<int>(ps.size());
        const auto& p = ps[t % ps.size()];
        const auto t0 = Clock::now();
        const PptBound b = distill_ppt(distill_input(c, c.copies, c.noise.grid[i]), c.copies, p, c.sdp);
        ResultRow r;
        r.experiment = to_string(c.kind);
        r.scheme = "ppt";
        r.copies = c.copies;
        r.gamma = c.noise.grid[i];
        r.p_target = p;
        r.value = b.value;
        r.ppt_bound = b.value;
        r.status = to_string(b.solution.status);
        r.flags = "program=" + to_string(c.ppt_bound.program) + ";method=" + to_string(b.solution.method) +
                  ";noise=" + noise_label(c) + ";placement=" + to_string(c.noise.placement);
        r.wall_seconds = seconds_since(t0);
        return r;
      },
      errs);
  std::vector<ResultRow> bounds;
  for (int t = 0; t < n_tasks; ++t) {
    if (out[t]) {
      bounds.push_back(*out[t]);
      continue;
    }
    ResultRow r;
    r.experiment = to_string(c.kind);
    r.scheme = "ppt";
    r.copies = c.copies;
    r.gamma = c.noise.grid[t / ps.size()];
    r.p_target = ps[t % ps.size()];
    r.value = std::numeric_limits<double>::quiet_NaN();
    r.status = "error";
    bounds.push_back(r);
    res.failures.push_back("ppt gamma=" + fmt_double(*r.gamma) + ": " + errs[t]);
    log(res.failures.back());
  }
  res.rows = bounds;
  if (!c.ppt_bound.overlay.empty()) overlay_dominance(c, res, bounds);
}

void run_timing(const ExperimentConfig& c, ExperimentResult& res, const LogSink& log) {
  json summary = json::array();
  for (int m : c.timing.copies) {
    ExperimentConfig cm = c;
    cm.copies = m;
    const QState rho = distill_input(cm, m, c.timing.gamma);
    const LoccProtocol protocol = distill_cmps_protocol(c.parties, m, c.kraus_order);
    const Objective obj = distill_fid_objective(protocol, rho, c.parties, m);
    std::vector<double> t_cmps, t_ppt;
    for (int t = 0; t < c.timing.trials; ++t) {
      ResultRow base;
      base.experiment = to_string(c.kind);
      base.copies = m;
      base.gamma = c.timing.gamma;
      base.sample = t;
      ResultRow r = base;
      r.scheme = "cmps";
      r.flags = "T=" + std::to_string(c.kraus_order) + ";noise=" + noise_label(c);
      std::optional<ObjectiveValue> v;
      try {
        OptimOptions o = c.optimizer;
        o.seed = derive_seed(c.seed, {kStreamTiming, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(t)});
        const Candidate b = cold_start(negated_cost(obj), protocol.layout(), o);
        v = evaluate(obj, b.point);
        r.value = v->value;
        r.success_probability = v->success_probability;
        r.seed = b.seed;
        r.status = to_string(b.status);
        r.wall_seconds = b.seconds;
        t_cmps.push_back(b.seconds);
      } catch (const std::exception& e) {
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.status = "error";
        res.failures.push_back("timing cmps M=" + std::to_string(m) + " trial " + std::to_string(t) + ": " + e.what());
      }
      res.rows.push_back(r);
      log("timing M=" + std::to_string(m) + " trial " + std::to_string(t) + ": cmps " + fmt_double(r.wall_seconds) +
          " s");
      if (!v || v->failed || c.parties != 2) continue;

      ResultRow q = base;
      q.scheme = "ppt";
      q.p_target = v->success_probability;
      try {
        SdpOptions so = c.sdp;
        if (c.timing.sdp_cap_seconds > 0) so.max_seconds = c.timing.sdp_cap_seconds;
        const auto t0 = Clock::now();
        const PptBound b = distill_ppt(rho, m, v->success_probability, so);
        q.wall_seconds = seconds_since(t0);
        q.value = b.value;
        q.ppt_bound = b.value;
        q.dominance_margin = b.value - r.value;
        q.status = to_string(b.solution.status);
        q.flags = "program=fixed_p;method=" + to_string(b.solution.method) +
                  ";iterations=" + std::to_string(b.solution.iterations);
        t_ppt.push_back(q.wall_seconds);
      } catch (const std::exception& e) {
        q.value = std::numeric_limits<double>::quiet_NaN();
        q.status = "error";
        res.failures.push_back("timing ppt M=" + std::to_string(m) + " trial " + std::to_string(t) + ": " + e.what());
      }
      res.rows.push_back(q);
      log("timing M=" + std::to_string(m) + " trial " + std::to_string(t) + ": ppt " + fmt_double(q.wall_seconds) +
          " s (" + q.status + ")");
    }
    auto median = [](std::vector<double> v) {
      if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
      std::sort(v.begin(), v.end());
      return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    summary.push_back({{"copies", m}, {"cmps_median_seconds", median(t_cmps)}, {"ppt_median_seconds", median(t_ppt)}});
  }
  res.report["timing"] = summary;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const LogSink& log_sink) {
  config.validate();
  std::mutex log_mutex;
  const LogSink log = [&](const std::string& msg) {
    std::lock_guard<std::mutex> lock(log_mutex);
    if (log_sink) log_sink(msg);
    else std::cerr << "[loccforge] " << msg << '\n';
  };
  ExperimentResult res;
  switch (config.kind) {
    case ExperimentKind::DistillAvg:
    case ExperimentKind::DistillFid: run_distill(config, res, log); break;
    case ExperimentKind::CoherentInfo: run_coherent_info(config, res, log); break;
    case ExperimentKind::Merge: run_merge(config, res, log); break;
    case ExperimentKind::PptBound: run_ppt_bound(config, res, log); break;
    case ExperimentKind::Timing: run_timing(config, res, log); break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> csv_columns() {
  return {"experiment", "scheme", "copies", "gamma", "gamma_n", "sample", "cond_entropy", "p_target", "value",
          "success_probability", "ppt_bound", "dominance_margin", "seed", "status", "flags", "wall_seconds"};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::string opt(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "# loccforge-csv v" << kCsvSchemaVersion << " (loccforge " << kVersion << ")\n";
  const auto cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.experiment) << ',' << csv_field(r.scheme) << ',' << r.copies << ',' << opt(r.gamma) << ','
        << opt(r.gamma_n) << ',' << (r.sample ? std::to_string(*r.sample) : "") << ',' << opt(r.cond_entropy) << ','
        << opt(r.p_target) << ',' << fmt_double(r.value) << ',' << opt(r.success_probability) << ','
        << opt(r.ppt_bound) << ',' << opt(r.dominance_margin) << ',' << r.seed << ',' << csv_field(r.status) << ','
        << csv_field(r.flags) << ',' << fmt_double(r.wall_seconds) << '\n';
  }
}

std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# loccforge-csv v", 0) != 0)
    throw FormatError("not a loccforge CSV (missing version header)");
  const int version = std::atoi(line.c_str() + std::string("# loccforge-csv v").size());
  if (version != kCsvSchemaVersion) throw FormatError("unsupported CSV schema version " + std::to_string(version));
  if (!std::getline(in, line) || split_csv_line(line) != csv_columns()) throw FormatError("unexpected CSV columns");
  std::vector<ResultRow> rows;
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != csv_columns().size()) throw FormatError("CSV line " + std::to_string(line_no) + ": wrong field count");
    try {
      ResultRow r;
      r.experiment = f[0];
      r.scheme = f[1];
      r.copies = std::stoi(f[2]);
      r.gamma = parse_opt(f[3]);
      r.gamma_n = parse_opt(f[4]);
      if (!f[5].empty()) r.sample = std::stoi(f[5]);
      r.cond_entropy = parse_opt(f[6]);
      r.p_target = parse_opt(f[7]);
      r.value = std::stod(f[8]);
      r.success_probability = parse_opt(f[9]);
      r.ppt_bound = parse_opt(f[10]);
      r.dominance_margin = parse_opt(f[11]);
      r.seed = std::stoull(f[12]);
      r.status = f[13];
      r.flags = f[14];
      r.wall_seconds = std::stod(f[15]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output files

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

OutputFiles write_outputs(const ExperimentConfig& config, const std::string& config_text,
                          const ExperimentResult& result, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  OutputFiles files;
  files.csv = out_dir / (config.name + ".csv");
  {
    std::ofstream out(files.csv);
    if (!out) throw std::runtime_error("cannot write " + files.csv.string());
    write_csv(out, result.rows);
  }
  json protocol_files = json::array();
  for (const auto& p : result.protocols) {
    const fs::path path = out_dir / p.file;
    fs::create_directories(path.parent_path());
    save_protocol(path, p.protocol, p.point, p.metadata);
    files.protocols.push_back(path);
    protocol_files.push_back(p.file);
  }
  json manifest;
  manifest["format"] = "loccforge-manifest";
  manifest["software_version"] = kVersion;
  manifest["csv_schema_version"] = kCsvSchemaVersion;
  manifest["protocol_format_version"] = kProtocolFormatVersion;
  manifest["experiment"] = to_string(config.kind);
  manifest["config_sha256"] = sha256_hex(config_text);
  manifest["seed"] = config.seed;
  manifest["config"] = config_to_json(config);
  manifest["defaults_applied"] = config.defaulted;
  manifest["files"] = {{"csv", files.csv.filename().string()}, {"protocols", protocol_files}};
  manifest["rows"] = result.rows.size();
  manifest["failures"] = result.failures;
  manifest["report"] = result.report;
  files.manifest = out_dir / (config.name + "_manifest.json");
  std::ofstream out(files.manifest);
  if (!out) throw std::runtime_error("cannot write " + files.manifest.string());
  out << manifest.dump(2) << '\n';
  return files;
}

}  // namespace loccforge
