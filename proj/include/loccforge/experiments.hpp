#pragma once

#include "loccforge/noise.hpp"
#include "loccforge/objectives.hpp"
#include "loccforge/optimizer.hpp"
#include "loccforge/protocol.hpp"
#include "loccforge/sdp.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace loccforge {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

/// Invalid experiment configuration; `field()` is the dotted key path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class ExperimentKind { DistillAvg, DistillFid, CoherentInfo, Merge, PptBound, Timing };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct NoiseConfig {
  std::vector<NoiseKind> kinds{NoiseKind::Depolarizing};  // one per copy, or one for all
  NoiseLocus placement = NoiseLocus::JointCopy;
  std::vector<double> grid;  // gamma values (gamma_a for GADC)
  double gamma_n = 0.05;     // GADC only
};

struct MergeConfig {
  int k = 1;
  int m = 1;
  int samples = 200;
  int outcomes = 2;
  bool average = false;
  int alice_kraus = 0;  // 0: full order
  int bob_kraus = 0;
  bool ppt = false;  // PPT bound column, k = m = 1 and average only
};

enum class PptProgram { Average, FixedP };

struct PptBoundConfig {
  PptProgram program = PptProgram::Average;
  std::vector<double> p_grid;
  std::string overlay;  // optional results CSV checked against the bounds
};

struct TimingConfig {
  std::vector<int> copies{2, 3};
  int trials = 10;
  double gamma = 0.3;
  double sdp_cap_seconds = 1800.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::DistillAvg;
  std::string name;  // output file stem, defaults to the kind
  std::vector<std::string> schemes;  // ips, cmps, locc1, locc2, ...
  int parties = 2;
  int copies = 2;
  int outcomes = 2;
  int kraus_order = 1;
  int follower_kraus_order = 2;
  NoiseConfig noise;
  bool ppt = false;  // attach the PPT bound to distillation rows
  bool continuation = true;
  MergeConfig merge;
  PptBoundConfig ppt_bound;
  TimingConfig timing;
  OptimOptions optimizer;
  SdpOptions sdp;
  bool export_protocols = true;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Keys that were absent from the document and took their default.
  std::vector<std::string> defaulted;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses a YAML document. Unknown keys are rejected; omitted keys take the
/// per-experiment defaults (see defaults_json).
/// `kind`, when given, must agree with the document's `experiment` key and
/// stands in for it when absent.
ExperimentConfig parse_config(const std::string& yaml_text, std::optional<ExperimentKind> kind = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind = std::nullopt,
                             std::string* text = nullptr);

/// Effective configuration, defaults filled in.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// n evenly spaced values from start to stop inclusive.
std::vector<double> linspace(double start, double stop, int n);

/// Deterministic 64-bit seed for a (master, stream, index...) tuple.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// ---------------------------------------------------------------------------
// Protocol construction and embeddings

/// Rank in the inclusion chain IPS (0) < LOCC_1 < LOCC_2 < ...; -1 for CMPS.
int scheme_rank(const std::string& scheme);

/// Distillation protocol for a scheme name of the config.
LoccProtocol make_distill_protocol(const std::string& scheme, const ExperimentConfig& config);

/// Every part [I; 0]: the identity instrument that always reports outcome 0.
ProductPoint identity_point(const Layout& layout);

/// Maps a point of `from` to a point of `to` that implements the same
/// outcome-averaged map, when `to` contains `from`:
///  - general r rounds -> general r' >= r rounds with the same first r rounds
///    (the added parts are identity),
///  - IPS -> general with agent 0 leading round 1; the other agents'
///    instruments become outcome-blind follower channels, which needs
///    S T <= the follower Kraus order.
/// Returns nullopt when no embedding applies.
std::optional<ProductPoint> lift_point(const LoccProtocol& from, const ProductPoint& point, const LoccProtocol& to);

// ---------------------------------------------------------------------------
// Running

/// One CSV row. Optional fields are written empty when absent.
struct ResultRow {
  std::string experiment;
  std::string scheme;
  int copies = 0;
  std::optional<double> gamma;
  std::optional<double> gamma_n;
  std::optional<int> sample;
  std::optional<double> cond_entropy;
  std::optional<double> p_target;
  double value = 0.0;
  std::optional<double> success_probability;
  std::optional<double> ppt_bound;
  std::optional<double> dominance_margin;  // bound - value
  std::uint64_t seed = 0;
  std::string status;
  std::string flags;
  double wall_seconds = 0.0;
};

struct ExportedProtocol {
  std::string file;  // relative to the output directory
  LoccProtocol protocol;
  ProductPoint point;
  nlohmann::json metadata;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<ExportedProtocol> protocols;
  std::vector<std::string> failures;
  nlohmann::json report = nlohmann::json::object();
};

/// Progress and per-point failures; defaults to stderr.
using LogSink = std::function<void(const std::string&)>;

ExperimentResult run_experiment(const ExperimentConfig& config, const LogSink& log = {});

std::vector<std::string> csv_columns();
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
/// Reads rows written by write_csv (schema version checked).
std::vector<ResultRow> read_csv(std::istream& in);

struct OutputFiles {
  std::filesystem::path csv;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> protocols;
};

/// Writes <name>.csv, protocols/<name>_*.json and <name>_manifest.json.
/// `config_text` is the raw document that was hashed.
OutputFiles write_outputs(const ExperimentConfig& config, const std::string& config_text,
                          const ExperimentResult& result, const std::filesystem::path& out_dir);

std::string sha256_hex(const std::string& data);

}  // namespace loccforge
