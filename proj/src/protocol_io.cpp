#include "loccforge/protocol_io.hpp"

#include <fstream>

namespace loccforge {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "loccforge-protocol";

std::string kind_name(Step::Kind k) {
  switch (k) {
    case Step::Kind::Instrument: return "instrument";
    case Step::Kind::Channel: return "channel";
    case Step::Kind::Measurement: return "measurement";
  }
  return "unknown";
}

json spec_to_json(const InstrumentSpec& s) {
  return {{"outcomes", s.outcomes}, {"kraus_order", s.kraus_order}, {"dim_in", s.dim_in}, {"dim_out", s.dim_out}};
}

InstrumentSpec spec_from_json(const json& j) {
  InstrumentSpec s;
  s.outcomes = j.at("outcomes").get<int>();
  s.kraus_order = j.at("kraus_order").get<int>();
  s.dim_in = j.at("dim_in").get<int>();
  s.dim_out = j.at("dim_out").get<int>();
  return s;
}

json kraus_to_json(const KrausSet& k) {
  json out = json::array();
  for (const auto& op : k.ops) out.push_back(matrix_to_json(op));
  return out;
}

KrausSet kraus_from_json(const json& j) {
  KrausSet k;
  for (const auto& m : j) k.ops.push_back(matrix_from_json(m));
  return k;
}

LoccProtocol build_protocol(const json& doc) {
  const Scheme scheme = scheme_from_string(doc.at("scheme").get<std::string>());
  const int reference_dim = doc.at("reference_dim").get<int>();
  if (scheme == Scheme::General) {
    std::vector<RoundSpec> rounds;
    for (const auto& r : doc.at("rounds")) {
      RoundSpec rs;
      rs.leader = r.at("leader").get<int>();
      rs.outcomes = r.at("outcomes").get<int>();
      rs.kraus_order = r.at("kraus_order").get<int>();
      rs.follower_kraus_order = r.at("follower_kraus_order").get<int>();
      rounds.push_back(rs);
    }
    return LoccProtocol::general(doc.at("agent_dims").get<std::vector<int>>(), rounds,
                                 doc.at("identity_followers").get<bool>(), reference_dim);
  }
  std::vector<InstrumentSpec> agents;
  for (const auto& a : doc.at("agents")) agents.push_back(spec_from_json(a));
  if (scheme == Scheme::Ips) return LoccProtocol::ips(agents, reference_dim);
  std::vector<std::vector<KrausSet>> measurements;
  for (const auto& agent : doc.at("measurements")) {
    std::vector<KrausSet> outcomes;
    for (const auto& k : agent) outcomes.push_back(kraus_from_json(k));
    measurements.push_back(std::move(outcomes));
  }
  return LoccProtocol::cmps(agents, measurements, reference_dim);
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json rr = json::array(), ir = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ir.push_back(m(r, c).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ir));
  }
  return {{"re", std::move(re)}, {"im", std::move(im)}};
}

Matrix matrix_from_json(const json& j) {
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (!re.is_array() || !im.is_array() || re.size() != im.size()) throw FormatError("matrix: re/im shape mismatch");
  const auto rows = static_cast<Eigen::Index>(re.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(re[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (re[r].size() != static_cast<std::size_t>(cols) || im[r].size() != static_cast<std::size_t>(cols))
      throw FormatError("matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = Complex(re[r][c].get<double>(), im[r][c].get<double>());
  }
  return m;
}

json protocol_to_json(const LoccProtocol& protocol, const ProductPoint& point, const json& metadata) {
  check_layout(protocol, point);
  json doc;
  doc["format"] = kFormatName;
  doc["version"] = kProtocolFormatVersion;
  doc["scheme"] = to_string(protocol.scheme());
  doc["reference_dim"] = protocol.reference_dim();
  if (protocol.scheme() == Scheme::General) {
    doc["agent_dims"] = protocol.agent_dims_in();
    doc["identity_followers"] = protocol.identity_followers();
    json rounds = json::array();
    for (const auto& r : protocol.rounds())
      rounds.push_back({{"leader", r.leader},
                        {"outcomes", r.outcomes},
                        {"kraus_order", r.kraus_order},
                        {"follower_kraus_order", r.follower_kraus_order}});
    doc["rounds"] = std::move(rounds);
  } else {
    json agents = json::array();
    for (const auto& s : protocol.agent_specs()) agents.push_back(spec_to_json(s));
    doc["agents"] = std::move(agents);
  }
  if (protocol.scheme() == Scheme::Cmps) {
    json ms = json::array();
    for (const auto& agent : protocol.measurements()) {
      json outcomes = json::array();
      for (const auto& k : agent) outcomes.push_back(kraus_to_json(k));
      ms.push_back(std::move(outcomes));
    }
    doc["measurements"] = std::move(ms);
  }
  json layout = json::array();
  for (const auto& shape : protocol.layout()) layout.push_back({shape.rows, shape.cols});
  doc["layout"] = std::move(layout);

  json parts = json::array();
  for (std::size_t i = 0; i < point.size(); ++i) {
    const PartInfo& info = protocol.part_info()[i];
    const Instrument inst = instrument_from_point(point[i], info.spec);
    json branches = json::array();
    for (const auto& b : inst.branches) branches.push_back(kraus_to_json(b));
    parts.push_back({{"role", info.role},
                     {"kind", kind_name(info.kind)},
                     {"agent", info.agent},
                     {"spec", spec_to_json(info.spec)},
                     {"kraus", std::move(branches)}});
  }
  doc["parts"] = std::move(parts);
  doc["metadata"] = metadata;
  return doc;
}

ProtocolDocument protocol_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormatName) throw FormatError("not a protocol document");
    const int version = doc.at("version").get<int>();
    if (version != kProtocolFormatVersion)
      throw FormatError("unsupported protocol document version " + std::to_string(version));
    LoccProtocol protocol = build_protocol(doc);

    const auto& layout = doc.at("layout");
    if (layout.size() != protocol.layout().size()) throw FormatError("layout does not match the protocol");
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (layout[i].at(0).get<int>() != protocol.layout()[i].rows ||
          layout[i].at(1).get<int>() != protocol.layout()[i].cols)
        throw FormatError("layout entry " + std::to_string(i) + " does not match the protocol");

    const auto& parts = doc.at("parts");
    if (parts.size() != protocol.layout().size()) throw FormatError("part count does not match the layout");
    std::vector<StiefelPoint> parts_out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const InstrumentSpec spec = spec_from_json(parts[i].at("spec"));
      if (!(spec == protocol.part_info()[i].spec)) throw FormatError("part " + std::to_string(i) + ": spec mismatch");
      Instrument inst;
      for (const auto& b : parts[i].at("kraus")) inst.branches.push_back(kraus_from_json(b));
      parts_out.push_back(point_from_instrument(inst, spec));
    }
    ProductPoint point(std::move(parts_out));
    json metadata = doc.contains("metadata") ? doc.at("metadata") : json::object();
    return ProtocolDocument{std::move(protocol), std::move(point), std::move(metadata)};
  } catch (const json::exception& e) {
    throw FormatError(std::string("protocol document: ") + e.what());
  }
}

void save_protocol(const std::filesystem::path& path, const LoccProtocol& protocol, const ProductPoint& point,
                   const json& metadata) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << protocol_to_json(protocol, point, metadata).dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ProtocolDocument load_protocol(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return protocol_from_json(doc);
}

}  // namespace loccforge
