#pragma once

#include "loccforge/protocol.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace loccforge {

inline constexpr int kProtocolFormatVersion = 1;

/// Raised on a malformed or incompatible protocol document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProtocolDocument {
  LoccProtocol protocol;
  ProductPoint point;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Versioned document: scheme tag, construction parameters, layout, and per
/// part the Kraus operators (outcome-major) as {"re", "im"} row arrays.
/// Doubles are written in shortest round-trip form, so re-import is exact.
nlohmann::json protocol_to_json(const LoccProtocol& protocol, const ProductPoint& point,
                                const nlohmann::json& metadata = nlohmann::json::object());

/// Rebuilds the protocol and point; throws FormatError on a bad document and
/// the protocol's own errors on inconsistent parameters.
ProtocolDocument protocol_from_json(const nlohmann::json& doc);

void save_protocol(const std::filesystem::path& path, const LoccProtocol& protocol, const ProductPoint& point,
                   const nlohmann::json& metadata = nlohmann::json::object());
ProtocolDocument load_protocol(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace loccforge
