#include "loccforge/objectives.hpp"
#include "loccforge/protocol_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"

using namespace loccforge;
using nlohmann::json;

namespace {

void expect_same_point(const ProductPoint& a, const ProductPoint& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].matrix(), b[i].matrix()) << "part " << i;
}

QState noisy_pair(double g) {
  return noisy_bell_input(2, {make_noise(NoiseKind::AmplitudeDamping, {g}, 4), make_noise(NoiseKind::Depolarizing, {g}, 4)});
}

}  // namespace

TEST(MatrixJson, RoundTripIsExact) {
  Matrix m = testing_util::random_complex(3, 4, 11);
  m(0, 0) = Complex(1.0 / 3.0, -2.0 / 7.0);
  m(1, 2) = Complex(1e-300, 5e-17);
  const Matrix back = matrix_from_json(json::parse(matrix_to_json(m).dump()));
  EXPECT_EQ(back, m);
}

TEST(MatrixJson, RejectsRaggedRows) {
  json j = {{"re", {{1.0, 2.0}, {3.0}}}, {"im", {{0.0, 0.0}, {0.0}}}};
  EXPECT_THROW(matrix_from_json(j), FormatError);
}

TEST(ProtocolJson, RoundTripEverySchemeAndReEvaluate) {
  const QState rho = noisy_pair(0.3);
  struct Case {
    std::string name;
    Objective obj;
  };
  std::vector<Case> cases;
  cases.push_back({"ips", avg_distill_objective(distill_ips_protocol(2, 2, 2, 1), rho, 2, 2)});
  cases.push_back({"locc2", avg_distill_objective(
                                distill_general_protocol(2, 2, {{0, 2, 1, 2}, {1, 2, 1, 2}}), rho, 2, 2)});
  cases.push_back({"cmps", distill_fid_objective(distill_cmps_protocol(2, 2, 2), rho, 2, 2)});
  cases.push_back({"merge", merge_objective(merge_protocol(2, 1, 2), haar_random_pure(Dims{2, 2, 2}, 4), 2, 1,
                                            false)});
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    const ProductPoint x = random_product_point(c.obj.protocol.layout(), 17);
    const double before = evaluate(c.obj, x).value;
    const json doc = json::parse(protocol_to_json(c.obj.protocol, x, {{"value", before}}).dump());
    EXPECT_EQ(doc.at("version").get<int>(), kProtocolFormatVersion);
    EXPECT_EQ(doc.at("scheme").get<std::string>(), to_string(c.obj.protocol.scheme()));
    const ProtocolDocument back = protocol_from_json(doc);
    EXPECT_EQ(back.protocol.layout(), c.obj.protocol.layout());
    expect_same_point(back.point, x);
    Objective again = c.obj;
    again.protocol = back.protocol;
    EXPECT_NEAR(evaluate(again, back.point).value, back.metadata.at("value").get<double>(), 1e-9);
  }
}

TEST(ProtocolJson, PartsListKrausPerOutcome) {
  const LoccProtocol p = distill_ips_protocol(2, 2, 2, 1);
  const json doc = protocol_to_json(p, random_product_point(p.layout(), 3));
  ASSERT_EQ(doc.at("parts").size(), 2u);
  const json& part = doc.at("parts")[0];
  EXPECT_EQ(part.at("kind").get<std::string>(), "instrument");
  EXPECT_EQ(part.at("kraus").size(), 2u);      // outcomes
  EXPECT_EQ(part.at("kraus")[0].size(), 1u);   // Kraus order
  EXPECT_EQ(part.at("kraus")[0][0].at("re").size(), 4u);
}

TEST(ProtocolJson, FileRoundTrip) {
  const LoccProtocol p = distill_general_protocol(2, 2, {{0, 2, 1, 1}});
  const ProductPoint x = random_product_point(p.layout(), 8);
  const auto path = std::filesystem::temp_directory_path() / "loccforge_protocol_io_test.json";
  save_protocol(path, p, x, {{"note", "file"}});
  const ProtocolDocument back = load_protocol(path);
  expect_same_point(back.point, x);
  EXPECT_EQ(back.metadata.at("note").get<std::string>(), "file");
  std::filesystem::remove(path);
  EXPECT_THROW(load_protocol(path), std::runtime_error);
}

TEST(ProtocolJson, RejectsBadDocuments) {
  const LoccProtocol p = distill_ips_protocol(2, 1, 2, 1);
  const ProductPoint x = random_product_point(p.layout(), 1);
  const json good = protocol_to_json(p, x);

  json v = good;
  v["version"] = kProtocolFormatVersion + 1;
  EXPECT_THROW(protocol_from_json(v), FormatError);

  json f = good;
  f["format"] = "something-else";
  EXPECT_THROW(protocol_from_json(f), FormatError);

  json missing = good;
  missing.erase("parts");
  EXPECT_THROW(protocol_from_json(missing), FormatError);

  json layout = good;
  layout["layout"][0][0] = 99;
  EXPECT_THROW(protocol_from_json(layout), FormatError);

  // a Kraus entry edited so the instrument is no longer trace preserving
  json tampered = good;
  tampered["parts"][0]["kraus"][0][0]["re"][0][0] = 5.0;
  EXPECT_THROW(protocol_from_json(tampered), InvariantError);

  EXPECT_THROW(protocol_to_json(p, random_product_point({{3, 3}}, 1)), DimensionError);
}
