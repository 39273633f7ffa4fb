// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "loccforge/experiments.hpp"
#include "loccforge/ppt_bounds.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "rains_oracle.hpp"
#include "test_util.hpp"

using namespace loccforge;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::filesystem::path kOut = "acceptance_out";

// Dominance margins (bound - value) collected from criteria 4-8.
std::vector<std::pair<std::string, double>> g_margins;

void record_margins(const std::string& tag, const ExperimentResult& r) {
  for (const auto& row : r.rows)
    if (row.dominance_margin) g_margins.emplace_back(tag + "/" + row.scheme, *row.dominance_margin);
}

ExperimentResult run_and_save(const std::string& yaml) {
  const ExperimentConfig c = parse_config(yaml);
  ExperimentResult r = run_experiment(c, [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); });
  write_outputs(c, yaml, r, kOut);
  return r;
}

std::map<std::string, std::vector<ResultRow>> by_scheme(const ExperimentResult& r) {
  std::map<std::string, std::vector<ResultRow>> out;
  for (const auto& row : r.rows) out[row.scheme].push_back(row);
  return out;
}

// ---------------------------------------------------------------------------

Verdict manifold_properties() {
  double member = 0, tangency = 0, idem = 0, slope = 0;
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 1000; ++k) {
    const int p = 1 + static_cast<int>(rng() % 4);
    const int n = p + static_cast<int>(rng() % 6);
    const StiefelPoint x = random_point(n, p, 10 * k + 1);
    const Matrix v = testing_util::random_complex(n, p, 10 * k + 2);
    const TangentVector u = project_tangent(x, v);
    const double t = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    member = std::max({member, x.orthonormality_error(), qr_retract(x, u, t).orthonormality_error()});
    tangency = std::max(tangency, tangency_error(x, u.z));
    idem = std::max(idem, max_abs(project_tangent(x, u.z).z - u.z));
    const double h = 1e-6;
    const Matrix fd = (qr_retract(x, u, h).matrix() - x.matrix()) / h;
    slope = std::max(slope, (fd - u.z).norm() / u.z.norm());
  }
  Verdict v;
  v.pass = member <= 1e-10 && tangency <= 1e-10 && idem <= 1e-12 && slope <= 1e-5;
  v.detail = "1000 instances; membership " + fmt("%.1e", member) + ", tangency " + fmt("%.1e", tangency) +
             ", idempotence " + fmt("%.1e", idem) + ", retraction slope rel. err " + fmt("%.1e", slope);
  return v;
}

Verdict gradient_suite() {
  const QState rho = noisy_bell_input(2, {make_noise(NoiseKind::AmplitudeDamping, {0.3}, 4),
                                          make_noise(NoiseKind::Depolarizing, {0.3}, 4)});
  const QState rho1 = noisy_bell_input(1, {make_noise(NoiseKind::Depolarizing, {0.2}, 4)});
  const QState choi = gadc_choi_state(0.3, 0.05);
  const PureState psi = haar_random_pure(Dims{2, 2, 2}, 77);
  ExperimentConfig c;
  std::vector<std::pair<std::string, Objective>> cases;
  for (const std::string s : {"ips", "locc1", "locc2", "cmps"}) {
    const LoccProtocol p = make_distill_protocol(s, c);
    cases.push_back({"avg/" + s, avg_distill_objective(p, rho, 2, 2)});
    cases.push_back({"fid/" + s, distill_fid_objective(p, rho, 2, 2)});
  }
  cases.push_back({"avg/locc2 M=1", avg_distill_objective(distill_general_protocol(2, 1, {{0, 2, 1, 2}, {1, 2, 1, 2}}),
                                                          rho1, 2, 1)});
  cases.push_back({"coh n=1", coherent_info_objective(coherent_info_protocol(1, 2), choi, 1)});
  cases.push_back({"coh n=2", coherent_info_objective(coherent_info_protocol(2, 2), copies_agent_major({choi, choi}, 2), 2)});
  cases.push_back({"merge", merge_objective(merge_protocol(1, 1, 2), psi, 1, 1, false)});
  cases.push_back({"merge k2", merge_objective(merge_protocol(2, 1, 2, 2, 4), psi, 2, 1, false)});
  cases.push_back({"avg merge", merge_objective(merge_protocol(1, 1, 2), psi, 1, 1, true)});

  double worst = 0;
  std::string worst_case;
  int checks = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Objective& obj = cases[i].second;
    auto f = [&](const ProductPoint& p) { return evaluate(obj, p).value; };
    for (std::uint64_t s = 0; s < 3; ++s) {
      const ProductPoint x = random_product_point(obj.protocol.layout(), 1000 * i + s);
      const ValueAndGradient vg = value_and_gradient(obj, x);
      for (std::uint64_t d = 0; d < 3; ++d) {
        const ProductTangent z = testing_util::random_tangent(x, 7919 * i + 31 * s + d);
        const double e = testing_util::fd_relative_error(f, x, vg.gradient, z, 1e-6);
        ++checks;
        if (e > worst) {
          worst = e;
          worst_case = cases[i].first;
        }
      }
    }
  }
  return {worst <= 1e-5, std::to_string(cases.size()) + " objective/layout cases, " + std::to_string(checks) +
                             " directions; worst rel. err " + fmt("%.2e", worst) + " (" + worst_case + ")"};
}

Verdict noiseless_sanity() {
  const QState rho = noisy_bell_input(2, {make_noise(NoiseKind::Depolarizing, {0.0}, 4),
                                          make_noise(NoiseKind::Depolarizing, {0.0}, 4)});
  ExperimentConfig c;
  const LoccProtocol p = make_distill_protocol("locc2", c);
  OptimOptions o;
  o.restarts = 10;
  o.seed = 3;
  const MultiRestartResult r = multi_restart(negated_cost(avg_distill_objective(p, rho, 2, 2)), p.layout(), o);
  const double best = -r.best.value;
  return {best >= 1 - 1e-6, "LOCC2 best of 10 restarts " + fmt("%.10f", best)};
}

Verdict fig4a() {
  const ExperimentResult r = run_and_save(R"(
experiment: distill-avg
name: c4_noniid
schemes: [ips, locc1, locc2]
noise: {kinds: [amplitude_damping, depolarizing], grid: {start: 0, stop: 1, points: 11}}
ppt: true
optimizer: {restarts: 10, max_iters: 3000}
)");
  record_margins("c4", r);
  auto s = by_scheme(r);
  const auto &ips = s["ips"], &l1 = s["locc1"], &l2 = s["locc2"];
  if (ips.size() != 11 || l1.size() != 11 || l2.size() != 11 || !r.failures.empty())
    return {false, "incomplete sweep (" + std::to_string(r.failures.size()) + " failures)"};
  double worst_ppt = 0, worst_chain = 0, best_gap = -1, gap_at = 0;
  for (int i = 0; i < 11; ++i) {
    worst_ppt = std::max(worst_ppt, std::abs(l2[i].value - l2[i].ppt_bound.value_or(NAN)));
    if (std::isnan(l2[i].ppt_bound.value_or(NAN))) worst_ppt = INFINITY;
    worst_chain = std::max({worst_chain, l1[i].value - l2[i].value, ips[i].value - l1[i].value});
    if (i > 0 && i < 10 && l2[i].value - l1[i].value > best_gap) {
      best_gap = l2[i].value - l1[i].value;
      gap_at = *l2[i].gamma;
    }
  }
  return {worst_ppt <= 1e-3 && worst_chain <= 1e-4 && best_gap > 1e-3,
          "max |LOCC2 - PPT| " + fmt("%.2e", worst_ppt) + ", worst chain violation " + fmt("%.2e", worst_chain) +
              ", largest LOCC2 - LOCC1 gap " + fmt("%.4f", best_gap) + " at gamma " + fmt("%.1f", gap_at)};
}

Verdict fig4c() {
  double worst = 0;
  std::string where;
  for (const std::string kind : {"depolarizing", "dephasing"}) {
    const ExperimentResult r = run_and_save(R"(
experiment: distill-avg
name: c5_)" + kind + R"(
schemes: [ips, locc2]
noise: {kinds: [)" + kind + R"(], grid: {start: 0, stop: 1, points: 11}}
ppt: true
optimizer: {restarts: 10, max_iters: 3000}
)");
    record_margins("c5", r);
    if (!r.failures.empty()) return {false, kind + ": " + r.failures.front()};
    for (const auto& row : r.rows) {
      const double g = *row.gamma;
      // prepare-|00> gives 1/2, so the depolarized baseline saturates there
      const double base = kind == "depolarizing" ? std::max(1 - 0.75 * g, 0.5) : 1 - 0.5 * g;
      for (double v : {row.value, row.ppt_bound.value_or(NAN)}) {
        const double e = std::isnan(v) ? INFINITY : std::abs(v - base);
        if (e > worst) {
          worst = e;
          where = kind + "/" + row.scheme + " gamma " + fmt("%.1f", g);
        }
      }
    }
  }
  return {worst <= 1e-3, "LOCC2, IPS and PPT vs single-copy baseline, max deviation " + fmt("%.2e", worst) +
                             (where.empty() ? "" : " (" + where + ")")};
}

Verdict fig5c() {
  const ExperimentResult r = run_and_save(R"(
experiment: distill-fid
name: c6_cmps
schemes: [cmps]
kraus_order: 2
noise: {kinds: [amplitude_damping, depolarizing], grid: {start: 0, stop: 0.9, points: 10}}
ppt: true
optimizer: {restarts: 5, max_iters: 3000}
)");
  record_margins("c6", r);
  if (r.rows.size() != 10 || !r.failures.empty()) return {false, "incomplete sweep"};
  double worst = 1, min_p = 1;
  for (const auto& row : r.rows) {
    worst = std::min(worst, row.value);
    min_p = std::min(min_p, row.success_probability.value_or(0.0));
  }
  return {worst >= 0.99 && min_p > 0, "gamma in [0, 0.9]: min fidelity " + fmt("%.6f", worst) +
                                          ", min success probability " + fmt("%.3g", min_p)};
}

Verdict fig7() {
  const ExperimentResult r = run_and_save(R"(
experiment: coherent-info
name: c7_gadc
copies: 2
outcomes: 2
noise: {kinds: [gadc], gamma_n: 0.05, grid: {start: 0, stop: 1, points: 11}}
optimizer: {restarts: 5, max_iters: 3000}
)");
  if (!r.failures.empty()) return {false, r.failures.front()};
  double best_gap = -INFINITY, worst = INFINITY, at = 0, hash_at = 0;
  double best_gap_positive = -INFINITY;
  for (std::size_t i = 0; i + 1 < r.rows.size(); i += 2) {
    const double h = r.rows[i].value, n2 = r.rows[i + 1].value, gap = n2 - h;
    worst = std::min(worst, gap);
    if (gap > best_gap) {
      best_gap = gap;
      at = *r.rows[i].gamma;
      hash_at = h;
    }
    if (h > 0) best_gap_positive = std::max(best_gap_positive, gap);
  }
  return {best_gap > 1e-3 && worst >= -1e-6,
          "gamma_n 0.05: max gain over hashing " + fmt("%.4f", best_gap) + " at gamma_a " + fmt("%.1f", at) +
              " (hashing there " + fmt("%.4f", hash_at) + "), max gain where hashing > 0 " +
              fmt("%.1e", best_gap_positive) + ", min gain " + fmt("%.1e", worst)};
}

Verdict fig9() {
  auto merge_run = [](int k, int m, bool average, int restarts) {
    char buf[512];
    std::snprintf(buf, sizeof buf, R"(
experiment: merge
name: c8_k%d_m%d%s
merge: {k: %d, m: %d, samples: 200, outcomes: 2, average: %s, ppt: %s}
optimizer: {restarts: %d, max_iters: 2000}
export_protocols: false
)",
                  k, m, average ? "_avg" : "", k, m, average ? "true" : "false", average ? "true" : "false", restarts);
    return run_and_save(buf);
  };
  const ExperimentResult a = merge_run(2, 1, false, 3);
  const ExperimentResult b11 = merge_run(1, 1, false, 3);
  const ExperimentResult b22 = merge_run(2, 2, false, 3);
  const ExperimentResult c = merge_run(1, 1, true, 5);
  record_margins("c8", c);
  const bool complete = a.rows.size() == 200 && b11.rows.size() == 200 && b22.rows.size() == 200 &&
                        c.rows.size() == 200 && a.failures.empty() && b11.failures.empty() && b22.failures.empty() &&
                        c.failures.empty();
  if (!complete) return {false, "incomplete sample sets"};
  double min_a = 1, max_diff = 0, min_margin = INFINITY, mean_gap = 0;
  for (int i = 0; i < 200; ++i) {
    min_a = std::min(min_a, a.rows[i].value);
    max_diff = std::max(max_diff, std::abs(b11.rows[i].value - b22.rows[i].value));
    const double m = c.rows[i].dominance_margin.value_or(-INFINITY);
    min_margin = std::min(min_margin, m);
    mean_gap += m / 200;
  }
  return {min_a >= 0.99 && max_diff <= 1e-3 && min_margin >= -1e-4,
          "(a) min k2m1 fidelity " + fmt("%.6f", min_a) + "; (b) max |k1m1 - k2m2| " + fmt("%.1e", max_diff) +
              "; (c) min PPT - IPS avg " + fmt("%.1e", min_margin) + ", mean gap " + fmt("%.4f", mean_gap)};
}

Verdict dominance() {
  if (g_margins.empty()) return {false, "no bounded instances were run"};
  int violations = 0;
  double worst = INFINITY;
  std::string where;
  for (const auto& [tag, m] : g_margins) {
    if (m < -1e-4) ++violations;
    if (m < worst) {
      worst = m;
      where = tag;
    }
  }
  return {violations == 0, std::to_string(g_margins.size()) + " instances, " + std::to_string(violations) +
                               " violations, smallest margin " + fmt("%.2e", worst) + " (" + where + ")"};
}

Verdict appendix_b() {
  int agree = 0, feasible = 0;
  double worst = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const Matrix g0 = testing_util::random_psd(4, 9000 + seed);
    const Matrix g = g0 / Eigen::SelfAdjointEigenSolver<Matrix>(g0).eigenvalues()(3);
    const double t = 0.02 + 0.02 * (seed % 5);
    const double c = (seed % 3 == 0) ? 0.3 : 0.0;
    const Matrix f = 0.25 * Matrix::Identity(4, 4) + t * partial_transpose(g - c * Matrix::Identity(4, 4), {2, 2}, {0});
    const Matrix e = Matrix::Identity(4, 4) - 3.0 * f;
    const double simple = testing_util::simplified_constraint_margin(e, f, {2, 2}, 2);
    const double choi = testing_util::choi_constraint_margin(e, f, {2, 2}, 2);
    worst = std::max(worst, std::abs(simple - choi));
    if ((simple >= -1e-8) == (choi >= -1e-8)) ++agree;
    if (simple >= -1e-8) ++feasible;
  }
  return {agree == 100 && worst <= 1e-8 && feasible > 0 && feasible < 100, std::to_string(agree) + "/100 agree (" + std::to_string(feasible) +
                                             " feasible, " + std::to_string(100 - feasible) + " infeasible), max margin difference " + fmt("%.1e", worst)};
}

Verdict timing() {
  const ExperimentResult r = run_and_save(R"(
experiment: timing
name: c11_timing
kraus_order: 1
noise: {kinds: [depolarizing]}
timing: {copies: [2, 3], trials: 1, gamma: 0.3, sdp_cap_seconds: 1800}
)");
  double cmps3 = NAN, ppt3 = NAN, cmps2 = NAN, ppt2 = NAN;
  std::string status3;
  for (const auto& row : r.rows) {
    if (row.copies == 3 && row.scheme == "cmps") cmps3 = row.wall_seconds;
    if (row.copies == 3 && row.scheme == "ppt") {
      ppt3 = row.wall_seconds;
      status3 = row.status;
    }
    if (row.copies == 2 && row.scheme == "cmps") cmps2 = row.wall_seconds;
    if (row.copies == 2 && row.scheme == "ppt") ppt2 = row.wall_seconds;
  }
  const bool capped = status3 == "time_limit";
  const bool pass = !std::isnan(cmps3) && !std::isnan(ppt3) && (capped || ppt3 >= 5 * cmps3);
  return {pass, "M=2: CMPS " + fmt("%.2f", cmps2) + " s, SDP " + fmt("%.2f", ppt2) + " s; M=3: CMPS " +
                    fmt("%.2f", cmps3) + " s, SDP " + fmt("%.1f", ppt3) + " s (" + status3 + "), ratio " +
                    fmt("%.1f", ppt3 / cmps3)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  std::filesystem::create_directories(kOut);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"manifold properties", manifold_properties},
      {"gradient suite", gradient_suite},
      {"noiseless sanity", noiseless_sanity},
      {"non-iid average fidelity vs PPT", fig4a},
      {"iid null result", fig4c},
      {"CMPS T=2 conditional fidelity", fig5c},
      {"coherent information vs hashing", fig7},
      {"state merging, 200 samples", fig9},
      {"relaxation dominance", dominance},
      {"simplified PPT constraints", appendix_b},
      {"timing order", timing},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failed;
    std::printf("criterion %2d %-34s %s  %s  [%.1f s]\n", n, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
