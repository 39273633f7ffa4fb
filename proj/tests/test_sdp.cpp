#include "loccforge/noise.hpp"
#include "loccforge/ppt_bounds.hpp"
#include "loccforge/sdp.hpp"
#include "loccforge/stiefel.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "rains_oracle.hpp"
#include "test_util.hpp"

using namespace loccforge;
using testing_util::min_eig;

namespace {

SdpOptions with_method(SdpMethod m) {
  SdpOptions o;
  o.method = m;
  return o;
}

const SdpMethod kMethods[] = {SdpMethod::InteriorPoint, SdpMethod::Admm};

QState noisy_pair(double g) {
  return noisy_bell_input(2, {make_noise(NoiseKind::AmplitudeDamping, {g}, 4), make_noise(NoiseKind::Depolarizing, {g}, 4)});
}

PureState three_qubit(const std::vector<std::pair<int, Complex>>& terms) {
  Vector v = Vector::Zero(8);
  for (const auto& [idx, amp] : terms) v(idx) = amp;
  return PureState(v / v.norm(), {2, 2, 2});
}

// Merging fidelity of a channel AB -> B'B'' given by Kraus operators, computed
// from the output state directly.
double merging_fidelity_direct(const PureState& psi, const std::vector<Matrix>& kraus) {
  const Matrix rho = psi.projector();
  Matrix out = Matrix::Zero(8, 8);
  for (const auto& k : kraus) {
    const Matrix kk = tensor(Matrix::Identity(2, 2), k);
    out += kk * rho * kk.adjoint();
  }
  return (psi.amplitudes().adjoint() * out * psi.amplitudes())(0, 0).real();
}

Matrix choi_from_kraus(const std::vector<Matrix>& kraus, int din) {
  const int dout = static_cast<int>(kraus[0].rows());
  Matrix j = Matrix::Zero(din * dout, din * dout);
  for (int a = 0; a < din; ++a)
    for (int b = 0; b < din; ++b) {
      Matrix eab = Matrix::Zero(din, din);
      eab(a, b) = 1.0;
      Matrix img = Matrix::Zero(dout, dout);
      for (const auto& k : kraus) img += k * eab * k.adjoint();
      j += tensor(eab, img);
    }
  return j;
}

}  // namespace

TEST(Svec, RoundTripAndInnerProduct) {
  for (int seed = 0; seed < 5; ++seed) {
    const Matrix a = testing_util::random_hermitian(5, seed);
    const Matrix b = testing_util::random_hermitian(5, seed + 100);
    EXPECT_LE(max_abs(smat(svec(a), 5) - a), 1e-14);
    EXPECT_NEAR(svec(a).dot(svec(b)), (a * b).trace().real(), 1e-12);
  }
  EXPECT_THROW(smat(Eigen::VectorXd::Zero(7), 3), DimensionError);
}

TEST(SdpSolve, LargestEigenvalue) {
  // max Tr[C X], Tr X = 1, X >= 0  ->  lambda_max(C)
  const Matrix c = testing_util::random_hermitian(4, 3);
  const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(c).eigenvalues()(3);
  for (SdpMethod m : kMethods) {
    SdpProblem prob;
    const int x = prob.add_block(4);
    prob.set_objective(x, c);
    prob.add_equality({{x, [](const Matrix& v) -> Matrix { return Matrix::Constant(1, 1, v.trace().real()); }}},
                      Matrix::Constant(1, 1, 1.0));
    const SdpSolution s = solve(prob, with_method(m));
    SCOPED_TRACE(to_string(m));
    EXPECT_EQ(s.status, SdpStatus::Solved);
    EXPECT_NEAR(s.objective, lmax, 1e-5);
    EXPECT_GE(min_eig(s.blocks[0]), -1e-6);
    EXPECT_LE(s.complementary_slackness, 1e-5);
    EXPECT_EQ(s.method, m);
  }
}

TEST(SdpSolve, StopsAtTheTimeLimit) {
  const Matrix c = testing_util::random_hermitian(6, 5);
  for (SdpMethod m : kMethods) {
    SdpProblem prob;
    const int x = prob.add_block(6);
    prob.set_objective(x, c);
    prob.add_inequality({{x, [](const Matrix& v) -> Matrix { return v; }}}, Matrix::Identity(6, 6));
    SdpOptions o = with_method(m);
    o.max_seconds = 1e-9;
    o.tol = 1e-15;
    o.ipm_tol = 1e-15;
    const SdpSolution s = solve(prob, o);
    SCOPED_TRACE(to_string(m));
    EXPECT_EQ(s.status, SdpStatus::TimeLimit);
    EXPECT_LE(s.iterations, 2);
  }
  SdpProblem prob;
  const int x = prob.add_block(2);
  prob.set_objective(x, Matrix::Identity(2, 2));
  prob.add_inequality({{x, [](const Matrix& v) -> Matrix { return v; }}}, Matrix::Identity(2, 2));
  SdpOptions bad;
  bad.max_seconds = -1;
  EXPECT_THROW(solve(prob, bad), std::invalid_argument);
}

TEST(SdpSolve, InequalityGivesPositivePart) {
  // max Tr[C X], 0 <= X <= I  ->  sum of positive eigenvalues
  const Matrix c = testing_util::random_hermitian(5, 8);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Matrix>(c).eigenvalues();
  const double expected = ev.cwiseMax(0.0).sum();
  for (SdpMethod m : kMethods) {
    SdpProblem prob;
    const int x = prob.add_block(5);
    prob.set_objective(x, c);
    const int slack = prob.add_inequality({{x, [](const Matrix& v) { return v; }}}, Matrix::Identity(5, 5));
    const SdpSolution s = solve(prob, with_method(m));
    SCOPED_TRACE(to_string(m));
    EXPECT_EQ(s.status, SdpStatus::Solved);
    EXPECT_NEAR(s.objective, expected, 1e-5);
    EXPECT_LE(max_abs(s.blocks[x] + s.blocks[slack] - Matrix::Identity(5, 5)), 1e-5);
  }
}

TEST(SdpSolve, InteriorPointDualBoundsPrimal) {
  const QState rho = noisy_pair(0.5);
  const PptBound b = ppt_avg_fidelity_bound(rho.matrix(), {4, 4}, 2, with_method(SdpMethod::InteriorPoint));
  EXPECT_EQ(b.solution.status, SdpStatus::Solved);
  EXPECT_GE(b.solution.dual_objective, b.solution.objective - 1e-9);
  EXPECT_NEAR(b.solution.dual_objective, b.solution.objective, 1e-7);
  EXPECT_LE(b.solution.primal_residual, 1e-9);
  EXPECT_LE(b.solution.dual_residual, 1e-9);
}

TEST(SdpSolve, MethodsAgree) {
  const QState rho = noisy_pair(0.3);
  const double ipm = ppt_avg_fidelity_bound(rho.matrix(), {4, 4}, 2, with_method(SdpMethod::InteriorPoint)).value;
  const PptBound admm = ppt_avg_fidelity_bound(rho.matrix(), {4, 4}, 2, with_method(SdpMethod::Admm));
  EXPECT_EQ(admm.solution.status, SdpStatus::Solved);
  EXPECT_TRUE(std::isnan(admm.solution.dual_objective));
  EXPECT_NEAR(ipm, admm.value, 1e-5);
}

TEST(SdpSolve, AutoPicksMethodBySize) {
  SdpProblem prob;
  const int x = prob.add_block(2);
  prob.set_objective(x, Matrix::Identity(2, 2));
  prob.add_equality({{x, [](const Matrix& v) { return v; }}}, Matrix::Identity(2, 2));
  SdpOptions o;
  EXPECT_EQ(solve(prob, o).method, SdpMethod::InteriorPoint);
  o.ipm_max_rows = 3;
  EXPECT_EQ(solve(prob, o).method, SdpMethod::Admm);
}

TEST(SdpProblem, Validation) {
  SdpProblem prob;
  EXPECT_THROW(prob.add_block(0), DimensionError);
  const int x = prob.add_block(2);
  EXPECT_THROW(prob.set_objective(x, Matrix::Identity(3, 3)), DimensionError);
  Matrix nonherm = Matrix::Zero(2, 2);
  nonherm(0, 1) = 1.0;
  EXPECT_THROW(prob.set_objective(5, Matrix::Identity(2, 2)), DimensionError);
  prob.add_equality({{x, [](const Matrix& v) { return v; }}}, nonherm);
  EXPECT_THROW(prob.validate(), InvariantError);

  SdpProblem shape;
  const int y = shape.add_block(2);
  shape.add_equality({{y, [](const Matrix& v) { return v; }}}, Matrix::Identity(3, 3));
  EXPECT_THROW(shape.validate(), DimensionError);

  SdpProblem ok;
  ok.add_block(1);
  SdpOptions bad;
  bad.over_relaxation = 2.0;
  EXPECT_THROW(solve(ok, bad), std::invalid_argument);
  bad = {};
  bad.ipm_tol = 0.0;
  EXPECT_THROW(solve(ok, bad), std::invalid_argument);
}

TEST(PartialTranspose, ProductStateTransposesSecondFactor) {
  const Matrix a = testing_util::random_state({3}, 1).matrix();
  const Matrix b = testing_util::random_state({2}, 2).matrix();
  EXPECT_LE(max_abs(partial_transpose(tensor(a, b), {3, 2}, {1}) - tensor(a, b.transpose())), 1e-15);
}

TEST(PartialTranspose, BellStateIsNpt) {
  const Matrix phi = max_entangled(2, 2).projector();
  EXPECT_NEAR(min_eig(partial_transpose(phi, {2, 2}, {0})), -0.5, 1e-14);
}

TEST(PartialTranspose, InvolutionTraceHermiticity) {
  const Dims dims{2, 3, 2};
  for (int seed = 0; seed < 10; ++seed) {
    const Matrix rho = testing_util::random_state(dims, seed).matrix();
    const Matrix pt = partial_transpose(rho, dims, {0, 2});
    EXPECT_LE(max_abs(partial_transpose(pt, dims, {0, 2}) - rho), 1e-14);
    EXPECT_NEAR(pt.trace().real(), 1.0, 1e-12);
    EXPECT_LE(max_abs(pt - pt.adjoint()), 1e-12);
  }
  // transposing every factor is the full transpose
  const Matrix m = testing_util::random_complex(12, 12, 4);
  EXPECT_LE(max_abs(partial_transpose(m, dims, {0, 1, 2}) - m.transpose()), 1e-15);
  EXPECT_LE(max_abs(partial_transpose(m, dims, {}) - m), 1e-15);
}

TEST(PartialTranspose, MatchesIndexFormula) {
  const Dims dims{2, 3};
  const Matrix m = testing_util::random_complex(6, 6, 9);
  const Matrix pt = partial_transpose(m, dims, {1});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 3; ++l) EXPECT_EQ(pt(i * 3 + j, k * 3 + l), m(i * 3 + l, k * 3 + j));
}

TEST(PartialTranspose, RejectsBadInput) {
  EXPECT_THROW(partial_transpose(Matrix::Identity(4, 4), {2, 2}, {2}), DimensionError);
  EXPECT_THROW(partial_transpose(Matrix::Identity(5, 5), {2, 2}, {0}), DimensionError);
}

TEST(PptAvgBound, BellStateGivesOne) {
  const PptBound b = ppt_avg_fidelity_bound(max_entangled(2, 2).projector(), {2, 2}, 2);
  EXPECT_NEAR(b.value, 1.0, 1e-5);
}

TEST(PptAvgBound, MaximallyMixedGivesOneHalf) {
  // Preparing |00> from scratch already reaches 1/2.
  const PptBound b = ppt_avg_fidelity_bound(Matrix::Identity(4, 4) / 4.0, {2, 2}, 2);
  EXPECT_NEAR(b.value, 0.5, 1e-6);
}

TEST(PptAvgBound, IsotropicStateCannotBeImproved) {
  const Matrix phi = max_entangled(2, 2).projector();
  for (double f : {0.3, 0.6, 0.8, 0.95}) {
    const Matrix iso = f * phi + (1 - f) / 3.0 * (Matrix::Identity(4, 4) - phi);
    EXPECT_NEAR(ppt_avg_fidelity_bound(iso, {2, 2}, 2).value, std::max(f, 0.5), 1e-6) << f;
  }
}

TEST(PptAvgBound, MatchesReferenceSolver) {
  // Frozen from an independent conic solver on the same program.
  EXPECT_NEAR(ppt_avg_fidelity_bound(noisy_pair(0.3).matrix(), {4, 4}, 2).value, 0.8512096771, 1e-6);
  EXPECT_NEAR(ppt_avg_fidelity_bound(noisy_pair(0.9).matrix(), {4, 4}, 2).value, 0.5277777734, 1e-6);
}

TEST(PptAvgBound, RejectsBadInput) {
  EXPECT_THROW(ppt_avg_fidelity_bound(Matrix::Identity(4, 4) / 4.0, {2, 3}, 2), DimensionError);
  EXPECT_THROW(ppt_avg_fidelity_bound(Matrix::Identity(4, 4) / 4.0, {2, 2}, 1), std::invalid_argument);
  EXPECT_THROW(ppt_avg_fidelity_bound(Matrix::Identity(8, 8) / 8.0, {2, 2, 2}, 2), DimensionError);
}

TEST(PptAvgBound, SolutionSatisfiesChoiConstraints) {
  const PptBound b = ppt_avg_fidelity_bound(noisy_pair(0.4).matrix(), {4, 4}, 2);
  EXPECT_GE(testing_util::choi_constraint_margin(b.solution.blocks[0], b.solution.blocks[1], {4, 4}, 2), -1e-7);
}

TEST(PptFidelityBound, NoiselessAtPOne) {
  EXPECT_NEAR(ppt_fidelity_bound(max_entangled(2, 2).projector(), {2, 2}, 2, 1.0).value, 1.0, 1e-6);
}

TEST(PptFidelityBound, NonIncreasingInP) {
  const Matrix rho = noisy_pair(0.5).matrix();
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);
  const auto sweep = ppt_fidelity_bound_sweep(rho, {4, 4}, 2, grid);
  ASSERT_EQ(sweep.size(), grid.size());
  for (std::size_t i = 1; i < sweep.size(); ++i) EXPECT_LE(sweep[i].value, sweep[i - 1].value + 1e-6) << grid[i];
}

TEST(PptFidelityBound, MatchesReferenceSolver) {
  const Matrix r3 = noisy_pair(0.3).matrix(), r9 = noisy_pair(0.9).matrix();
  EXPECT_NEAR(ppt_fidelity_bound(r3, {4, 4}, 2, 0.1).value, 0.9953527080, 1e-6);
  EXPECT_NEAR(ppt_fidelity_bound(r3, {4, 4}, 2, 0.01).value, 0.9995313606, 1e-5);
  EXPECT_NEAR(ppt_fidelity_bound(r9, {4, 4}, 2, 0.1).value, 0.7481333910, 1e-6);
  EXPECT_NEAR(ppt_fidelity_bound(r9, {4, 4}, 2, 0.01).value, 0.9586449902, 1e-5);
}

TEST(PptFidelityBound, SmallPStaysAnUpperBound) {
  // reference optima from an independent conic solver; the dual value may
  // only overshoot
  const Matrix r3 = noisy_pair(0.3).matrix();
  EXPECT_GE(ppt_fidelity_bound(r3, {4, 4}, 2, 1e-3).value, 0.99995309 - 1e-6);
  EXPECT_LE(ppt_fidelity_bound(r3, {4, 4}, 2, 1e-3).value, 1.0 + 1e-4);
  EXPECT_GE(ppt_fidelity_bound(r3, {4, 4}, 2, 1e-4).value, 0.99999403 - 1e-6);
}

TEST(PptFidelityBound, RejectsBadP) {
  const Matrix rho = Matrix::Identity(4, 4) / 4.0;
  EXPECT_THROW(ppt_fidelity_bound(rho, {2, 2}, 2, 0.0), std::invalid_argument);
  EXPECT_THROW(ppt_fidelity_bound(rho, {2, 2}, 2, 1.5), std::invalid_argument);
}

TEST(SimplifiedConstraints, AgreeWithChoiLevel) {
  int feasible = 0, infeasible = 0;
  for (int seed = 0; seed < 100; ++seed) {
    // E + 3F = I by construction; feasibility needs I/4 <= F^T_A <= I/2 and
    // F <= I/3, so perturb F = I/4 along (G - cI)^T_A and straddle the boundary
    const Matrix g0 = testing_util::random_psd(4, 500 + seed);
    const Matrix g = g0 / Eigen::SelfAdjointEigenSolver<Matrix>(g0).eigenvalues()(3);
    const double t = 0.02 + 0.02 * (seed % 5);
    const double c = (seed % 3 == 0) ? 0.3 : 0.0;
    const Matrix f = 0.25 * Matrix::Identity(4, 4) +
                     t * partial_transpose(g - c * Matrix::Identity(4, 4), {2, 2}, {0});
    const Matrix e = Matrix::Identity(4, 4) - 3.0 * f;
    const double simple = testing_util::simplified_constraint_margin(e, f, {2, 2}, 2);
    const double choi = testing_util::choi_constraint_margin(e, f, {2, 2}, 2);
    EXPECT_NEAR(simple, choi, 1e-8) << seed;
    (simple >= -1e-8 ? feasible : infeasible)++;
  }
  EXPECT_GT(feasible, 0);
  EXPECT_GT(infeasible, 0);
}

TEST(MergingOperator, MatchesDirectChannelEvaluation) {
  const PureState psi = haar_random_pure(Dims{2, 2, 2}, 21);
  const Matrix x = merging_fidelity_operator(psi);
  EXPECT_LE(max_abs(x - x.adjoint()), 1e-14);
  for (int seed = 0; seed < 5; ++seed) {
    // random channel AB -> B'B'' from a 16 x 4 isometry, Kraus order 4
    const Matrix v = random_point(16, 4, 300 + seed).matrix();
    std::vector<Matrix> kraus;
    for (int k = 0; k < 4; ++k) kraus.push_back(v.middleRows(4 * k, 4));
    const double direct = merging_fidelity_direct(psi, kraus);
    EXPECT_NEAR((choi_from_kraus(kraus, 4) * x).trace().real(), direct, 1e-12);
  }
}

TEST(PptMergingBound, MatchesReferenceSolver) {
  const PureState ghz = three_qubit({{0, 1.0}, {7, 1.0}});
  const PureState w = three_qubit({{1, 1.0}, {2, 1.0}, {4, 1.0}});
  const PureState mix = three_qubit({{0, 1.0}, {3, 2.0}, {5, Complex(0, 1)}, {6, -1.0}});
  EXPECT_NEAR(ppt_merging_bound(ghz).value, 1.0, 1e-6);
  EXPECT_NEAR(ppt_merging_bound(w).value, 0.8698252307, 1e-6);
  EXPECT_NEAR(ppt_merging_bound(mix).value, 0.9790543616, 1e-6);
}

TEST(PptMergingBound, ProductReferenceIsPerfect) {
  // A already holds nothing entangled with R: Bob keeps B, fidelity 1.
  const PureState psi = three_qubit({{0, 1.0}});
  EXPECT_NEAR(ppt_merging_bound(psi).value, 1.0, 1e-6);
  EXPECT_THROW(merging_fidelity_operator(haar_random_pure(Dims{2, 2, 4}, 1)), DimensionError);
}

TEST(PptMergingBound, SolutionIsPptChannel) {
  const PptBound b = ppt_merging_bound(haar_random_pure(Dims{2, 2, 2}, 5));
  const Matrix& j = b.solution.blocks[0];
  EXPECT_GE(min_eig(j), -1e-7);
  EXPECT_LE(max_abs(partial_trace(j, {2, 2, 2, 2}, {0, 1}) - Matrix::Identity(4, 4)), 1e-7);
  EXPECT_GE(min_eig(partial_transpose(j, {2, 2, 2, 2}, {0})), -1e-7);
  EXPECT_LE(b.value, 1.0 + 1e-6);
}
