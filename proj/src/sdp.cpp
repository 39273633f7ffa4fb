#include "loccforge/sdp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <tuple>

namespace loccforge {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kRegularization = 1e-10;
constexpr int kBalanceEvery = 25;
constexpr int kStallWindow = 8;  // interior-point iterations without halving the residual

class Deadline {
 public:
  explicit Deadline(double seconds)
      : enabled_(seconds > 0),
        end_(std::chrono::steady_clock::now() +
             std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                 std::chrono::duration<double>(enabled_ ? seconds : 0.0))) {}
  bool passed() const { return enabled_ && std::chrono::steady_clock::now() >= end_; }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point end_;
};

Matrix basis_element(int n, int k) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * n);
  e(k) = 1.0;
  return smat(e, n);
}

}  // namespace

Eigen::VectorXd svec(const Matrix& h) {
  const int n = static_cast<int>(h.rows());
  Eigen::VectorXd v(static_cast<Eigen::Index>(n) * n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    v(k++) = h(j, j).real();
    for (int i = j + 1; i < n; ++i) {
      const Complex z = 0.5 * (h(i, j) + std::conj(h(j, i)));
      v(k++) = kSqrt2 * z.real();
      v(k++) = kSqrt2 * z.imag();
    }
  }
  return v;
}

Matrix smat(const Eigen::VectorXd& v, int n) {
  if (v.size() != static_cast<Eigen::Index>(n) * n) throw DimensionError("smat: vector length is not n^2");
  Matrix h(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    h(j, j) = v(k++);
    for (int i = j + 1; i < n; ++i) {
      const Complex z(v(k) / kSqrt2, v(k + 1) / kSqrt2);
      k += 2;
      h(i, j) = z;
      h(j, i) = std::conj(z);
    }
  }
  return h;
}

int SdpProblem::add_block(int dim) {
  if (dim < 1) throw DimensionError("SDP block dimension must be >= 1");
  dims_.push_back(dim);
  objective_.push_back(Matrix::Zero(dim, dim));
  return n_blocks() - 1;
}

void SdpProblem::set_objective(int block, Matrix c) {
  if (block < 0 || block >= n_blocks()) throw DimensionError("objective block out of range");
  if (c.rows() != dims_[block] || c.cols() != dims_[block]) throw DimensionError("objective has the wrong shape");
  objective_[block] = std::move(c);
}

void SdpProblem::add_equality(std::vector<LinearTerm> terms, Matrix rhs) {
  equalities_.push_back({std::move(terms), std::move(rhs)});
}

int SdpProblem::add_inequality(std::vector<LinearTerm> terms, Matrix rhs) {
  const int slack = add_block(static_cast<int>(rhs.rows()));
  terms.push_back({slack, [](const Matrix& x) { return x; }});
  add_equality(std::move(terms), std::move(rhs));
  return slack;
}

void SdpProblem::validate() const {
  for (int b = 0; b < n_blocks(); ++b)
    if (max_abs(objective_[b] - objective_[b].adjoint()) > 1e-12) throw InvariantError("objective is not Hermitian");
  for (const auto& c : equalities_) {
    if (c.rhs.rows() != c.rhs.cols()) throw DimensionError("constraint right-hand side is not square");
    if (max_abs(c.rhs - c.rhs.adjoint()) > 1e-12) throw InvariantError("constraint right-hand side is not Hermitian");
    for (const auto& t : c.terms) {
      if (t.block < 0 || t.block >= n_blocks()) throw DimensionError("constraint term block out of range");
      const Matrix probe = t.map(Matrix::Zero(dims_[t.block], dims_[t.block]));
      if (probe.rows() != c.rhs.rows() || probe.cols() != c.rhs.cols())
        throw DimensionError("constraint map output does not match the right-hand side");
    }
  }
}

std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Solved: return "solved";
    case SdpStatus::MaxIterations: return "max_iterations";
    case SdpStatus::NumericalFailure: return "numerical_failure";
    case SdpStatus::Stalled: return "stalled";
    case SdpStatus::TimeLimit: return "time_limit";
  }
  return "unknown";
}

std::string to_string(SdpMethod m) {
  switch (m) {
    case SdpMethod::Auto: return "auto";
    case SdpMethod::InteriorPoint: return "interior_point";
    case SdpMethod::Admm: return "admm";
  }
  return "unknown";
}

namespace {

struct Assembled {
  std::vector<int> dims;
  std::vector<int> offset;  // svec offsets, offset.back() = n
  Eigen::SparseMatrix<double> a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;  // maximize c.x
};

Assembled assemble(const SdpProblem& problem) {
  Assembled out;
  out.dims = problem.block_dims();
  const int nb = problem.n_blocks();
  out.offset.assign(nb + 1, 0);
  for (int b = 0; b < nb; ++b) out.offset[b + 1] = out.offset[b] + out.dims[b] * out.dims[b];
  const int n = out.offset[nb];

  // Constraint matrix from the action of each map on the svec basis.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  for (const auto& c : problem.equalities()) {
    const int m = static_cast<int>(c.rhs.rows());
    for (const auto& t : c.terms) {
      const int d = out.dims[t.block];
      for (int k = 0; k < d * d; ++k) {
        const Eigen::VectorXd col = svec(t.map(basis_element(d, k)));
        for (int r = 0; r < m * m; ++r)
          if (std::abs(col(r)) > 1e-15) trip.emplace_back(row + r, out.offset[t.block] + k, col(r));
      }
    }
    const Eigen::VectorXd b = svec(c.rhs);
    rhs.insert(rhs.end(), b.data(), b.data() + b.size());
    row += m * m;
  }
  out.a.resize(row, n);
  out.a.setFromTriplets(trip.begin(), trip.end());
  out.b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), row);
  out.c.resize(n);
  for (int b = 0; b < nb; ++b) out.c.segment(out.offset[b], out.dims[b] * out.dims[b]) = svec(problem.objective()[b]);
  return out;
}

SdpSolution solve_admm(const Assembled& p, const SdpOptions& opts) {
  const auto& dims = p.dims;
  const auto& offset = p.offset;
  const int nb = static_cast<int>(dims.size());
  const int n = offset[nb];
  const int m = static_cast<int>(p.a.rows());
  const auto& a = p.a;
  const auto& bvec = p.b;
  const auto& c = p.c;

  Eigen::SparseMatrix<double> aat = a * a.transpose();
  Eigen::SparseMatrix<double> reg(m, m);
  reg.setIdentity();
  aat += kRegularization * reg;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(aat);
  if (ldlt.info() != Eigen::Success) throw InvariantError("SDP: constraint factorization failed");

  auto project_affine = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd x = v - a.transpose() * ldlt.solve(a * v - bvec);
    x -= a.transpose() * ldlt.solve(a * x - bvec);  // one refinement step
    return x;
  };
  auto project_cone = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(n);
    for (int b = 0; b < nb; ++b) {
      const int d = dims[b];
      Eigen::SelfAdjointEigenSolver<Matrix> es(smat(v.segment(offset[b], d * d), d));
      const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      out.segment(offset[b], d * d) = svec(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint());
    }
    return out;
  };

  double rho = opts.rho;
  const double alpha = opts.over_relaxation;
  Eigen::VectorXd z = project_cone(project_affine(Eigen::VectorXd::Zero(n)));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd x = z;

  SdpSolution sol;
  sol.method = SdpMethod::Admm;
  const Deadline deadline(opts.max_seconds);
  double r_prim = 0.0, r_dual = 0.0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    x = project_affine(z - u + c / rho);
    const Eigen::VectorXd xh = alpha * x + (1 - alpha) * z;
    const Eigen::VectorXd z_prev = z;
    z = project_cone(xh + u);
    u += xh - z;

    r_prim = (x - z).norm() / (1.0 + std::max(x.norm(), z.norm()));
    r_dual = rho * (z - z_prev).norm() / (1.0 + rho * u.norm());
    sol.iterations = it;
    if (r_prim <= opts.tol && r_dual <= opts.tol) {
      sol.status = SdpStatus::Solved;
      break;
    }
    if (deadline.passed()) {
      sol.status = SdpStatus::TimeLimit;
      break;
    }
    if (it % kBalanceEvery == 0 && r_dual > 0 && r_prim > 0) {
      const double ratio = std::sqrt(r_prim / r_dual);
      if (ratio > 3 || ratio < 1.0 / 3) {
        const double f = std::clamp(ratio, 1e-2, 1e2);
        rho *= f;
        u /= f;
      }
    }
  }

  sol.primal_residual = std::max(r_prim, (a * z - bvec).norm() / (1.0 + bvec.norm()));
  sol.dual_residual = r_dual;
  sol.objective = c.dot(z);
  sol.dual_objective = std::numeric_limits<double>::quiet_NaN();
  const Eigen::VectorXd s = project_cone(-rho * u);
  sol.complementary_slackness = std::abs(z.dot(s));
  for (int b = 0; b < nb; ++b) sol.blocks.push_back(smat(z.segment(offset[b], dims[b] * dims[b]), dims[b]));
  return sol;
}

Matrix sym(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

// Largest step in (0, inf) keeping X + t dX positive semidefinite, X > 0.
double max_step(const Matrix& x, const Matrix& dx) {
  Eigen::LLT<Matrix> llt(x);
  const Matrix li = llt.matrixL().solve(Matrix::Identity(x.rows(), x.cols()));
  const Matrix q = sym(li * dx * li.adjoint());
  const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(q, Eigen::EigenvaluesOnly).eigenvalues()(0);
  return lmin >= 0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

// min -c.x  s.t. A x = b, x in K;   dual  max b.y  s.t. A^T y + s = -c, s in K.
SdpSolution solve_ipm(const Assembled& p, const SdpOptions& opts) {
  const auto& dims = p.dims;
  const auto& offset = p.offset;
  const int nb = static_cast<int>(dims.size());
  const int m = static_cast<int>(p.a.rows());
  const Eigen::VectorXd cmin = -p.c;
  std::vector<Eigen::SparseMatrix<double>> ab(nb);
  for (int b = 0; b < nb; ++b) ab[b] = p.a.middleCols(offset[b], dims[b] * dims[b]);

  // Projection onto A dx = r; restores primal feasibility lost in the
  // ill-conditioned Schur solve.
  Eigen::SparseMatrix<double> aat = p.a * p.a.transpose();
  Eigen::SparseMatrix<double> reg(m, m);
  reg.setIdentity();
  aat += kRegularization * reg;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> aat_ldlt(aat);
  if (aat_ldlt.info() != Eigen::Success) throw InvariantError("SDP: constraint factorization failed");

  auto to_blocks = [&](const Eigen::VectorXd& v) {
    std::vector<Matrix> out(nb);
    for (int b = 0; b < nb; ++b) out[b] = smat(v.segment(offset[b], dims[b] * dims[b]), dims[b]);
    return out;
  };
  auto to_vec = [&](const std::vector<Matrix>& blocks) {
    Eigen::VectorXd v(offset[nb]);
    for (int b = 0; b < nb; ++b) v.segment(offset[b], dims[b] * dims[b]) = svec(blocks[b]);
    return v;
  };

  // Scaled identity start per block.
  std::vector<Matrix> x(nb), s(nb);
  int total_dim = 0;
  for (int b = 0; b < nb; ++b) {
    const int d = dims[b];
    total_dim += d;
    double xi = std::max(10.0, std::sqrt(static_cast<double>(d)));
    double eta = xi;
    Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < ab[b].outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator e(ab[b], k); e; ++e) row_norm(e.row()) += e.value() * e.value();
    for (int k = 0; k < m; ++k) {
      const double nk = std::sqrt(row_norm(k));
      xi = std::max(xi, d * (1.0 + std::abs(p.b(k))) / (1.0 + nk));
      eta = std::max(eta, nk);
    }
    eta = std::max(eta, cmin.segment(offset[b], d * d).norm());
    x[b] = xi * Matrix::Identity(d, d);
    s[b] = eta * Matrix::Identity(d, d);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd xv = to_vec(x), sv = to_vec(s);

  const double nrm_b = p.b.norm(), nrm_c = cmin.norm();
  SdpSolution sol;
  sol.method = SdpMethod::InteriorPoint;
  double pinf = 0, dinf = 0, gap = 0;
  struct Iterate {
    double score = std::numeric_limits<double>::infinity();
    std::vector<Matrix> x;
    Eigen::VectorXd xv, sv, y;
    double pinf = 0, dinf = 0;
  } best;
  int last_progress = 0;
  const Deadline deadline(opts.max_seconds);
  for (int it = 0; it <= opts.ipm_max_iters; ++it) {
    const Eigen::VectorXd rp = p.b - p.a * xv;
    const Eigen::VectorXd rd = cmin - sv - p.a.transpose() * y;
    const double pobj = cmin.dot(xv), dobj = p.b.dot(y);
    pinf = rp.norm() / (1.0 + nrm_b);
    dinf = rd.norm() / (1.0 + nrm_c);
    gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.iterations = it;
    if (const double score = std::max({pinf, dinf, gap}); score < best.score) {
      if (score < 0.5 * best.score) last_progress = it;
      best = {score, x, xv, sv, y, pinf, dinf};
    }
    if (it - last_progress > kStallWindow) {
      sol.status = SdpStatus::Stalled;
      break;
    }
    if (pinf <= opts.ipm_tol && dinf <= opts.ipm_tol && gap <= opts.ipm_tol) {
      sol.status = SdpStatus::Solved;
      break;
    }
    if (it == opts.ipm_max_iters) break;
    if (deadline.passed()) {
      sol.status = SdpStatus::TimeLimit;
      break;
    }
    const double mu = xv.dot(sv) / total_dim;

    // Schur complement M = sum_b A_b W_b A_b^T with W_b V = sym(X V S^-1).
    std::vector<Matrix> sinv(nb);
    Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(m, m);
    bool ok = true;
    for (int b = 0; b < nb; ++b) {
      const int d = dims[b];
      Eigen::LLT<Matrix> llt(s[b]);
      if (llt.info() != Eigen::Success) {
        ok = false;
        break;
      }
      sinv[b] = llt.solve(Matrix::Identity(d, d));
      Eigen::MatrixXd w(d * d, d * d);
      for (int k = 0; k < d * d; ++k) w.col(k) = svec(sym(x[b] * basis_element(d, k) * sinv[b]));
      const Eigen::MatrixXd aw = ab[b] * w;
      schur.noalias() += aw * ab[b].transpose();
    }
    if (!ok) {
      sol.status = SdpStatus::NumericalFailure;
      break;
    }
    schur = 0.5 * (schur + schur.transpose());
    schur.diagonal().array() += 1e-14 * std::max(1.0, schur.diagonal().maxCoeff());
    Eigen::LDLT<Eigen::MatrixXd> chol(schur);
    if (chol.info() != Eigen::Success) {
      sol.status = SdpStatus::NumericalFailure;
      break;
    }

    const std::vector<Matrix> rdm = to_blocks(rd);
    // Direction for a given complementarity target R_b (dX = R - sym(X dS S^-1)).
    auto direction = [&](const std::vector<Matrix>& r, std::vector<Matrix>& dx, std::vector<Matrix>& ds,
                         Eigen::VectorXd& dy) {
      std::vector<Matrix> t(nb);
      for (int b = 0; b < nb; ++b) t[b] = r[b] - sym(x[b] * rdm[b] * sinv[b]);
      dy = chol.solve(rp - p.a * to_vec(t));
      const std::vector<Matrix> atdy = to_blocks(p.a.transpose() * dy);
      for (int b = 0; b < nb; ++b) {
        ds[b] = rdm[b] - atdy[b];
        dx[b] = r[b] - sym(x[b] * ds[b] * sinv[b]);
      }
      Eigen::VectorXd dxv = to_vec(dx);
      dxv += p.a.transpose() * aat_ldlt.solve(rp - p.a * dxv);
      dx = to_blocks(dxv);
    };
    auto step_lengths = [&](const std::vector<Matrix>& dx, const std::vector<Matrix>& ds) {
      double ap = std::numeric_limits<double>::infinity(), ad = ap;
      for (int b = 0; b < nb; ++b) {
        ap = std::min(ap, max_step(x[b], dx[b]));
        ad = std::min(ad, max_step(s[b], ds[b]));
      }
      return std::pair{ap, ad};
    };

    std::vector<Matrix> r(nb), dx(nb), ds(nb);
    Eigen::VectorXd dy;
    for (int b = 0; b < nb; ++b) r[b] = -x[b];
    direction(r, dx, ds, dy);
    auto [ap, ad] = step_lengths(dx, ds);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = 0.0;
    for (int b = 0; b < nb; ++b) mu_aff += ((x[b] + ap * dx[b]) * (s[b] + ad * ds[b])).trace().real();
    mu_aff /= total_dim;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    for (int b = 0; b < nb; ++b) r[b] = sigma * mu * sinv[b] - x[b] - sym(dx[b] * ds[b] * sinv[b]);
    direction(r, dx, ds, dy);
    std::tie(ap, ad) = step_lengths(dx, ds);
    ap = std::min(1.0, 0.98 * ap);
    ad = std::min(1.0, 0.98 * ad);
    for (int b = 0; b < nb; ++b) {
      x[b] = sym(x[b] + ap * dx[b]);
      s[b] = sym(s[b] + ad * ds[b]);
    }
    y += ad * dy;
    xv = to_vec(x);
    sv = to_vec(s);
  }

  sol.objective = -cmin.dot(best.xv);
  sol.dual_objective = -p.b.dot(best.y);
  sol.primal_residual = best.pinf;
  sol.dual_residual = best.dinf;
  sol.complementary_slackness = std::abs(best.xv.dot(best.sv));
  sol.blocks = best.x;
  return sol;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts) {
  problem.validate();
  if (!(opts.tol > 0) || opts.max_iters < 1 || !(opts.over_relaxation > 0 && opts.over_relaxation < 2) ||
      !(opts.rho > 0) || !(opts.ipm_tol > 0) || opts.ipm_max_iters < 1 ||
      !(opts.max_seconds >= 0))
    throw std::invalid_argument("invalid SDP solver options");
  const Assembled p = assemble(problem);
  SdpMethod method = opts.method;
  if (method == SdpMethod::Auto)
    method = p.a.rows() <= opts.ipm_max_rows ? SdpMethod::InteriorPoint : SdpMethod::Admm;
  return method == SdpMethod::InteriorPoint ? solve_ipm(p, opts) : solve_admm(p, opts);
}

}  // namespace loccforge
