#include "metavrft/qp.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "metavrft/errors.hpp"

namespace metavrft {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rotates columns (i, j) of J by the Givens pair (c, s).
void rotate_columns(Eigen::MatrixXd& J, int i, int j, double c, double s) {
  for (Eigen::Index k = 0; k < J.rows(); ++k) {
    const double a = J(k, i);
    const double b = J(k, j);
    J(k, i) = c * a + s * b;
    J(k, j) = -s * a + c * b;
  }
}

class DualActiveSet {
 public:
  DualActiveSet(const Eigen::MatrixXd& G, int n) : n_(n), R_(Eigen::MatrixXd::Zero(n, n)) {
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("QP Hessian is not positive definite");
    }
    const Eigen::MatrixXd Linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
    J_ = Linv.transpose();
    d_.resize(n);
    z_.resize(n);
    r_.resize(n);
  }

  int q() const { return q_; }
  const Eigen::VectorXd& z() const { return z_; }
  const Eigen::VectorXd& r() const { return r_; }

  // Primal direction z = J2 J2' np and dual direction r = R^-1 J1' np.
  // Returns the relative size of the component of np outside the active span.
  double direction(const Eigen::VectorXd& np) {
    d_ = J_.transpose() * np;
    const int free = n_ - q_;
    z_ = J_.rightCols(free) * d_.tail(free);
    if (q_ > 0) {
      r_.head(q_) = R_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d_.head(q_));
    }
    const double dn = d_.norm();
    return dn > 0.0 ? d_.tail(free).norm() / dn : 0.0;
  }

  // Appends the constraint whose d = J' np was computed last.
  void add() {
    for (int j = n_ - 1; j > q_; --j) {
      const double a = d_(j - 1);
      const double b = d_(j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      d_(j - 1) = h;
      d_(j) = 0.0;
      rotate_columns(J_, j - 1, j, c, s);
    }
    R_.col(q_).head(q_ + 1) = d_.head(q_ + 1);
    ++q_;
  }

  void drop(int l) {
    for (int k = l; k < q_ - 1; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(q_ - 1).setZero();
    for (int j = l; j < q_ - 1; ++j) {
      const double a = R_(j, j);
      const double b = R_(j + 1, j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      for (int k = j; k < q_ - 1; ++k) {
        const double x = R_(j, k);
        const double y = R_(j + 1, k);
        R_(j, k) = c * x + s * y;
        R_(j + 1, k) = -s * x + c * y;
      }
      R_(j + 1, j) = 0.0;
      rotate_columns(J_, j, j + 1, c, s);
    }
    R_.row(q_ - 1).setZero();
    --q_;
  }

 private:
  int n_;
  int q_ = 0;
  Eigen::MatrixXd J_;
  Eigen::MatrixXd R_;
  Eigen::VectorXd d_;
  Eigen::VectorXd z_;
  Eigen::VectorXd r_;
};

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpOptions& options) {
  const int n = static_cast<int>(problem.G.rows());
  const int me = static_cast<int>(problem.E.rows());
  const int mi = static_cast<int>(problem.C.rows());
  if (problem.G.cols() != n || problem.a.size() != n ||
      (me > 0 && (problem.E.cols() != n || problem.e.size() != me)) ||
      (mi > 0 && (problem.C.cols() != n || problem.c.size() != mi))) {
    throw UsageError("QP dimension mismatch");
  }
  const double tol = options.feasibility_tol;
  QpResult result;

  // Unit-norm inequality rows.
  Eigen::MatrixXd C = problem.C;
  Eigen::VectorXd c = problem.c;
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(mi);
  std::vector<bool> skip(mi, false);
  for (int i = 0; i < mi; ++i) {
    const double nrm = C.row(i).norm();
    if (nrm == 0.0) {
      skip[i] = true;
      if (c(i) > tol) {
        result.status = QpStatus::kInfeasible;
        return result;
      }
      continue;
    }
    C.row(i) /= nrm;
    c(i) /= nrm;
    scale(i) = nrm;
  }

  DualActiveSet as(problem.G, n);
  Eigen::LLT<Eigen::MatrixXd> llt(problem.G);
  Eigen::VectorXd x = -llt.solve(problem.a);

  // Active set entries: equality i -> i, inequality i -> me + i.
  std::vector<int> active;
  std::vector<double> u;
  std::vector<bool> is_active(mi, false);

  for (int i = 0; i < me; ++i) {
    const Eigen::VectorXd np = problem.E.row(i).transpose();
    const double residual = problem.e(i) - np.dot(x);
    if (as.direction(np) < 1e-12) {
      if (std::abs(residual) > 1e-9 * (1.0 + std::abs(problem.e(i)))) {
        result.status = QpStatus::kInfeasible;
        return result;
      }
      continue;  // dependent but consistent
    }
    const double t = residual / as.z().dot(np);
    x += t * as.z();
    for (int j = 0; j < as.q(); ++j) u[j] -= t * as.r()(j);
    as.add();
    active.push_back(i);
    u.push_back(t);
  }

  int iter = 0;
  while (true) {
    int p = -1;
    double worst = -tol;
    for (int i = 0; i < mi; ++i) {
      if (skip[i] || is_active[i]) continue;
      const double s = C.row(i).dot(x) - c(i);
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) break;
    const Eigen::VectorXd np = C.row(p).transpose();
    double u_plus = 0.0;
    while (true) {
      if (++iter > options.max_iter) {
        result.status = QpStatus::kMaxIterations;
        result.x = x;
        result.iterations = iter;
        return result;
      }
      const double outside = as.direction(np);
      double t1 = kInf;
      int l = -1;
      for (int j = 0; j < as.q(); ++j) {
        if (active[j] < me) continue;
        const double rj = as.r()(j);
        if (rj > 0.0 && u[j] / rj < t1) {
          t1 = u[j] / rj;
          l = j;
        }
      }
      const double slack = np.dot(x) - c(p);
      const double t2 = outside > 1e-12 ? -slack / as.z().dot(np) : kInf;
      const double t = std::min(t1, t2);
      if (t == kInf) {
        result.status = QpStatus::kInfeasible;
        result.x = x;
        result.iterations = iter;
        return result;
      }
      for (int j = 0; j < as.q(); ++j) u[j] -= t * as.r()(j);
      u_plus += t;
      if (t2 == kInf) {
        is_active[active[l] - me] = false;
        active.erase(active.begin() + l);
        u.erase(u.begin() + l);
        as.drop(l);
        continue;
      }
      x += t * as.z();
      if (t2 <= t1) {
        as.add();
        active.push_back(me + p);
        u.push_back(u_plus);
        is_active[p] = true;
        break;
      }
      is_active[active[l] - me] = false;
      active.erase(active.begin() + l);
      u.erase(u.begin() + l);
      as.drop(l);
    }
  }

  result.x = x;
  result.iterations = iter;
  result.objective = 0.5 * x.dot(problem.G * x) + problem.a.dot(x);
  result.eq_multipliers = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd grad = problem.G * x + problem.a;
  for (std::size_t j = 0; j < active.size(); ++j) {
    const int id = active[j];
    if (id < me) {
      result.eq_multipliers(id) = u[j];
      grad -= u[j] * problem.E.row(id).transpose();
    } else {
      const int i = id - me;
      result.active.push_back(i);
      result.multipliers.push_back(u[j] / scale(i));
      grad -= u[j] * C.row(i).transpose();
    }
  }
  result.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return result;
}

double cone_excess(const ConeSet& cones, const Eigen::VectorXd& x) {
  double worst = -kInf;
  if (cones.size() == 0) return 0.0;
  const Eigen::VectorXcd z = cones.b + cones.A * x.cast<std::complex<double>>();
  for (int i = 0; i < cones.size(); ++i) {
    worst = std::max(worst, (std::abs(z(i)) - cones.radius(i)) / cones.radius(i));
  }
  return worst;
}

ConicResult solve_conic_qp(const QpProblem& base, const ConeSet& cones,
                           const ConicOptions& options) {
  const int n = static_cast<int>(base.G.rows());
  const int m = cones.size();
  for (int i = 0; i < m; ++i) {
    if (!(cones.radius(i) > 0.0)) throw NumericalError("cone radius must be positive");
  }
  struct Cut {
    int cone;
    double angle;
  };
  std::vector<Cut> cuts;
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < options.initial_facets; ++k) {
      cuts.push_back({i, 2.0 * std::numbers::pi * k / options.initial_facets});
    }
  }
  const int base_rows = static_cast<int>(base.C.rows());
  ConicResult out;
  QpProblem qp = base;
  while (true) {
    ++out.rounds;
    const int total = base_rows + static_cast<int>(cuts.size());
    qp.C.resize(total, n);
    qp.c.resize(total);
    if (base_rows > 0) {
      qp.C.topRows(base_rows) = base.C;
      qp.c.head(base_rows) = base.c;
    }
    // Re(e^{-j phi}(b + A x)) <= r.
    for (std::size_t k = 0; k < cuts.size(); ++k) {
      const std::complex<double> rot = std::polar(1.0, -cuts[k].angle);
      const int i = cuts[k].cone;
      const double inv = 1.0 / cones.radius(i);
      const int row = base_rows + static_cast<int>(k);
      qp.C.row(row) = -(rot * cones.A.row(i)).real() * inv;
      qp.c(row) = ((rot * cones.b(i)).real() - cones.radius(i)) * inv;
    }
    out.qp = solve_qp(qp, options.qp);
    if (out.qp.status != QpStatus::kOptimal) return out;
    const Eigen::VectorXcd z = cones.b + cones.A * out.qp.x.cast<std::complex<double>>();
    int added = 0;
    out.max_excess = m > 0 ? -kInf : 0.0;
    for (int i = 0; i < m; ++i) {
      const double excess = (std::abs(z(i)) - cones.radius(i)) / cones.radius(i);
      out.max_excess = std::max(out.max_excess, excess);
      if (excess > options.cone_tol) {
        cuts.push_back({i, std::arg(z(i))});
        ++added;
      }
    }
    out.cuts = static_cast<int>(cuts.size());
    if (added == 0) break;
    if (out.rounds >= options.max_rounds) {
      out.qp.status = QpStatus::kMaxIterations;
      return out;
    }
  }
  std::vector<bool> seen(m, false);
  for (int row : out.qp.active) {
    if (row >= base_rows) seen[cuts[row - base_rows].cone] = true;
  }
  for (int i = 0; i < m; ++i) {
    if (seen[i]) out.active_cones.push_back(i);
  }
  return out;
}

}  // namespace metavrft
