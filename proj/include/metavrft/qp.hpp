#ifndef METAVRFT_QP_HPP_
#define METAVRFT_QP_HPP_

#include <Eigen/Dense>
#include <vector>

namespace metavrft {

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

// min 0.5 x'Gx + a'x  s.t.  E x = e,  C x >= c.
struct QpProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd a;
  Eigen::MatrixXd E;
  Eigen::VectorXd e;
  Eigen::MatrixXd C;
  Eigen::VectorXd c;
};

struct QpResult {
  QpStatus status = QpStatus::kOptimal;
  Eigen::VectorXd x;
  double objective = 0.0;
  // Active inequality rows (indices into C) and their multipliers.
  std::vector<int> active;
  std::vector<double> multipliers;
  Eigen::VectorXd eq_multipliers;
  int iterations = 0;
  // ||G x + a - E'mu - C_A' lambda||_inf.
  double stationarity = 0.0;
};

struct QpOptions {
  double feasibility_tol = 1e-12;
  int max_iter = 10000;
};

// Dual active-set method of Goldfarb and Idnani; G must be positive definite.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

// Adds second-order cone constraints |b_i + A_i x| <= r_i (b_i, A_i complex)
// to a QP. They are enforced by polygonal tangent cuts refined until the
// largest relative excess is below cone_tol.
struct ConeSet {
  Eigen::VectorXcd b;
  Eigen::MatrixXcd A;
  Eigen::VectorXd radius;
  int size() const { return static_cast<int>(b.size()); }
};

struct ConicOptions {
  int initial_facets = 32;
  double cone_tol = 1e-10;
  int max_rounds = 200;
  QpOptions qp;
};

struct ConicResult {
  QpResult qp;
  int rounds = 0;
  int cuts = 0;
  // Cones whose tangent cuts are active at the solution.
  std::vector<int> active_cones;
  double max_excess = 0.0;
};

ConicResult solve_conic_qp(const QpProblem& base, const ConeSet& cones,
                           const ConicOptions& options = {});

// Relative excess max_i (|b_i + A_i x| - r_i) / r_i.
double cone_excess(const ConeSet& cones, const Eigen::VectorXd& x);

}  // namespace metavrft

#endif  // METAVRFT_QP_HPP_
