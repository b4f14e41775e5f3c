#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "metavrft/qp.hpp"

using namespace metavrft;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double objective(const QpProblem& p, const VectorXd& x) {
  return 0.5 * x.dot(p.G * x) + p.a.dot(x);
}

// Enumerates active sets: the optimum of a strictly convex QP is the feasible
// equality-constrained minimizer with the lowest objective.
VectorXd brute_force(const QpProblem& p) {
  const int n = static_cast<int>(p.a.size());
  const int me = static_cast<int>(p.e.size());
  const int mi = static_cast<int>(p.c.size());
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_x;
  for (int mask = 0; mask < (1 << mi); ++mask) {
    std::vector<int> rows;
    for (int i = 0; i < mi; ++i) {
      if (mask & (1 << i)) rows.push_back(i);
    }
    const int m = me + static_cast<int>(rows.size());
    if (m > n) continue;
    MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
    VectorXd rhs = VectorXd::Zero(n + m);
    kkt.topLeftCorner(n, n) = p.G;
    rhs.head(n) = -p.a;
    for (int j = 0; j < me; ++j) {
      kkt.block(n + j, 0, 1, n) = p.E.row(j);
      kkt.block(0, n + j, n, 1) = p.E.row(j).transpose();
      rhs(n + j) = p.e(j);
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const int r = n + me + static_cast<int>(j);
      kkt.block(r, 0, 1, n) = p.C.row(rows[j]);
      kkt.block(0, r, n, 1) = p.C.row(rows[j]).transpose();
      rhs(r) = p.c(rows[j]);
    }
    Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (lu.rank() < n + m) continue;
    const VectorXd x = lu.solve(rhs).head(n);
    if (mi > 0 && ((p.C * x - p.c).array() < -1e-9).any()) continue;
    const double f = objective(p, x);
    if (f < best) {
      best = f;
      best_x = x;
    }
  }
  return best_x;
}

QpProblem random_problem(std::mt19937_64& rng, int n, int me, int mi) {
  std::normal_distribution<double> g(0.0, 1.0);
  QpProblem p;
  MatrixXd r = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
  p.G = r * r.transpose() + 0.5 * MatrixXd::Identity(n, n);
  p.a = VectorXd::NullaryExpr(n, [&] { return 3.0 * g(rng); });
  p.E = MatrixXd::NullaryExpr(me, n, [&] { return g(rng); });
  p.e = VectorXd::NullaryExpr(me, [&] { return g(rng); });
  p.C = MatrixXd::NullaryExpr(mi, n, [&] { return g(rng); });
  // Feasible by construction: C x0 - c >= 0 at a random x0.
  const VectorXd x0 = p.E.rows() > 0
                          ? VectorXd(p.E.completeOrthogonalDecomposition().solve(p.e))
                          : VectorXd(VectorXd::Zero(n));
  p.c = p.C * x0 - VectorXd::NullaryExpr(mi, [&] { return std::abs(g(rng)); });
  return p;
}

}  // namespace

TEST(Qp, UnconstrainedMinimizer) {
  QpProblem p;
  p.G = MatrixXd::Identity(2, 2) * 2.0;
  p.a = VectorXd::Constant(2, -2.0);
  p.E.resize(0, 2);
  p.e.resize(0);
  p.C.resize(0, 2);
  p.c.resize(0);
  const QpResult r = solve_qp(p);
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_NEAR(r.x(0), 1.0, 1e-12);
  EXPECT_NEAR(r.x(1), 1.0, 1e-12);
  EXPECT_NEAR(r.objective, -2.0, 1e-12);
}

TEST(Qp, SimplexProjection) {
  // Nearest point of the probability simplex to (0.9, 0.8, -0.5).
  QpProblem p;
  p.G = MatrixXd::Identity(3, 3);
  p.a = -VectorXd((VectorXd(3) << 0.9, 0.8, -0.5).finished());
  p.E = MatrixXd::Ones(1, 3);
  p.e = VectorXd::Ones(1);
  p.C = MatrixXd::Identity(3, 3);
  p.c = VectorXd::Zero(3);
  const QpResult r = solve_qp(p);
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_NEAR(r.x(0), 0.55, 1e-12);
  EXPECT_NEAR(r.x(1), 0.45, 1e-12);
  EXPECT_NEAR(r.x(2), 0.0, 1e-12);
  EXPECT_LT(r.stationarity, 1e-10);
}

TEST(Qp, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 4;
    const int me = trial % 2;
    const int mi = 1 + trial % 6;
    const QpProblem p = random_problem(rng, n, me, mi);
    const QpResult r = solve_qp(p);
    ASSERT_EQ(r.status, QpStatus::kOptimal) << "trial " << trial;
    const VectorXd ref = brute_force(p);
    ASSERT_EQ(ref.size(), n);
    EXPECT_NEAR(r.objective, objective(p, ref), 1e-8 * (1.0 + std::abs(objective(p, ref))));
    EXPECT_LT((r.x - ref).lpNorm<Eigen::Infinity>(), 1e-6) << "trial " << trial;
    for (double mu : r.multipliers) EXPECT_GE(mu, -1e-10);
    if (me > 0) {
      EXPECT_LT((p.E * r.x - p.e).lpNorm<Eigen::Infinity>(), 1e-9);
    }
    EXPECT_GE((p.C * r.x - p.c).minCoeff(), -1e-9);
  }
}

TEST(Qp, ReportsInfeasibility) {
  QpProblem p;
  p.G = MatrixXd::Identity(1, 1);
  p.a = VectorXd::Zero(1);
  p.E.resize(0, 1);
  p.e.resize(0);
  p.C = (MatrixXd(2, 1) << 1.0, -1.0).finished();
  p.c = (VectorXd(2) << 1.0, 0.0).finished();  // x >= 1 and x <= 0
  EXPECT_EQ(solve_qp(p).status, QpStatus::kInfeasible);
}

TEST(ConicQp, ProjectionOntoDisk) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d target(g(rng), g(rng));
    const Eigen::Vector2d center(g(rng) * 0.2, g(rng) * 0.2);
    const double radius = 0.5;
    QpProblem p;
    p.G = MatrixXd::Identity(2, 2);
    p.a = -target;
    p.E.resize(0, 2);
    p.e.resize(0);
    p.C.resize(0, 2);
    p.c.resize(0);
    ConeSet cones;
    cones.A.resize(1, 2);
    cones.A << 1.0, std::complex<double>(0.0, 1.0);
    cones.b.resize(1);
    cones.b << std::complex<double>(-center(0), -center(1));
    cones.radius = VectorXd::Constant(1, radius);
    const ConicResult r = solve_conic_qp(p, cones);
    ASSERT_EQ(r.qp.status, QpStatus::kOptimal);
    const Eigen::Vector2d off = target - center;
    const Eigen::Vector2d expect =
        off.norm() <= radius ? target : Eigen::Vector2d(center + radius * off / off.norm());
    // Tangent cuts leave an O(sqrt(cone_tol)) tangential slack.
    EXPECT_LT((r.qp.x - expect).norm(), 2e-5) << "trial " << trial;
    EXPECT_NEAR(r.qp.objective, 0.5 * expect.squaredNorm() - target.dot(expect), 1e-9);
    EXPECT_LE(cone_excess(cones, r.qp.x), 1e-9);
  }
}

TEST(ConicQp, InfeasibleConeIntersection) {
  // |x| <= 1 and x >= 2.
  QpProblem p;
  p.G = MatrixXd::Identity(1, 1);
  p.a = VectorXd::Zero(1);
  p.E.resize(0, 1);
  p.e.resize(0);
  p.C = MatrixXd::Ones(1, 1);
  p.c = VectorXd::Constant(1, 2.0);
  ConeSet cones;
  cones.A = Eigen::MatrixXcd::Ones(1, 1);
  cones.b = Eigen::VectorXcd::Zero(1);
  cones.radius = VectorXd::Ones(1);
  EXPECT_EQ(solve_conic_qp(p, cones).qp.status, QpStatus::kInfeasible);
}
