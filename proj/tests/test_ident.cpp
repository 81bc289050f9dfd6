#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "softgrip/ident.hpp"

using namespace softgrip;

namespace {

FingerModel hangingFinger() {
  FingerModel m;
  m.placement.angle = std::numbers::pi;
  return m;
}

Vector2 localGravity(const FingerModel& m) { return m.placement.vectorToLocal(SimConfig().gravity); }

std::vector<IdentSample> exactRamp(const FingerModel& m) {
  RampExperiment e;
  e.sim.filter_cutoff = 0.0;
  e.acceleration = AccelerationSource::Logged;
  return generate_ramp_experiment(m, e);
}

// Shared across tests; the ramp runs take a few seconds each.
const std::vector<IdentSample>& exactSamples() {
  static const std::vector<IdentSample> s = exactRamp(hangingFinger());
  return s;
}

double maxRelativeError(const Vector6& x, const Vector6& truth) {
  return ((x - truth).array() / truth.array()).abs().maxCoeff();
}

}  // namespace

TEST(BuildRegression, RestSampleGivesInertiaRow) {
  const FingerModel m = hangingFinger();
  IdentSample s;
  s.qddot = Vector2(2.0, -1.0);
  const std::vector<IdentSample> samples(3, s);
  const auto r = build_regression(samples, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  EXPECT_EQ(r.A, Eigen::MatrixXd::Zero(6, 6));
  const Matrix2 M = direct_inertia<double>(Vector2::Zero(), m.dyn, m.kin);
  EXPECT_LT((r.Y.head<2>() + M * s.qddot).norm(), 1e-18);
}

TEST(BuildRegression, BlockStructure) {
  const FingerModel m = hangingFinger();
  const auto& s = exactSamples();
  const std::vector<IdentSample> few(s.begin() + 100, s.begin() + 110);
  const auto r = build_regression(few, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  for (Eigen::Index k = 0; k < 10; ++k) {
    EXPECT_EQ(r.A(2 * k, 1), 0.0);
    EXPECT_EQ(r.A(2 * k, 3), 0.0);
    EXPECT_EQ(r.A(2 * k, 5), 0.0);
    EXPECT_EQ(r.A(2 * k + 1, 0), 0.0);
    EXPECT_EQ(r.A(2 * k + 1, 2), 0.0);
    EXPECT_EQ(r.A(2 * k + 1, 4), 0.0);
  }
}

TEST(BuildRegression, TruthSatisfiesSimulatedRamp) {
  const FingerModel m = hangingFinger();
  const auto r = build_regression(exactSamples(), m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const Vector6 x = ident_truth(m.dyn, m.act);
  EXPECT_LE((r.A * x - r.Y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BuildRegression, TooFewSamples) {
  const std::vector<IdentSample> two(2);
  EXPECT_THROW(build_regression(two, 0.02, 0.02, {}, Vector2::Zero()), IdentificationError);
}

TEST(RampExperiment, Protocol) {
  RampExperiment e;
  EXPECT_DOUBLE_EQ(e.duration(), 15.0);
  const auto& s = exactSamples();
  ASSERT_EQ(s.size(), 2u * 15001u);
  for (std::size_t k = 0; k < 15001; ++k) {
    EXPECT_GE(s[k].pressure(0), 0.3 - 1e-12);
    EXPECT_LE(s[k].pressure(0), 1.8 + 1e-12);
    EXPECT_EQ(s[k].pressure(1), 0.0);
  }
  EXPECT_NEAR(s[15000].pressure(0), 1.8, 1e-12);
  EXPECT_NEAR(s[15001].pressure(1), 0.3, 1e-12);
}

TEST(SolveLeastSquares, NoiseFreeRoundTrip) {
  const FingerModel m = hangingFinger();
  const auto r = build_regression(exactSamples(), m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const auto res = solve_least_squares(r.A, r.Y);
  EXPECT_LE(maxRelativeError(res.x, ident_truth(m.dyn, m.act)), 1e-6);
  EXPECT_TRUE(res.ok());
  EXPECT_EQ(res.rank, 6);
}

TEST(SolveLeastSquares, NoisyCurvatureWithinFivePercent) {
  const FingerModel m = hangingFinger();
  RampExperiment e;
  e.sim.noise_std = 0.01;
  e.sim.seed = 4242;
  const auto samples = generate_ramp_experiment(m, e);
  const auto r = build_regression(samples, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  EXPECT_LE(maxRelativeError(solve_least_squares(r.A, r.Y).x, ident_truth(m.dyn, m.act)), 0.05);
}

TEST(SolveLeastSquares, SquareSystemIsExact) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(6, 6) + 0.1 * Eigen::MatrixXd::Ones(6, 6);
  Eigen::VectorXd Y(6);
  Y << 1, 2, 3, 4, 5, 6;
  const auto res = solve_least_squares(A, Y);
  EXPECT_LT((A * res.x - Y).norm(), 1e-14);
  EXPECT_LT(res.residual_norm, 1e-14);
}

TEST(SolveLeastSquares, RankDeficiencyNamesDirection) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(20, 6);
  A.col(4) = -A.col(0);
  const Eigen::VectorXd Y = Eigen::VectorXd::Random(20);
  try {
    solve_least_squares(A, Y);
    FAIL() << "expected rank error";
  } catch (const IdentificationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("K1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("alpha1"), std::string::npos) << msg;
  }
}

TEST(SolveLeastSquares, NegativeEntriesFlagged) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd Y(6);
  Y << 1, -2, 3, 4, 5, -6;
  const auto res = solve_least_squares(A, Y);
  ASSERT_EQ(res.negative.size(), 2u);
  EXPECT_EQ(res.negative[0], "K2");
  EXPECT_EQ(res.negative[1], "alpha2");
  EXPECT_DOUBLE_EQ(res.x(1), -2.0);
}

TEST(SolveLeastSquares, PressureScalingEquivariance) {
  const FingerModel m = hangingFinger();
  std::vector<IdentSample> s;
  for (std::size_t k = 0; k < exactSamples().size(); k += 10) s.push_back(exactSamples()[k]);
  auto r = build_regression(s, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const auto base = solve_least_squares(r.A, r.Y);
  for (auto& x : s) x.pressure *= 2.5;
  r = build_regression(s, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const auto scaled = solve_least_squares(r.A, r.Y);
  EXPECT_NEAR(scaled.residual_norm, base.residual_norm, 1e-12 + 1e-9 * base.residual_norm);
  EXPECT_NEAR(scaled.x(4) * 2.5, base.x(4), 1e-9 * base.x(4));
  EXPECT_NEAR(scaled.x(0), base.x(0), 1e-9 * base.x(0));
}

TEST(SolveLeastSquares, DuplicatedSamplesKeepMinimizer) {
  const FingerModel m = hangingFinger();
  std::vector<IdentSample> s;
  for (std::size_t k = 0; k < exactSamples().size(); k += 10) s.push_back(exactSamples()[k]);
  for (auto& x : s) x.q += Vector2(1e-4, -2e-4);  // makes the fit inexact
  auto r = build_regression(s, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const auto once = solve_least_squares(r.A, r.Y);
  std::vector<IdentSample> twice = s;
  twice.insert(twice.end(), s.begin(), s.end());
  r = build_regression(twice, m.dyn.m1, m.dyn.m2, m.kin, localGravity(m));
  const auto dup = solve_least_squares(r.A, r.Y);
  EXPECT_LE(maxRelativeError(dup.x, once.x), 1e-9);
}

TEST(TrajectoryCsvReader, RoundTrip) {
  const FingerModel m;
  OpenLoopController c(PressureSignal::ramp(0.3, 1.8, 0.1), PressureSignal::constant(0.5));
  SimConfig cfg;
  cfg.duration = 0.2;
  const Trajectory traj = simulate(c, m, {}, cfg);
  std::stringstream ss;
  write_trajectory_csv(ss, traj);
  const Trajectory back = read_trajectory_csv(ss);
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    EXPECT_NEAR(back.records[k].q(0), traj.records[k].q(0), 1e-8 * std::abs(traj.records[k].q(0)) + 1e-300);
    EXPECT_NEAR(back.records[k].pressure(0), traj.records[k].pressure(0), 1e-9);
    EXPECT_TRUE(std::isnan(back.records[k].q_ref(0)));
  }
}

TEST(TrajectoryCsvReader, RejectsMissingColumn) {
  std::istringstream in("t,q1\n0,0\n");
  EXPECT_THROW(read_trajectory_csv(in), std::runtime_error);
}

TEST(IdentCsv, Layout) {
  IdentResult r;
  r.x << 0.068, 0.07, 0.0029, 0.0029, 0.076, 0.062;
  std::ostringstream os;
  write_ident_csv(os, r, ident_truth({}, {}));
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "name,value,truth,rel_error");
  EXPECT_NE(s.find("K1,0.068,0.068,0\n"), std::string::npos) << s;
  EXPECT_NE(s.find("alpha2,0.062,0.062,0\n"), std::string::npos) << s;
}
