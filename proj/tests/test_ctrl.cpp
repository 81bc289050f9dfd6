#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "softgrip/ctrl.hpp"

using namespace softgrip;

namespace {

const Vector2 kGravity(0.0, -9.81);

double rmse(const Trajectory& t, int i, double skip) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : t.records) {
    if (r.t < skip) continue;
    const double e = r.q(i) - r.q_ref(i);
    sum += e * e;
    ++n;
  }
  return std::sqrt(sum / n);
}

double taskRmse(const Trajectory& t, const EllipseReference& ref, int i, double skip) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : t.records) {
    if (r.t < skip) continue;
    const double e = r.tip(i) - ref(r.t).x(i);
    sum += e * e;
    ++n;
  }
  return std::sqrt(sum / n);
}

AdaptiveState scaledEstimate(const FingerModel& m, double c) {
  AdaptiveState est;
  est.theta_d = c * m.dyn.asVector();
  est.theta_k = m.kin.asVector();
  return est;
}

}  // namespace

TEST(SinusoidReference, Derivatives) {
  const SinusoidReference ref;
  const double t = 0.37, h = 1e-6;
  const JointReference r = ref(t);
  EXPECT_NEAR(r.q(0), 0.8 + 0.4 * std::sin(2 * t), 1e-15);
  EXPECT_NEAR(r.qdot(1), (ref(t + h).q(1) - ref(t - h).q(1)) / (2 * h), 1e-8);
  EXPECT_NEAR(r.qddot(0), (ref(t + h).qdot(0) - ref(t - h).qdot(0)) / (2 * h), 1e-7);
}

TEST(EllipseReference, DefaultCurve) {
  const EllipseReference ref;
  const TaskReference r = ref(0.0);
  EXPECT_NEAR(r.x(0), 0.062, 1e-15);
  EXPECT_NEAR(r.x(1), 0.113 + 0.0265 * std::sin(1.57), 1e-15);
  const double h = 1e-6;
  EXPECT_NEAR(ref(1.0).xdot(1), (ref(1.0 + h).x(1) - ref(1.0 - h).x(1)) / (2 * h), 1e-9);
}

TEST(SlidingReference, Identity) {
  const Vector2 q(0.3, 0.9), qd(-0.2, 0.5);
  const JointReference r = SinusoidReference{}(0.4);
  const Vector2 lambda(10, 7);
  const SlidingReference s = sliding_reference(q, qd, r, lambda);
  EXPECT_LT((s.s - ((qd - r.qdot) + lambda.cwiseProduct(q - r.q))).norm(), 1e-14);
  EXPECT_LT((s.qr_dot + s.s - qd).norm(), 1e-14);
}

TEST(AdaptiveSlidingTorque, OnReferenceFreezesAdaptation) {
  const FingerModel m;
  const JointReference r = SinusoidReference{}(1.3);
  const AdaptiveLaw law = adaptive_sliding_torque(r.q, r.qdot, r, JointGains{}, scaledEstimate(m, 0.7), m.kin, kGravity);
  EXPECT_LT(law.s.norm(), 1e-15);
  EXPECT_LT(law.theta_d_dot.norm(), 1e-15);
  EXPECT_LT(law.F_ext_dot.norm(), 1e-15);
}

TEST(AdaptiveSlidingTorque, ExactModelAtRestHoldsEquilibrium) {
  const FingerModel m;
  JointReference r;
  r.q = Vector2(0.6, 0.4);
  const AdaptiveLaw law = adaptive_sliding_torque(r.q, Vector2::Zero(), r, JointGains{}, scaledEstimate(m, 1.0), m.kin,
                                                  kGravity);
  const auto d = soft_dynamics<double>(r.q, Vector2::Zero(), m.dyn, m.kin, kGravity);
  EXPECT_LT((law.tau - (d.G + m.dyn.stiffness() * r.q)).norm(), 1e-12);
}

TEST(LyapunovValue, ZeroAtMatchedRest) {
  const Matrix2 M = Matrix2::Identity();
  EXPECT_EQ(lyapunov_value(Vector2::Zero(), Vector6::Zero(), Vector2::Zero(), Vector2::Zero(), M, JointGains{}), 0.0);
  EXPECT_GT(lyapunov_value(Vector2(0, 1e-3), Vector6::Zero(), Vector2::Zero(), Vector2::Zero(), M, JointGains{}), 0.0);
  EXPECT_GT(lyapunov_value(Vector2::Zero(), Vector6::Zero(), Vector2(0.1, 0), Vector2::Zero(), M, JointGains{}), 0.0);
}

TEST(JointAdaptive, MatchedLyapunovNonIncreasing) {
  const FingerModel m;
  SimConfig cfg;
  cfg.duration = 5.0;
  cfg.filter_cutoff = 0.0;
  cfg.clamp_pressure = false;
  const JointGains gains;
  const SinusoidReference ref;
  AdaptiveJointController c(gains, ref, scaledEstimate(m, 0.7), m.kin, m.act, kGravity);
  const Trajectory t = simulate(c, m, {}, cfg);
  const auto V = lyapunov_trace(t, m, gains, ref, kGravity);
  for (std::size_t k = 1; k < V.size(); ++k) ASSERT_LE(V[k] - V[k - 1], 1e-6) << "step " << k;
  EXPECT_LT(V.back(), V.front());
}

TEST(JointAdaptive, TracksSinusoid) {
  const FingerModel m;
  SimConfig cfg;
  cfg.duration = 10.0;
  AdaptiveJointController c(JointGains{}, SinusoidReference{}, scaledEstimate(m, 0.7), m.kin, m.act, kGravity);
  const Trajectory t = simulate(c, m, {}, cfg);
  EXPECT_LE(rmse(t, 0, 3.0), 0.05);
  EXPECT_LE(rmse(t, 1, 3.0), 0.05);
  for (const auto& r : t.records) {
    for (double e : r.estimates) ASSERT_TRUE(std::isfinite(e) && std::abs(e) < 10.0);
  }
}

TEST(PIDTorque, ZeroErrorZeroTorque) {
  EXPECT_EQ(pid_torque(Vector2::Zero(), Vector2::Zero(), Vector2::Zero(), PIDGains{}), Vector2::Zero());
  const Vector2 tau = pid_torque(Vector2(0.1, 0), Vector2(0, 0.2), Vector2(0, 1), PIDGains{});
  EXPECT_NEAR(tau(0), -0.003, 1e-15);
  EXPECT_NEAR(tau(1), -(1.2 * 0.2 + 0.0005), 1e-15);
}

TEST(PIDJointController, IntegralIsClamped) {
  PIDGains g;
  g.integral_limit = 0.05;
  PIDJointController c(g, SinusoidReference{}, {});
  Measurement m;
  m.q = Vector2(-5, -5);
  for (int k = 0; k < 100; ++k) {
    c.compute(m);
    c.advance(0.01);
  }
  EXPECT_DOUBLE_EQ(c.estimates()[0], -0.05);
  EXPECT_DOUBLE_EQ(c.estimates()[1], -0.05);
}

TEST(InvertJacobian, RegularAndDamped) {
  Matrix2 J;
  J << 1, 2, 3, 5;
  const auto r = invert_jacobian(J);
  EXPECT_FALSE(r.damped);
  EXPECT_LT((r.inverse * J - Matrix2::Identity()).norm(), 1e-14);
  const FingerModel m;
  const auto s = invert_jacobian(task_jacobian<double>(Vector2::Zero(), m.kin));
  EXPECT_TRUE(s.damped);
  EXPECT_TRUE(s.inverse.allFinite());
}

TEST(CartesianAdaptivePressure, OnReferenceFreezesAdaptation) {
  const FingerModel m;
  const Vector2 q(0.5, 0.6), qd(0.3, -0.2);
  const Matrix2 J = task_jacobian<double>(q, m.kin);
  TaskReference r;
  r.x = fk_tip<double>(q, m.kin).position();
  r.xdot = J * qd;
  const auto law = cartesian_adaptive_pressure(r.x, r.xdot, r, q, qd, CartesianGains{}, scaledEstimate(m, 0.7), m.act,
                                               kGravity);
  EXPECT_LT(law.s.norm(), 1e-12);
  EXPECT_LT(law.theta_d_dot.norm(), 1e-12);
  EXPECT_LT(law.theta_k_dot.norm(), 1e-12);
  EXPECT_LT(law.F_ext_dot.norm(), 1e-12);
}

TEST(FeedbackLinearization, ExactModelTracksEllipse) {
  FingerModel m;
  m.placement.base = Vector2(0.06, 0.0);
  SimConfig cfg;
  cfg.duration = 6.0;
  cfg.dt = 1e-4;
  cfg.substeps = 1;
  cfg.log_every = 10;
  cfg.clamp_pressure = false;
  cfg.filter_cutoff = 0.0;
  const EllipseReference ref;
  FeedbackLinearizationController c(50.0, 10.0, ref, {m.dyn, m.kin, m.act}, m.placement, cfg.gravity);
  InitialState init;
  init.q = Vector2(0.459, 0.571);
  const Trajectory t = simulate(c, m, {}, cfg, init);
  EXPECT_LT(taskRmse(t, ref, 0, 3.0), 5e-4);
  EXPECT_LT(taskRmse(t, ref, 1, 3.0), 5e-4);
}

TEST(FeedbackLinearization, ExactModelHoldsPose) {
  const FingerModel m;
  const Vector2 q(0.7, 0.5);
  TaskReference r;
  r.x = fk_tip<double>(q, m.kin).position();
  const auto law = fblin_torque(q, Vector2::Zero(), r.x, Vector2::Zero(), r, {m.dyn, m.kin, m.act}, 50, 10, kGravity);
  const auto d = soft_dynamics<double>(q, Vector2::Zero(), m.dyn, m.kin, kGravity);
  EXPECT_LT((law.tau - d.G - m.dyn.stiffness() * q).norm(), 1e-12);
}

// Parameter adaptation is nearly frozen so the force estimate is the only
// channel that can absorb the load.
TEST(CartesianAdaptive, EstimatesConstantForce) {
  FingerModel m;
  m.placement.base = Vector2(0.06, 0.0);
  SimConfig cfg;
  cfg.duration = 15.0;
  cfg.dt = 1e-4;
  cfg.substeps = 1;
  cfg.log_every = 10;
  cfg.clamp_pressure = false;
  ForceScenario f;
  f.constant_tip_force = Vector2(0.0, -0.2);
  const EllipseReference ref;
  CartesianGains g;
  g.L_d = 1e-9;
  g.L_k = 1e-9;
  CartesianAdaptiveController c(g, ref, scaledEstimate(m, 1.0), m.act, m.placement, cfg.gravity);
  InitialState init;
  init.q = Vector2(0.459, 0.571);
  const Trajectory t = simulate(c, m, f, cfg, init);
  Vector2 F = Vector2::Zero();
  int n = 0;
  for (const auto& r : t.records) {
    if (r.t < 5.0) continue;
    F += m.placement.vectorToWorld(Vector2(r.estimates[8], r.estimates[9]));
    ++n;
  }
  F /= n;
  EXPECT_NEAR(F(1), -0.2, 0.02);
  EXPECT_NEAR(F(0), 0.0, 0.02);
  EXPECT_LT(taskRmse(t, ref, 0, 3.0), 3e-3);
  EXPECT_LT(taskRmse(t, ref, 1, 3.0), 3e-3);
}
