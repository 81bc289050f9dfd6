#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "softgrip/coop.hpp"

using namespace softgrip;

namespace {

const Vector2 kGravity(0.0, -9.81);

FingerPair truePair() {
  CoopConfig c;
  return c.truth;
}

Vector4 randomCurvature(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 1.8);
  return Vector4(u(rng), u(rng), u(rng), u(rng));
}

Vector4 randomRate(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return Vector4(u(rng), u(rng), u(rng), u(rng));
}

// Shared across tests; a short grasp run with the default configuration.
const CoopResult& shortRun() {
  static const CoopResult r = [] {
    CoopConfig c;
    c.sim.duration = 2.0;
    return coop_simulate(c);
  }();
  return r;
}

}  // namespace

TEST(ShapedLocked, MatrixExample) {
  const auto z = shaped_locked_transform(Vector4(0.03, 0.08, 0.01, 0.06));
  EXPECT_NEAR(z.X_L(0), 0.02, 1e-16);
  EXPECT_NEAR(z.X_L(1), 0.07, 1e-16);
  EXPECT_NEAR(z.X_E(0), 0.02, 1e-16);
  EXPECT_NEAR(z.X_E(1), 0.02, 1e-16);
}

TEST(ShapedLocked, RoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int k = 0; k < 100; ++k) {
    const Vector4 tips(u(rng), u(rng), u(rng), u(rng));
    EXPECT_LT((shaped_locked_inverse(shaped_locked_transform(tips)) - tips).cwiseAbs().maxCoeff(), 1e-16);
  }
}

TEST(ShapedLocked, SwappingFingersNegatesShape) {
  const Vector4 tips(0.03, 0.08, 0.01, 0.06);
  const Vector4 swapped(0.01, 0.06, 0.03, 0.08);
  const auto a = shaped_locked_transform(tips), b = shaped_locked_transform(swapped);
  EXPECT_EQ(a.X_L, b.X_L);
  EXPECT_EQ(a.X_E, -b.X_E);
}

TEST(GripperLayout, MirrorSymmetry) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  const Vector4 q(0.8, 0.5, 0.8, 0.5);
  const Vector4 tips = gripper_tips(q, p.kin, layout);
  EXPECT_NEAR(tips(0) - layout.midline, layout.midline - tips(2), 1e-15);
  EXPECT_NEAR(tips(1), tips(3), 1e-15);
  EXPECT_NEAR(layout.finger(0).base(0) - layout.finger(1).base(0), 0.20, 1e-15);
  EXPECT_THROW((GripperLayout{-0.1, 0, 0, 0}.validate()), ConfigError);
}

TEST(BlockJacobian, MatchesFiniteDifference) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(11);
  const double h = 1e-7;
  for (int k = 0; k < 20; ++k) {
    const Vector4 q = randomCurvature(rng);
    const Matrix4 J = block_jacobian(q, p.kin, layout);
    for (int j = 0; j < 4; ++j) {
      Vector4 dq = Vector4::Zero();
      dq(j) = h;
      const Vector4 fd = (gripper_tips(q + dq, p.kin, layout) - gripper_tips(q - dq, p.kin, layout)) / (2 * h);
      EXPECT_LT((J.col(j) - fd).norm(), 1e-6 * J.col(j).norm());
    }
    EXPECT_EQ(J.topRightCorner(2, 2).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(J.bottomLeftCorner(2, 2).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(BlockJacobian, DotMatchesFiniteDifference) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(12);
  const double h = 1e-6;
  const Vector4 q = randomCurvature(rng), qd = randomRate(rng);
  const Matrix4 fd = (block_jacobian(q + h * qd, p.kin, layout) - block_jacobian(q - h * qd, p.kin, layout)) / (2 * h);
  EXPECT_LT((block_jacobian_dot(q, qd, p.kin, layout) - fd).norm(), 1e-6 * fd.norm());
}

TEST(TransformedDynamics, InertiaSymmetricPositiveDefinite) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(13);
  for (int k = 0; k < 50; ++k) {
    const auto d = transformed_dynamics(randomCurvature(rng), randomRate(rng), p, layout, kGravity);
    EXPECT_LT((d.M - d.M.transpose()).norm(), 1e-12 * d.M.norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix4>(d.M).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(TransformedDynamics, SkewSymmetry) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(14);
  const double h = 1e-6;
  for (int k = 0; k < 20; ++k) {
    const Vector4 q = randomCurvature(rng), qd = randomRate(rng);
    const auto d = transformed_dynamics(q, qd, p, layout, kGravity);
    const Matrix4 Mdot = (transformed_dynamics(q + h * qd, qd, p, layout, kGravity).M -
                          transformed_dynamics(q - h * qd, qd, p, layout, kGravity).M) /
                         (2 * h);
    const Matrix4 N = Mdot - 2 * d.C;
    EXPECT_LT((N + N.transpose()).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(TransformedDynamics, MatchesJointSpaceMotion) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(15);
  const Vector4 q = randomCurvature(rng), qd = randomRate(rng);
  const Vector4 qdd = 10 * randomRate(rng);
  const auto d = transformed_dynamics(q, qd, p, layout, kGravity);
  Vector4 tau;
  for (int i = 0; i < 2; ++i) {
    const Vector2 g = layout.finger(i).vectorToLocal(kGravity);
    const auto m = soft_dynamics<double>(q.segment<2>(2 * i), qd.segment<2>(2 * i), p.dyn[i], p.kin[i], g);
    tau.segment<2>(2 * i) = m.M * qdd.segment<2>(2 * i) + (m.C + p.dyn[i].damping()) * qd.segment<2>(2 * i) + m.G +
                            p.dyn[i].stiffness() * q.segment<2>(2 * i);
  }
  const Vector4 zd = d.T * qd;
  const Vector4 zdd = d.T * qdd + shaped_locked_matrix() * block_jacobian_dot(q, qd, p.kin, layout) * qd;
  const Vector4 W = d.M * zdd + d.C * zd + d.N;
  EXPECT_LT((d.T.transpose() * W - tau).norm(), 1e-10 * tau.norm());
}

TEST(CoopRegressor, ReproducesBlockDiagonalModel) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(16);
  for (int k = 0; k < 20; ++k) {
    const Vector4 q = randomCurvature(rng), qd = randomRate(rng);
    const Vector4 zr_dot = 0.05 * randomRate(rng), zr_ddot = randomRate(rng);
    const auto d = transformed_dynamics(q, qd, p, layout, kGravity);
    Matrix4 Mb = d.M;
    Mb.topRightCorner<2, 2>().setZero();
    Mb.bottomLeftCorner<2, 2>().setZero();
    const Vector4 expected = Mb * zr_ddot + d.C * zr_dot + d.N;
    Vector12 theta;
    theta << p.dyn[0].asVector(), p.dyn[1].asVector();
    const Vector4 got = coop_regressor(q, qd, zr_dot, zr_ddot, p.kin, layout, kGravity) * theta;
    EXPECT_LT((got - expected).norm(), 1e-10 * expected.norm());
  }
}

TEST(LockedKinRegressor, MatchesLockedVelocity) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(17);
  const Vector4 q = randomCurvature(rng), qd = randomRate(rng);
  const Vector4 zd = shaped_locked_matrix() * block_jacobian(q, p.kin, layout) * qd;
  const Vector4 L(p.kin[0].L1, p.kin[0].L2, p.kin[1].L1, p.kin[1].L2);
  EXPECT_LT((locked_kin_regressor(q, qd, layout) * L - zd.head<2>()).norm(), 1e-14);
}

TEST(GripForce, Example) {
  const auto f = grip_force(Vector4(0.0, 0.05, 0.02, 0.05), 50.0);
  EXPECT_NEAR(f[0](0), 1.0, 1e-15);
  EXPECT_NEAR(f[0](1), 0.0, 1e-15);
  EXPECT_NEAR(f[1](0), -1.0, 1e-15);
  EXPECT_EQ(grip_force(Vector4(0.1, 0.2, 0.1, 0.2), 50.0)[0], Vector2::Zero());
  EXPECT_THROW(grip_force(Vector4::Zero(), -1.0), DomainError);
}

TEST(GripForce, Antisymmetric) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int k = 0; k < 100; ++k) {
    const auto f = grip_force(Vector4(u(rng), u(rng), u(rng), u(rng)), 80.0);
    EXPECT_EQ(f[0] + f[1], Vector2::Zero());
  }
}

TEST(ForceMapping, PowerInvariance) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(19);
  const Vector4 q = randomCurvature(rng), qd = randomRate(rng), W = randomRate(rng);
  const Matrix4 T = shaped_locked_matrix() * block_jacobian(q, p.kin, layout);
  const Vector4 tau = T.transpose() * W;
  EXPECT_NEAR(tau.dot(qd), W.dot(T * qd), 1e-14);
}

TEST(ForceMapping, TorqueReprojection) {
  const GripperLayout layout;
  const FingerPair p = truePair();
  std::mt19937_64 rng(20);
  for (int k = 0; k < 20; ++k) {
    const Vector4 q = randomCurvature(rng), W = randomRate(rng);
    const auto d = transformed_dynamics(q, Vector4::Zero(), p, layout, kGravity);
    ASSERT_FALSE(d.damped);
    EXPECT_LT((d.T_inv.transpose() * (d.T.transpose() * W) - W).norm(), 1e-10);
  }
}

TEST(SubsystemError, SlidingIdentity) {
  TaskReference r;
  r.x = Vector2(0.01, 0.02);
  r.xdot = Vector2(0.1, 0.0);
  const auto e = subsystem_error(Vector2(0.012, 0.018), Vector2(0.09, 0.01), r, 20.0);
  EXPECT_LT((e.s - (e.edot + 20.0 * e.e)).norm(), 1e-15);
  EXPECT_LT((Vector2(0.09, 0.01) - e.zr_dot - e.s).norm(), 1e-15);
}

TEST(LockedControl, ZeroErrorFreezesAdaptation) {
  const SubsystemError err;
  Mat2x12 Y = Mat2x12::Random();
  const auto law = locked_control(err, Y, Mat2x4::Random(), LockedGains{}, Vector12::Ones(), Vector2(0.1, 0.2));
  EXPECT_EQ(law.theta_d_dot, Vector12::Zero());
  EXPECT_EQ(law.theta_k_dot, Vector4::Zero());
  EXPECT_EQ(law.F_dot, Vector2::Zero());
  EXPECT_LT((law.T_L - (Y * Vector12::Ones() - Vector2(0.1, 0.2))).norm(), 1e-14);
  const auto shaped = shaped_control(err, Y, ShapedGains{}, Vector12::Ones(), Vector2::Zero());
  EXPECT_EQ(shaped.theta_d_dot, Vector12::Zero());
  EXPECT_EQ(shaped.F_dot, Vector2::Zero());
}

TEST(GraspReference, Values) {
  const GraspReference ref;
  EXPECT_NEAR(ref.locked(0.0).x(1), 0.081, 1e-15);
  EXPECT_NEAR(ref.locked(0.5).x(0), 0.010 + 0.010 * std::sin(1.5), 1e-15);
  EXPECT_EQ(ref.shaped(3.0).x, Vector2(0.020, 0.0));
  EXPECT_EQ(ref.shaped(3.0).xdot, Vector2::Zero());
}

TEST(GraspInitialCurvature, TipsStartOnReference) {
  const CoopConfig c;
  const Vector4 q = grasp_initial_curvature(c);
  const auto z = shaped_locked_transform(gripper_tips(q, c.truth.kin, c.layout));
  EXPECT_LT((z.X_L - c.ref.locked(0).x).norm(), 1e-12);
  EXPECT_LT((z.X_E - c.ref.shaped(0).x).norm(), 1e-12);
}

TEST(CoopSimulate, DisturbanceStartsAfterOneSecond) {
  const CoopResult& r = shortRun();
  const CoopConfig c;
  const Vector2 weight = 0.5 * c.grip.mass * c.sim.gravity;
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const Vector2 f1 = r.finger[0].records[k].force, f2 = r.finger[1].records[k].force;
    const Vector2 expected = 2 * weight + (r.records[k].t >= 1.0 ? Vector2(2 * c.disturbance) : Vector2::Zero());
    ASSERT_LT((f1 + f2 - expected).norm(), 1e-12) << "t=" << r.records[k].t;
  }
}

TEST(CoopSimulate, ObjectCenterIsLockedState) {
  for (const auto& rec : shortRun().records) {
    ASSERT_EQ(rec.object_center, rec.z.X_L);
  }
}

TEST(CoopSimulate, GripForcesAntisymmetric) {
  const CoopResult& r = shortRun();
  const CoopConfig c;
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const auto f = grip_force(Vector4(r.finger[0].records[k].tip(0), r.finger[0].records[k].tip(1),
                                      r.finger[1].records[k].tip(0), r.finger[1].records[k].tip(1)),
                              c.grip.K_s);
    ASSERT_LE((f[0] + f[1]).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_EQ(f[0], r.records[k].grip);
  }
}

TEST(CoopSimulate, TracksWhileGrasping) {
  for (const auto& rec : shortRun().records) {
    ASSERT_LT((rec.z.X_E - rec.z_ref.X_E).norm(), 0.01) << "t=" << rec.t;
    ASSERT_LT((rec.z.X_L - rec.z_ref.X_L).norm(), 0.01) << "t=" << rec.t;
  }
}

TEST(CoopConfig, RejectsBadValues) {
  CoopConfig c;
  c.grip.mass = 0.0;
  EXPECT_THROW(coop_simulate(c), ConfigError);
  c = CoopConfig();
  c.gains.locked.lambda = -1.0;
  EXPECT_THROW(coop_simulate(c), ConfigError);
}

TEST(CoopCsv, Header) {
  std::ostringstream os;
  write_coop_csv(os, shortRun());
  const std::string s = os.str();
  const std::string header = s.substr(0, s.find('\n'));
  EXPECT_EQ(header.rfind("t,XL_x,XL_y,XE_x,XE_y,", 0), 0u) << header;
  EXPECT_NE(header.find("TL_x,TL_y,TE_x,TE_y,grip_fx,grip_fy"), std::string::npos);
  std::ostringstream again;
  write_coop_csv(again, shortRun());
  EXPECT_EQ(s, again.str());
}
