#include "softgrip/coop.hpp"

#include <cmath>
#include <ostream>

namespace softgrip {

namespace {

Vector2 segmentOf(const Vector4& v, int i) { return v.segment<2>(2 * i); }

void requirePositive(double v, const char* what) {
  if (!(v > 0.0 && std::isfinite(v))) throw ConfigError(std::string(what) + " must be positive");
}

struct BlockInverse {
  Matrix4 J_inv = Matrix4::Zero();
  bool damped = false;
};

BlockInverse invertBlocks(const Matrix4& J) {
  BlockInverse r;
  for (int i = 0; i < 2; ++i) {
    const JacobianInverse b = invert_jacobian(J.block<2, 2>(2 * i, 2 * i));
    r.J_inv.block<2, 2>(2 * i, 2 * i) = b.inverse;
    r.damped = r.damped || b.damped;
  }
  return r;
}

Matrix4 shapedLockedInverseMatrix() {
  Matrix4 S_inv;
  S_inv << 1, 0, 0.5, 0,
           0, 1, 0, 0.5,
           1, 0, -0.5, 0,
           0, 1, 0, -0.5;
  return S_inv;
}

// Joint-space M, C and N for both fingers stacked block-diagonally.
struct JointBlocks {
  Matrix4 M = Matrix4::Zero();
  Matrix4 C = Matrix4::Zero();
  Vector4 N = Vector4::Zero();
};

JointBlocks jointBlocks(const Vector4& q, const Vector4& qdot, const FingerPair& p, const GripperLayout& layout,
                        const Vector2& gravity_world) {
  JointBlocks b;
  for (int i = 0; i < 2; ++i) {
    const Vector2 qi = segmentOf(q, i), qdi = segmentOf(qdot, i);
    const Vector2 g = layout.finger(i).vectorToLocal(gravity_world);
    const auto d = soft_dynamics<double>(qi, qdi, p.dyn[i], p.kin[i], g);
    b.M.block<2, 2>(2 * i, 2 * i) = d.M;
    b.C.block<2, 2>(2 * i, 2 * i) = d.C;
    b.N.segment<2>(2 * i) = d.G + p.dyn[i].damping() * qdi + p.dyn[i].stiffness() * qi;
  }
  return b;
}

}  // namespace

void GripperLayout::validate() const {
  requirePositive(separation, "separation");
  if (!std::isfinite(midline) || !std::isfinite(base_y) || !std::isfinite(tilt)) {
    throw ConfigError("gripper layout must be finite");
  }
}

FingerPlacement GripperLayout::finger(int i) const {
  if (i == 0) return {Vector2(midline + separation / 2, base_y), tilt, false};
  return {Vector2(midline - separation / 2, base_y), -tilt, true};
}

Matrix4 shaped_locked_matrix() {
  Matrix4 S;
  S << 0.5, 0, 0.5, 0,
       0, 0.5, 0, 0.5,
       1, 0, -1, 0,
       0, 1, 0, -1;
  return S;
}

ShapedLockedState shaped_locked_transform(const Vector4& tips) {
  const Vector4 z = shaped_locked_matrix() * tips;
  return {z.head<2>(), z.tail<2>()};
}

Vector4 shaped_locked_inverse(const ShapedLockedState& z) {
  Vector4 v;
  v << z.X_L, z.X_E;
  return shapedLockedInverseMatrix() * v;
}

Vector4 gripper_tips(const Vector4& q, const std::array<KinematicParams<double>, 2>& kin, const GripperLayout& layout) {
  Vector4 tips;
  for (int i = 0; i < 2; ++i) {
    tips.segment<2>(2 * i) = layout.finger(i).pointToWorld(fk_tip<double>(segmentOf(q, i), kin[i]).position());
  }
  return tips;
}

Matrix4 block_jacobian(const Vector4& q, const std::array<KinematicParams<double>, 2>& kin,
                       const GripperLayout& layout) {
  Matrix4 J = Matrix4::Zero();
  for (int i = 0; i < 2; ++i) {
    J.block<2, 2>(2 * i, 2 * i) = layout.finger(i).frame() * task_jacobian<double>(segmentOf(q, i), kin[i]);
  }
  return J;
}

Matrix4 block_jacobian_dot(const Vector4& q, const Vector4& qdot, const std::array<KinematicParams<double>, 2>& kin,
                           const GripperLayout& layout) {
  Matrix4 J = Matrix4::Zero();
  for (int i = 0; i < 2; ++i) {
    J.block<2, 2>(2 * i, 2 * i) =
        layout.finger(i).frame() * task_jacobian_dot<double>(segmentOf(q, i), segmentOf(qdot, i), kin[i]);
  }
  return J;
}

TransformedDynamics transformed_dynamics(const Vector4& q, const Vector4& qdot, const FingerPair& params,
                                         const GripperLayout& layout, const Vector2& gravity_world) {
  const Matrix4 J = block_jacobian(q, params.kin, layout);
  const Matrix4 Jdot = block_jacobian_dot(q, qdot, params.kin, layout);
  const BlockInverse Ji = invertBlocks(J);
  const JointBlocks b = jointBlocks(q, qdot, params, layout, gravity_world);

  TransformedDynamics d;
  d.T = shaped_locked_matrix() * J;
  d.T_inv = Ji.J_inv * shapedLockedInverseMatrix();
  d.damped = Ji.damped;
  const Matrix4 Tdot = shaped_locked_matrix() * Jdot;
  d.M = d.T_inv.transpose() * b.M * d.T_inv;
  d.C = d.T_inv.transpose() * (b.C - b.M * d.T_inv * Tdot) * d.T_inv;
  d.N = d.T_inv.transpose() * b.N;
  return d;
}

Mat4x12 coop_regressor(const Vector4& q, const Vector4& qdot, const Vector4& zr_dot, const Vector4& zr_ddot,
                       const std::array<KinematicParams<double>, 2>& kin, const GripperLayout& layout,
                       const Vector2& gravity_world) {
  const Matrix4 J = block_jacobian(q, kin, layout);
  const Matrix4 Tdot = shaped_locked_matrix() * block_jacobian_dot(q, qdot, kin, layout);
  const Matrix4 T_inv = invertBlocks(J).J_inv * shapedLockedInverseMatrix();
  const Matrix4 T_invT = T_inv.transpose();
  const Vector4 qr_dot = T_inv * zr_dot;
  const Vector4 corr = T_inv * Tdot * qr_dot;

  Mat4x12 Y = Mat4x12::Zero();
  for (int i = 0; i < 2; ++i) {
    const Vector2 qi = segmentOf(q, i), qdi = segmentOf(qdot, i);
    const Vector2 g = layout.finger(i).vectorToLocal(gravity_world);
    for (int j = 0; j < 2; ++j) {
      DynamicParams<double> unit;
      unit.m1 = j == 0 ? 1.0 : 0.0;
      unit.m2 = j == 1 ? 1.0 : 0.0;
      const auto d = soft_dynamics<double>(qi, qdi, unit, kin[i], g);
      Matrix4 Mq = Matrix4::Zero(), Cq = Matrix4::Zero();
      Vector4 Gq = Vector4::Zero();
      Mq.block<2, 2>(2 * i, 2 * i) = d.M;
      Cq.block<2, 2>(2 * i, 2 * i) = d.C;
      Gq.segment<2>(2 * i) = d.G;
      Matrix4 Mz = T_invT * Mq * T_inv;
      Mz.topRightCorner<2, 2>().setZero();
      Mz.bottomLeftCorner<2, 2>().setZero();
      Y.col(6 * i + j) = Mz * zr_ddot + T_invT * (Cq * qr_dot - Mq * corr + Gq);
    }
    for (int j = 0; j < 2; ++j) {
      Y.col(6 * i + 2 + j) = T_invT.col(2 * i + j) * qi(j);
      Y.col(6 * i + 4 + j) = T_invT.col(2 * i + j) * qdi(j);
    }
  }
  return Y;
}

Mat2x4 locked_kin_regressor(const Vector4& q, const Vector4& qdot, const GripperLayout& layout) {
  Mat2x4 Y;
  for (int i = 0; i < 2; ++i) {
    Y.block<2, 2>(0, 2 * i) = 0.5 * layout.finger(i).frame() * kin_regressor<double>(segmentOf(q, i), segmentOf(qdot, i));
  }
  return Y;
}

std::array<Vector2, 2> grip_force(const Vector4& tips, double K_s) {
  if (!(K_s >= 0.0)) throw DomainError("grip stiffness must be non-negative");
  const Vector2 d = tips.segment<2>(2) - tips.segment<2>(0);
  return {K_s * d, -K_s * d};
}

void CoopGains::validate() const {
  for (double v : {locked.k_p, locked.k_v, locked.Gamma_k, locked.Gamma_d, locked.P, locked.lambda, shaped.k,
                   shaped.k_d, shaped.Gamma_d, shaped.P, shaped.lambda}) {
    requirePositive(v, "cooperative gains");
  }
}

SubsystemError subsystem_error(const Vector2& X, const Vector2& Xdot, const TaskReference& ref, double lambda) {
  SubsystemError r;
  r.e = X - ref.x;
  r.edot = Xdot - ref.xdot;
  r.s = r.edot + lambda * r.e;
  r.zr_dot = ref.xdot - lambda * r.e;
  r.zr_ddot = ref.xddot - lambda * r.edot;
  return r;
}

LockedLaw locked_control(const SubsystemError& err, const Mat2x12& Y_Lr, const Mat2x4& Y_Lk, const LockedGains& g,
                         const Vector12& theta_d, const Vector2& F_L) {
  LockedLaw law;
  const Vector2 pd = g.k_v * err.edot + g.k_p * err.e;
  law.T_L = Y_Lr * theta_d - pd - F_L;
  law.theta_d_dot = -g.Gamma_d * (Y_Lr.transpose() * err.s);
  law.theta_k_dot = g.Gamma_k * (Y_Lk.transpose() * pd);
  law.F_dot = err.s / g.P;
  return law;
}

ShapedLaw shaped_control(const SubsystemError& err, const Mat2x12& Y_Er, const ShapedGains& g,
                         const Vector12& theta_d, const Vector2& F_E) {
  ShapedLaw law;
  law.T_E = Y_Er * theta_d - g.k_d * err.s - g.k * err.e - F_E;
  law.theta_d_dot = -g.Gamma_d * (Y_Er.transpose() * err.s);
  law.F_dot = err.s / g.P;
  return law;
}

TaskReference GraspReference::locked(double t) const {
  const double s = std::sin(omega * t), c = std::cos(omega * t);
  TaskReference r;
  r.x = center + amplitude * s;
  r.xdot = amplitude * omega * c;
  r.xddot = -amplitude * omega * omega * s;
  return r;
}

TaskReference GraspReference::shaped(double) const {
  TaskReference r;
  r.x = X_E;
  return r;
}

bool CoopEstimates::finite() const {
  return theta_Ld.allFinite() && theta_Ed.allFinite() && theta_Lk.allFinite() && F_L.allFinite() &&
         F_E.allFinite();
}

std::vector<std::string> CoopEstimates::names() {
  std::vector<std::string> n;
  const char* p[] = {"m1", "m2", "K1", "K2", "D1", "D2"};
  for (const char* sys : {"L", "E"}) {
    for (int f = 1; f <= 2; ++f) {
      for (const char* name : p) n.push_back(std::string(name) + "_f" + std::to_string(f) + "_" + sys);
    }
  }
  for (const char* name : {"L1_f1", "L2_f1", "L1_f2", "L2_f2"}) n.push_back(std::string(name) + "_hat");
  for (const char* name : {"FL_x", "FL_y", "FE_x", "FE_y"}) n.push_back(std::string(name) + "_hat");
  return n;
}

std::vector<double> CoopEstimates::values() const {
  std::vector<double> v;
  v.insert(v.end(), theta_Ld.data(), theta_Ld.data() + 12);
  v.insert(v.end(), theta_Ed.data(), theta_Ed.data() + 12);
  v.insert(v.end(), theta_Lk.data(), theta_Lk.data() + 4);
  v.insert(v.end(), {F_L(0), F_L(1), F_E(0), F_E(1)});
  return v;
}

CoopController::CoopController(const CoopGains& gains, const GraspReference& ref, const CoopEstimates& initial,
                               const std::array<ActuationMap<double>, 2>& act, const GripperLayout& layout,
                               const Vector2& gravity_world)
    : gains_(gains), ref_(ref), est_(initial), act_(act), layout_(layout), gravity_(gravity_world) {
  gains_.validate();
  layout_.validate();
}

CoopCommand CoopController::compute(double t, const Vector4& q, const Vector4& qdot) {
  const std::array<KinematicParams<double>, 2> kin{KinematicParams<double>{est_.theta_Lk(0), est_.theta_Lk(1)},
                                                   KinematicParams<double>{est_.theta_Lk(2), est_.theta_Lk(3)}};
  const Matrix4 S = shaped_locked_matrix();
  const Matrix4 J = block_jacobian(q, kin, layout_);
  const Vector4 z = S * gripper_tips(q, kin, layout_);
  const Vector4 zdot = S * J * qdot;

  const SubsystemError eL = subsystem_error(z.head<2>(), zdot.head<2>(), ref_.locked(t), gains_.locked.lambda);
  const SubsystemError eE = subsystem_error(z.tail<2>(), zdot.tail<2>(), ref_.shaped(t), gains_.shaped.lambda);
  Vector4 zr_dot, zr_ddot;
  zr_dot << eL.zr_dot, eE.zr_dot;
  zr_ddot << eL.zr_ddot, eE.zr_ddot;

  const Mat4x12 Y = coop_regressor(q, qdot, zr_dot, zr_ddot, kin, layout_, gravity_);
  locked_ = locked_control(eL, Y.topRows<2>(), locked_kin_regressor(q, qdot, layout_), gains_.locked, est_.theta_Ld,
                           est_.F_L);
  shaped_ = shaped_control(eE, Y.bottomRows<2>(), gains_.shaped, est_.theta_Ed, est_.F_E);

  CoopCommand cmd;
  cmd.T_L = locked_.T_L;
  cmd.T_E = shaped_.T_E;
  Vector4 W;
  W << cmd.T_L, cmd.T_E;
  cmd.tau = (S * J).transpose() * W;
  for (int i = 0; i < 2; ++i) cmd.pressure.segment<2>(2 * i) = segmentOf(cmd.tau, i).cwiseQuotient(act_[i].asVector());
  cmd.damped = invertBlocks(J).damped;
  return cmd;
}

void CoopController::advance(double dt) {
  est_.theta_Ld += dt * locked_.theta_d_dot;
  est_.theta_Lk += dt * locked_.theta_k_dot;
  est_.F_L += dt * locked_.F_dot;
  est_.theta_Ed += dt * shaped_.theta_d_dot;
  est_.F_E += dt * shaped_.F_dot;
}

void GripSpec::validate() const {
  requirePositive(side, "object side");
  requirePositive(mass, "object mass");
  if (!(K_s >= 0.0 && std::isfinite(K_s))) throw ConfigError("K_s must be non-negative");
}

CoopConfig::CoopConfig() {
  sim.dt = 1e-4;
  sim.substeps = 1;
  sim.log_every = 10;
  sim.clamp_pressure = false;
}

void CoopConfig::validate() const {
  sim.validate();
  layout.validate();
  grip.validate();
  gains.validate();
  requirePositive(initial_dynamics_scale, "initial_dynamics_scale");
  requirePositive(initial_kinematics_scale, "initial_kinematics_scale");
  if (!disturbance.allFinite() || !std::isfinite(disturbance_on)) throw ConfigError("disturbance must be finite");
}

Vector4 grasp_initial_curvature(const CoopConfig& cfg) {
  const Vector4 tips = shaped_locked_inverse({cfg.ref.locked(0.0).x, cfg.ref.shaped(0.0).x});
  Vector4 q;
  for (int i = 0; i < 2; ++i) {
    const FingerPlacement p = cfg.layout.finger(i);
    const Vector2 target = p.vectorToLocal(segmentOf(tips, i) - p.base);
    try {
      q.segment<2>(2 * i) = inverse_kinematics(target, cfg.truth.kin[i]);
    } catch (const DomainError&) {
      throw ConfigError("grasp reference is out of reach for finger " + std::to_string(i + 1));
    }
  }
  return q;
}

CoopResult coop_simulate(const CoopConfig& cfg) {
  cfg.validate();
  const SimConfig& sc = cfg.sim;
  std::array<FingerModel, 2> model;
  std::array<Vector2, 2> gravity_local;
  for (int i = 0; i < 2; ++i) {
    model[i] = {cfg.truth.dyn[i], cfg.truth.kin[i], cfg.truth.act[i], cfg.layout.finger(i)};
    gravity_local[i] = model[i].placement.vectorToLocal(sc.gravity);
  }

  CoopEstimates init;
  init.theta_Ld << cfg.truth.dyn[0].asVector(), cfg.truth.dyn[1].asVector();
  init.theta_Ld *= cfg.initial_dynamics_scale;
  init.theta_Ed = init.theta_Ld;
  init.theta_Lk << cfg.truth.kin[0].asVector(), cfg.truth.kin[1].asVector();
  init.theta_Lk *= cfg.initial_kinematics_scale;
  CoopController controller(cfg.gains, cfg.ref, init, cfg.truth.act, cfg.layout, sc.gravity);

  const Vector2 weight = 0.5 * cfg.grip.mass * sc.gravity;
  const auto tipForces = [&](double t, const Vector4& tips) {
    const auto grip = grip_force(tips, cfg.grip.K_s);
    const Vector2 dist = t >= cfg.disturbance_on ? cfg.disturbance : Vector2::Zero();
    return std::array<Vector2, 2>{grip[0] + weight + dist, grip[1] + weight + dist};
  };

  using State = Eigen::Matrix<double, 8, 1>;
  State x;
  x << grasp_initial_curvature(cfg), Vector4::Zero();
  const auto derivative = [&](double t, const State& s, const Vector4& tau) {
    const Vector4 q = s.head<4>(), qd = s.tail<4>();
    const auto f = tipForces(t, gripper_tips(q, cfg.truth.kin, cfg.layout));
    State out;
    out.head<4>() = qd;
    for (int i = 0; i < 2; ++i) {
      out.segment<2>(4 + 2 * i) = accel(model[i], segmentOf(q, i), segmentOf(qd, i), segmentOf(tau, i),
                                        model[i].placement.vectorToLocal(f[i]), gravity_local[i]);
    }
    return out;
  };

  std::vector<SensorFilter> filters;
  for (int j = 0; j < 4; ++j) filters.emplace_back(sc.filter_cutoff, sc.dt, sc.noise_std, sc.seed + j);
  for (int j = 0; j < 4; ++j) filters.emplace_back(sc.filter_cutoff, sc.dt);

  CoopResult result;
  const auto abort = [&](const std::string& what) {
    Trajectory partial = result.finger[0];
    throw SimulationAborted(what, std::move(partial));
  };

  const std::size_t n = sc.sampleCount();
  const double dt = sc.dt;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vector4 q = x.head<4>(), qdot = x.tail<4>();
    Vector4 qm, qdm;
    for (int j = 0; j < 4; ++j) {
      qm(j) = filters[j](q(j));
      qdm(j) = filters[4 + j](qdot(j));
    }

    CoopCommand cmd;
    try {
      cmd = controller.compute(t, qm, qdm);
    } catch (const DomainError& e) {
      abort(std::string("controller: ") + e.what() + " at t=" + format_number(t));
    }
    Vector4 pressure = cmd.pressure;
    if (sc.clamp_pressure) pressure = pressure.cwiseMax(0.0).cwiseMin(kMaxPressure);
    Vector4 tau;
    for (int i = 0; i < 2; ++i) tau.segment<2>(2 * i) = cfg.truth.act[i].asVector().cwiseProduct(segmentOf(pressure, i));
    if (!tau.allFinite()) abort("non-finite control command at t=" + format_number(t));

    if (k % static_cast<std::size_t>(sc.log_every) == 0) {
      const Vector4 tips = gripper_tips(q, cfg.truth.kin, cfg.layout);
      const auto f = tipForces(t, tips);
      const State xdot = derivative(t, x, tau);
      for (int i = 0; i < 2; ++i) {
        TrajectoryRecord r;
        r.t = t;
        r.q = segmentOf(q, i);
        r.qdot = segmentOf(qdot, i);
        r.qddot = xdot.segment<2>(4 + 2 * i);
        r.tau = segmentOf(tau, i);
        r.pressure = segmentOf(pressure, i);
        r.tip = segmentOf(tips, i);
        r.force = f[i];
        result.finger[i].records.push_back(std::move(r));
      }
      CoopRecord c;
      c.t = t;
      c.z = shaped_locked_transform(tips);
      c.z_ref = {cfg.ref.locked(t).x, cfg.ref.shaped(t).x};
      c.T_L = cmd.T_L;
      c.T_E = cmd.T_E;
      c.grip = grip_force(tips, cfg.grip.K_s)[0];
      c.object_center = c.z.X_L;
      c.object_angle = std::atan2(c.z.X_E(1), c.z.X_E(0));
      c.estimates = controller.estimates().values();
      result.records.push_back(std::move(c));
    }
    if (k + 1 == n) break;

    const double h = dt / sc.substeps;
    try {
      for (int j = 0; j < sc.substeps; ++j) {
        x = rk4_step(x, t + j * h, h, [&](double ts, const State& s) { return derivative(ts, s, tau); });
      }
    } catch (const DomainError& e) {
      abort(std::string(e.what()) + " at t=" + format_number(t));
    } catch (const SimulationDiverged& e) {
      abort(std::string(e.what()) + " at t=" + format_number(t));
    }
    controller.advance(dt);
    if (!x.allFinite() || x.tail<4>().norm() > 1e3 || !controller.estimates().finite()) {
      abort("simulation diverged at t=" + format_number(t + dt));
    }
  }
  return result;
}

void write_coop_csv(std::ostream& out, const CoopResult& result) {
  out << "t,XL_x,XL_y,XE_x,XE_y,XLd_x,XLd_y,XEd_x,XEd_y,TL_x,TL_y,TE_x,TE_y,grip_fx,grip_fy,obj_x,obj_y,obj_angle";
  for (const auto& name : CoopEstimates::names()) out << ',' << name;
  out << '\n';
  for (const auto& r : result.records) {
    const double row[] = {r.t,          r.z.X_L(0),     r.z.X_L(1),     r.z.X_E(0),          r.z.X_E(1),
                          r.z_ref.X_L(0), r.z_ref.X_L(1), r.z_ref.X_E(0), r.z_ref.X_E(1),      r.T_L(0),
                          r.T_L(1),     r.T_E(0),       r.T_E(1),       r.grip(0),           r.grip(1),
                          r.object_center(0), r.object_center(1), r.object_angle};
    bool first = true;
    for (double v : row) {
      if (!first) out << ',';
      out << format_number(v);
      first = false;
    }
    for (double v : r.estimates) out << ',' << format_number(v);
    out << '\n';
  }
}

}  // namespace softgrip
