#include "softgrip/ctrl.hpp"

#include <cmath>

namespace softgrip {

namespace {

void requirePositive(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if (!((v.array() > 0.0).all() && v.allFinite())) throw ConfigError(std::string(what) + " must be positive");
}

void requirePositive(double v, const char* what) {
  if (!(v > 0.0 && std::isfinite(v))) throw ConfigError(std::string(what) + " must be positive");
}

Vector2 divide(const Vector2& tau, const ActuationMap<double>& act) {
  return tau.cwiseQuotient(act.asVector());
}

std::vector<std::string> adaptiveNames(bool with_lengths) {
  std::vector<std::string> names{"m1_hat", "m2_hat", "K1_hat", "K2_hat", "D1_hat", "D2_hat"};
  if (with_lengths) {
    names.push_back("L1_hat");
    names.push_back("L2_hat");
  }
  names.push_back("Fx_hat");
  names.push_back("Fy_hat");
  return names;
}

std::vector<double> adaptiveValues(const AdaptiveState& est, bool with_lengths) {
  std::vector<double> v(est.theta_d.data(), est.theta_d.data() + 6);
  if (with_lengths) {
    v.push_back(est.theta_k(0));
    v.push_back(est.theta_k(1));
  }
  v.push_back(est.F_ext(0));
  v.push_back(est.F_ext(1));
  return v;
}

}  // namespace

void JointGains::validate() const {
  requirePositive(K_p, "K_p");
  requirePositive(K_v, "K_v");
  requirePositive(L_d, "L_d");
  requirePositive(Lambda, "Lambda");
  requirePositive(P_f, "P_f");
}

void PIDGains::validate() const {
  for (double g : {k_p, k_i, k_d1, k_d2, integral_limit}) {
    if (!std::isfinite(g)) throw ConfigError("PID gains must be finite");
  }
  requirePositive(integral_limit, "integral_limit");
}

void CartesianGains::validate() const {
  requirePositive(K_p, "K_p");
  requirePositive(K_v, "K_v");
  requirePositive(L_d, "L_d");
  requirePositive(L_k, "L_k");
  requirePositive(alpha_s, "alpha_s");
  requirePositive(P_f, "P_f");
}

JointReference SinusoidReference::operator()(double t) const {
  const double a = omega * t + phase;
  JointReference r;
  r.q = Vector2::Constant(offset + amplitude * std::sin(a));
  r.qdot = Vector2::Constant(amplitude * omega * std::cos(a));
  r.qddot = Vector2::Constant(-amplitude * omega * omega * std::sin(a));
  return r;
}

TaskReference EllipseReference::operator()(double t) const {
  TaskReference r;
  for (int i = 0; i < 2; ++i) {
    const double a = omega * t + phase(i);
    r.x(i) = center(i) + amplitude(i) * std::sin(a);
    r.xdot(i) = amplitude(i) * omega * std::cos(a);
    r.xddot(i) = -amplitude(i) * omega * omega * std::sin(a);
  }
  return r;
}

SlidingReference sliding_reference(const Vector2& q, const Vector2& qdot, const JointReference& ref,
                                   const Vector2& Lambda) {
  SlidingReference r;
  r.qr_dot = ref.qdot - Lambda.cwiseProduct(q - ref.q);
  r.qr_ddot = ref.qddot - Lambda.cwiseProduct(qdot - ref.qdot);
  r.s = qdot - r.qr_dot;
  return r;
}

AdaptiveLaw adaptive_sliding_torque(const Vector2& q, const Vector2& qdot, const JointReference& ref,
                                    const JointGains& gains, const AdaptiveState& est,
                                    const KinematicParams<double>& kin, const Vector2& gravity_local) {
  const SlidingReference sr = sliding_reference(q, qdot, ref, gains.Lambda);
  const Mat2x6<double> Yd = dyn_regressor<double>(q, qdot, sr.qr_dot, sr.qr_ddot, kin, gravity_local);
  const Matrix2 J = task_jacobian<double>(q, kin);
  AdaptiveLaw law;
  law.s = sr.s;
  law.tau = Yd * est.theta_d - gains.K_v.cwiseProduct(qdot - ref.qdot) - gains.K_p.cwiseProduct(q - ref.q) -
            J.transpose() * est.F_ext;
  law.theta_d_dot = -gains.L_d.cwiseProduct(Yd.transpose() * sr.s);
  law.F_ext_dot = (J * sr.s).cwiseQuotient(gains.P_f);
  return law;
}

double lyapunov_value(const Vector2& s, const Vector6& dtheta_d, const Vector2& dq, const Vector2& dF,
                      const Matrix2& M, const JointGains& gains) {
  const Vector2 w = gains.K_p + gains.Lambda.cwiseProduct(gains.K_v);
  return 0.5 * s.dot(M * s) + 0.5 * dtheta_d.dot(dtheta_d.cwiseQuotient(gains.L_d)) +
         0.5 * dq.dot(w.cwiseProduct(dq)) + 0.5 * dF.dot(gains.P_f.cwiseProduct(dF));
}

Vector2 pid_torque(const Vector2& dq, const Vector2& integral, const Vector2& dqdot, const PIDGains& gains) {
  return -(gains.k_p * dq + gains.k_i * integral + Vector2(gains.k_d1, gains.k_d2).cwiseProduct(dqdot));
}

JacobianInverse invert_jacobian(const Matrix2& J) {
  JacobianInverse r;
  if (std::abs(J.determinant()) >= 1e-9) {
    r.inverse = J.inverse();
  } else {
    r.inverse = (J.transpose() * J + 1e-6 * Matrix2::Identity()).inverse() * J.transpose();
    r.damped = true;
  }
  return r;
}

Vector2 inverse_kinematics(const Vector2& target, const KinematicParams<double>& kin, const Vector2& guess) {
  Vector2 q = guess;
  for (int it = 0; it < 100; ++it) {
    const Vector2 r = fk_tip<double>(q, kin).position() - target;
    if (r.norm() < 1e-14) break;
    q -= invert_jacobian(task_jacobian<double>(q, kin)).inverse * r;
  }
  if (!q.allFinite() || (fk_tip<double>(q, kin).position() - target).norm() > 1e-10) {
    throw DomainError("tip target is out of reach");
  }
  return q;
}

CartesianLaw cartesian_adaptive_pressure(const Vector2& x, const Vector2& xdot, const TaskReference& ref,
                                         const Vector2& q, const Vector2& qdot, const CartesianGains& gains,
                                         const AdaptiveState& est, const ActuationMap<double>& K_hat,
                                         const Vector2& gravity_local) {
  const auto kin = KinematicParams<double>::fromVector(est.theta_k);
  const Matrix2 J = task_jacobian<double>(q, kin);
  const Matrix2 Jdot = task_jacobian_dot<double>(q, qdot, kin);
  const JacobianInverse Jinv = invert_jacobian(J);

  const Vector2 dx = x - ref.x;
  const Vector2 dxdot = xdot - ref.xdot;
  const Vector2 v = ref.xdot - gains.alpha_s * dx;
  const Vector2 vdot = ref.xddot - gains.alpha_s * dxdot;

  CartesianLaw law;
  law.damped = Jinv.damped;
  law.qr_dot = Jinv.inverse * v;
  const Vector2 qr_ddot = Jinv.inverse * (vdot - Jdot * law.qr_dot);
  law.s = qdot - law.qr_dot;

  const Mat2x6<double> Yd = dyn_regressor<double>(q, qdot, law.qr_dot, qr_ddot, kin, gravity_local);
  const Vector2 e = gains.K_v * dxdot + gains.K_p * dx;
  const Vector2 tau = -J.transpose() * e + Yd * est.theta_d - J.transpose() * est.F_ext;
  law.pressure = divide(tau, K_hat);
  law.theta_d_dot = -gains.L_d * (Yd.transpose() * law.s);
  law.theta_k_dot = gains.L_k * (kin_regressor<double>(q, qdot).transpose() * e);
  law.F_ext_dot = (J * law.s).cwiseQuotient(gains.P_f);
  return law;
}

FeedbackLinearizationLaw fblin_torque(const Vector2& q, const Vector2& qdot, const Vector2& x, const Vector2& xdot,
                                      const TaskReference& ref, const NominalModel& nominal, double K_p, double K_v,
                                      const Vector2& gravity_local) {
  const Matrix2 J = task_jacobian<double>(q, nominal.kin);
  const Matrix2 Jdot = task_jacobian_dot<double>(q, qdot, nominal.kin);
  const JacobianInverse Jinv = invert_jacobian(J);
  const Vector2 qddot = Jinv.inverse * (ref.xddot - K_v * (xdot - ref.xdot) - K_p * (x - ref.x) - Jdot * qdot);
  const auto d = soft_dynamics<double>(q, qdot, nominal.dyn, nominal.kin, gravity_local);
  FeedbackLinearizationLaw law;
  law.damped = Jinv.damped;
  law.tau = d.M * qddot + (d.C + nominal.dyn.damping()) * qdot + d.G + nominal.dyn.stiffness() * q;
  return law;
}

AdaptiveJointController::AdaptiveJointController(const JointGains& gains, const SinusoidReference& ref,
                                                 const AdaptiveState& initial, const KinematicParams<double>& kin,
                                                 const ActuationMap<double>& act, const Vector2& gravity_local)
    : gains_(gains), ref_(ref), est_(initial), kin_(kin), act_(act), gravity_(gravity_local) {
  gains_.validate();
}

ControlOutput AdaptiveJointController::compute(const Measurement& m) {
  const JointReference r = ref_(m.t);
  law_ = adaptive_sliding_torque(m.q, m.qdot, r, gains_, est_, kin_, gravity_);
  return {divide(law_.tau, act_), r.q};
}

void AdaptiveJointController::advance(double dt) {
  est_.theta_d += dt * law_.theta_d_dot;
  est_.F_ext += dt * law_.F_ext_dot;
}

std::vector<std::string> AdaptiveJointController::estimateNames() const { return adaptiveNames(false); }
std::vector<double> AdaptiveJointController::estimates() const { return adaptiveValues(est_, false); }

PIDJointController::PIDJointController(const PIDGains& gains, const SinusoidReference& ref,
                                       const ActuationMap<double>& act)
    : gains_(gains), ref_(ref), act_(act) {
  gains_.validate();
}

ControlOutput PIDJointController::compute(const Measurement& m) {
  const JointReference r = ref_(m.t);
  error_ = m.q - r.q;
  const Vector2 tau = pid_torque(error_, integral_, m.qdot - r.qdot, gains_);
  return {divide(tau, act_), r.q};
}

void PIDJointController::advance(double dt) {
  const double lim = gains_.integral_limit;
  integral_ = (integral_ + dt * error_).cwiseMax(-lim).cwiseMin(lim);
}

CartesianAdaptiveController::CartesianAdaptiveController(const CartesianGains& gains, const EllipseReference& ref,
                                                         const AdaptiveState& initial,
                                                         const ActuationMap<double>& K_hat,
                                                         const FingerPlacement& placement,
                                                         const Vector2& gravity_world)
    : gains_(gains),
      ref_(ref),
      est_(initial),
      K_hat_(K_hat),
      placement_(placement),
      gravity_(placement.vectorToLocal(gravity_world)) {
  gains_.validate();
}

ControlOutput CartesianAdaptiveController::compute(const Measurement& m) {
  TaskReference r = ref_(m.t);
  r.x = placement_.vectorToLocal(r.x - placement_.base);
  r.xdot = placement_.vectorToLocal(r.xdot);
  r.xddot = placement_.vectorToLocal(r.xddot);
  const Vector2 x = placement_.vectorToLocal(m.tip - placement_.base);
  const Vector2 xdot = placement_.vectorToLocal(m.tipdot);
  law_ = cartesian_adaptive_pressure(x, xdot, r, m.q, m.qdot, gains_, est_, K_hat_, gravity_);
  if (law_.damped) ++damped_events_;
  return {law_.pressure, Vector2::Constant(std::numeric_limits<double>::quiet_NaN())};
}

void CartesianAdaptiveController::advance(double dt) {
  est_.theta_d += dt * law_.theta_d_dot;
  est_.theta_k += dt * law_.theta_k_dot;
  est_.F_ext += dt * law_.F_ext_dot;
}

std::vector<std::string> CartesianAdaptiveController::estimateNames() const { return adaptiveNames(true); }
std::vector<double> CartesianAdaptiveController::estimates() const { return adaptiveValues(est_, true); }

FeedbackLinearizationController::FeedbackLinearizationController(double K_p, double K_v, const EllipseReference& ref,
                                                                 const NominalModel& nominal,
                                                                 const FingerPlacement& placement,
                                                                 const Vector2& gravity_world)
    : K_p_(K_p),
      K_v_(K_v),
      ref_(ref),
      nominal_(nominal),
      placement_(placement),
      gravity_(placement.vectorToLocal(gravity_world)) {}

ControlOutput FeedbackLinearizationController::compute(const Measurement& m) {
  TaskReference r = ref_(m.t);
  r.x = placement_.vectorToLocal(r.x - placement_.base);
  r.xdot = placement_.vectorToLocal(r.xdot);
  r.xddot = placement_.vectorToLocal(r.xddot);
  const Vector2 x = placement_.vectorToLocal(m.tip - placement_.base);
  const Vector2 xdot = placement_.vectorToLocal(m.tipdot);
  const auto law = fblin_torque(m.q, m.qdot, x, xdot, r, nominal_, K_p_, K_v_, gravity_);
  if (law.damped) ++damped_events_;
  return {divide(law.tau, nominal_.act), Vector2::Constant(std::numeric_limits<double>::quiet_NaN())};
}

std::vector<double> lyapunov_trace(const Trajectory& traj, const FingerModel& truth, const JointGains& gains,
                                   const SinusoidReference& ref, const Vector2& gravity_local,
                                   const Vector2& force_local) {
  const Vector6 theta = truth.dyn.asVector();
  std::vector<double> v;
  v.reserve(traj.size());
  for (const auto& r : traj.records) {
    if (r.estimates.size() != 8) throw std::invalid_argument("trajectory lacks adaptive estimates");
    const JointReference jr = ref(r.t);
    const SlidingReference sr = sliding_reference(r.q, r.qdot, jr, gains.Lambda);
    const Vector6 dtheta = Eigen::Map<const Vector6>(r.estimates.data()) - theta;
    const Vector2 dF = Vector2(r.estimates[6], r.estimates[7]) - force_local;
    const auto d = soft_dynamics<double>(r.q, r.qdot, truth.dyn, truth.kin, gravity_local);
    v.push_back(lyapunov_value(sr.s, dtheta, r.q - jr.q, dF, d.M, gains));
  }
  return v;
}

}  // namespace softgrip
