#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softgrip/cckin.hpp"
#include "softgrip/dynsim.hpp"
#include "softgrip/rigideq.hpp"

namespace softgrip {

struct JointGains {
  Vector2 K_p = Vector2::Constant(0.015);
  Vector2 K_v = Vector2::Constant(0.002);
  Vector6 L_d = Vector6::Constant(0.001);
  Vector2 Lambda = Vector2::Constant(10.0);
  Vector2 P_f = Vector2::Constant(0.005);  // force-adaptation weight

  void validate() const;
};

struct PIDGains {
  double k_p = 0.03;
  double k_i = 1.2;
  double k_d1 = 0.004;
  double k_d2 = 0.0005;
  double integral_limit = 10.0;  // rad s

  void validate() const;
};

struct CartesianGains {
  double K_p = 50.0;
  double K_v = 10.0;
  double L_d = 0.01;
  double L_k = 1.6;
  double alpha_s = 3.0;  // sliding rate
  Vector2 P_f = Vector2::Constant(0.05);

  void validate() const;
};

struct AdaptiveState {
  Vector6 theta_d = Vector6::Zero();  // (m1, m2, K1, K2, D1, D2)
  Vector2 theta_k = Vector2::Zero();  // (L1, L2), m
  Vector2 F_ext = Vector2::Zero();    // finger frame, N

  bool finite() const { return theta_d.allFinite() && theta_k.allFinite() && F_ext.allFinite(); }
};

/// Desired curvature and its first two derivatives.
struct JointReference {
  Vector2 q = Vector2::Zero();
  Vector2 qdot = Vector2::Zero();
  Vector2 qddot = Vector2::Zero();
};

/// Desired task-space position and its first two derivatives.
struct TaskReference {
  Vector2 x = Vector2::Zero();
  Vector2 xdot = Vector2::Zero();
  Vector2 xddot = Vector2::Zero();
};

/// q_d(t) = offset + amplitude * sin(omega t + phase), same for both segments.
struct SinusoidReference {
  double offset = 0.8;
  double amplitude = 0.4;
  double omega = 2.0;
  double phase = 0.0;

  JointReference operator()(double t) const;
};

/// x_d(t) = center + amplitude .* sin(omega t + phase) per axis.
struct EllipseReference {
  Vector2 center{0.062, 0.113};
  Vector2 amplitude{0.033, 0.0265};
  Vector2 phase{0.0, 1.57};
  double omega = 1.0;

  TaskReference operator()(double t) const;
};

struct SlidingReference {
  Vector2 qr_dot = Vector2::Zero();
  Vector2 qr_ddot = Vector2::Zero();
  Vector2 s = Vector2::Zero();
};

SlidingReference sliding_reference(const Vector2& q, const Vector2& qdot, const JointReference& ref,
                                   const Vector2& Lambda);

struct AdaptiveLaw {
  Vector2 tau = Vector2::Zero();
  Vector2 s = Vector2::Zero();
  Vector6 theta_d_dot = Vector6::Zero();
  Vector2 F_ext_dot = Vector2::Zero();
};

/// Joint-space adaptive-sliding torque and the adaptation rates of its estimates.
AdaptiveLaw adaptive_sliding_torque(const Vector2& q, const Vector2& qdot, const JointReference& ref,
                                    const JointGains& gains, const AdaptiveState& est,
                                    const KinematicParams<double>& kin, const Vector2& gravity_local);

double lyapunov_value(const Vector2& s, const Vector6& dtheta_d, const Vector2& dq, const Vector2& dF,
                      const Matrix2& M, const JointGains& gains);

/// PID torque; the integral is expected to be clamped by the caller.
Vector2 pid_torque(const Vector2& dq, const Vector2& integral, const Vector2& dqdot, const PIDGains& gains);

/// Inverse of J, or (J^T J + 1e-6 I)^-1 J^T when |det J| < 1e-9.
struct JacobianInverse {
  Matrix2 inverse = Matrix2::Zero();
  bool damped = false;
};
JacobianInverse invert_jacobian(const Matrix2& J);

/// Curvatures placing the tip at a finger-frame target, by Newton iteration
/// from the guess. Throws DomainError when the target is out of reach.
Vector2 inverse_kinematics(const Vector2& target, const KinematicParams<double>& kin,
                           const Vector2& guess = Vector2(0.5, 0.5));

struct CartesianLaw {
  Vector2 pressure = Vector2::Zero();  // bar
  Vector2 qr_dot = Vector2::Zero();
  Vector2 s = Vector2::Zero();
  Vector6 theta_d_dot = Vector6::Zero();
  Vector2 theta_k_dot = Vector2::Zero();
  Vector2 F_ext_dot = Vector2::Zero();
  bool damped = false;
};

/// Cartesian adaptive pressure command with dynamic, kinematic and force adaptation.
/// Positions are in the finger frame; x and xdot are measured.
CartesianLaw cartesian_adaptive_pressure(const Vector2& x, const Vector2& xdot, const TaskReference& ref,
                                         const Vector2& q, const Vector2& qdot, const CartesianGains& gains,
                                         const AdaptiveState& est, const ActuationMap<double>& K_hat,
                                         const Vector2& gravity_local);

struct NominalModel {
  DynamicParams<double> dyn;
  KinematicParams<double> kin;
  ActuationMap<double> act;
};

struct FeedbackLinearizationLaw {
  Vector2 tau = Vector2::Zero();
  bool damped = false;
};

/// Computed-torque tracking in task space with fixed nominal parameters.
FeedbackLinearizationLaw fblin_torque(const Vector2& q, const Vector2& qdot, const Vector2& x, const Vector2& xdot,
                                      const TaskReference& ref, const NominalModel& nominal, double K_p, double K_v,
                                      const Vector2& gravity_local);

/// Adaptive-sliding curvature tracking; outputs tau / alpha_nominal.
class AdaptiveJointController : public Controller {
 public:
  AdaptiveJointController(const JointGains& gains, const SinusoidReference& ref, const AdaptiveState& initial,
                          const KinematicParams<double>& kin, const ActuationMap<double>& act,
                          const Vector2& gravity_local);

  ControlOutput compute(const Measurement& m) override;
  void advance(double dt) override;
  std::vector<std::string> estimateNames() const override;
  std::vector<double> estimates() const override;

  const AdaptiveState& state() const { return est_; }
  const AdaptiveLaw& lastLaw() const { return law_; }

 private:
  JointGains gains_;
  SinusoidReference ref_;
  AdaptiveState est_;
  KinematicParams<double> kin_;
  ActuationMap<double> act_;
  Vector2 gravity_;
  AdaptiveLaw law_;
};

class PIDJointController : public Controller {
 public:
  PIDJointController(const PIDGains& gains, const SinusoidReference& ref, const ActuationMap<double>& act);

  ControlOutput compute(const Measurement& m) override;
  void advance(double dt) override;
  std::vector<std::string> estimateNames() const override { return {"int1", "int2"}; }
  std::vector<double> estimates() const override { return {integral_(0), integral_(1)}; }

 private:
  PIDGains gains_;
  SinusoidReference ref_;
  ActuationMap<double> act_;
  Vector2 integral_ = Vector2::Zero();
  Vector2 error_ = Vector2::Zero();
};

/// Task-space controllers see world-frame tip measurements and work in the finger frame.
class CartesianAdaptiveController : public Controller {
 public:
  CartesianAdaptiveController(const CartesianGains& gains, const EllipseReference& ref, const AdaptiveState& initial,
                              const ActuationMap<double>& K_hat, const FingerPlacement& placement,
                              const Vector2& gravity_world);

  ControlOutput compute(const Measurement& m) override;
  void advance(double dt) override;
  std::vector<std::string> estimateNames() const override;
  std::vector<double> estimates() const override;

  const AdaptiveState& state() const { return est_; }
  int dampedEvents() const { return damped_events_; }

 private:
  CartesianGains gains_;
  EllipseReference ref_;
  AdaptiveState est_;
  ActuationMap<double> K_hat_;
  FingerPlacement placement_;
  Vector2 gravity_;
  CartesianLaw law_;
  int damped_events_ = 0;
};

class FeedbackLinearizationController : public Controller {
 public:
  FeedbackLinearizationController(double K_p, double K_v, const EllipseReference& ref, const NominalModel& nominal,
                                  const FingerPlacement& placement, const Vector2& gravity_world);

  ControlOutput compute(const Measurement& m) override;
  int dampedEvents() const { return damped_events_; }

 private:
  double K_p_, K_v_;
  EllipseReference ref_;
  NominalModel nominal_;
  FingerPlacement placement_;
  Vector2 gravity_;
  int damped_events_ = 0;
};

/// Lyapunov value at every record of a run of AdaptiveJointController, using
/// the true plant parameters and a known constant finger-frame force.
std::vector<double> lyapunov_trace(const Trajectory& traj, const FingerModel& truth, const JointGains& gains,
                                   const SinusoidReference& ref, const Vector2& gravity_local,
                                   const Vector2& force_local = Vector2::Zero());

}  // namespace softgrip
