#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softgrip/ctrl.hpp"
#include "softgrip/dynsim.hpp"

namespace softgrip {

using Vector12 = Eigen::Matrix<double, 12, 1>;
using Mat4x12 = Eigen::Matrix<double, 4, 12>;
using Mat2x12 = Eigen::Matrix<double, 2, 12>;
using Mat2x4 = Eigen::Matrix<double, 2, 4>;

/// Two fingers facing each other across a vertical midline. Finger 1 sits on
/// the right and is tilted inward by `tilt`; finger 2 is its mirror image.
struct GripperLayout {
  double separation = 0.20;  // m between bases
  double midline = 0.010;    // m, x of the symmetry line
  double base_y = 0.005;     // m
  double tilt = 0.785;       // rad

  void validate() const;
  FingerPlacement finger(int i) const;  // i = 0 or 1
};

struct ShapedLockedState {
  Vector2 X_L = Vector2::Zero();  // mean of the tips
  Vector2 X_E = Vector2::Zero();  // tip 1 minus tip 2
};

/// The constant matrix mapping (x1, y1, x2, y2) to (X_L, X_E).
Matrix4 shaped_locked_matrix();
ShapedLockedState shaped_locked_transform(const Vector4& tips);
Vector4 shaped_locked_inverse(const ShapedLockedState& z);

struct FingerPair {
  std::array<DynamicParams<double>, 2> dyn;
  std::array<KinematicParams<double>, 2> kin;
  std::array<ActuationMap<double>, 2> act;
};

/// World-frame tip positions (x1, y1, x2, y2).
Vector4 gripper_tips(const Vector4& q, const std::array<KinematicParams<double>, 2>& kin, const GripperLayout& layout);

/// Block-diagonal world-frame tip Jacobian.
Matrix4 block_jacobian(const Vector4& q, const std::array<KinematicParams<double>, 2>& kin,
                       const GripperLayout& layout);
Matrix4 block_jacobian_dot(const Vector4& q, const Vector4& qdot, const std::array<KinematicParams<double>, 2>& kin,
                           const GripperLayout& layout);

/// Dynamics in z = (X_L, X_E): M z'' + C z' + N = W, where N gathers
/// gravity, stiffness and damping and W is the applied generalized force.
struct TransformedDynamics {
  Matrix4 T = Matrix4::Zero();      // S J
  Matrix4 T_inv = Matrix4::Zero();
  Matrix4 M = Matrix4::Zero();
  Matrix4 C = Matrix4::Zero();
  Vector4 N = Vector4::Zero();
  bool damped = false;

  Matrix2 ML() const { return M.topLeftCorner<2, 2>(); }
  Matrix2 ME() const { return M.bottomRightCorner<2, 2>(); }
  Matrix2 MLE() const { return M.topRightCorner<2, 2>(); }
  Matrix2 CL() const { return C.topLeftCorner<2, 2>(); }
  Matrix2 CE() const { return C.bottomRightCorner<2, 2>(); }
  Matrix2 CLE() const { return C.topRightCorner<2, 2>(); }
  Matrix2 CEL() const { return C.bottomLeftCorner<2, 2>(); }
  Vector2 FLG() const { return -N.head<2>(); }
  Vector2 FEG() const { return -N.tail<2>(); }
};

TransformedDynamics transformed_dynamics(const Vector4& q, const Vector4& qdot, const FingerPair& params,
                                         const GripperLayout& layout, const Vector2& gravity_world);

/// Regressor of blockdiag(M_L, M_E) zr'' + C zr' + N in the twelve dynamic
/// parameters (finger 1 then finger 2, each m1, m2, K1, K2, D1, D2).
Mat4x12 coop_regressor(const Vector4& q, const Vector4& qdot, const Vector4& zr_dot, const Vector4& zr_ddot,
                       const std::array<KinematicParams<double>, 2>& kin, const GripperLayout& layout,
                       const Vector2& gravity_world);

/// X_L' = locked_kin_regressor * (L1 and L2 of finger 1, then of finger 2).
Mat2x4 locked_kin_regressor(const Vector4& q, const Vector4& qdot, const GripperLayout& layout);

/// Imaginary-spring grip forces on tip 1 and tip 2.
std::array<Vector2, 2> grip_force(const Vector4& tips, double K_s);

struct LockedGains {
  double k_p = 200.0;
  double k_v = 3.0;
  double Gamma_k = 0.0325;
  double Gamma_d = 0.4;
  double P = 1.0;
  double lambda = 20.0;
};

struct ShapedGains {
  double k = 100.0;
  double k_d = 5.0;
  double Gamma_d = 0.4;
  double P = 1.0;
  double lambda = 20.0;
};

struct CoopGains {
  LockedGains locked;
  ShapedGains shaped;

  void validate() const;
};

/// Task error of one subsystem and its sliding vector.
struct SubsystemError {
  Vector2 e = Vector2::Zero();
  Vector2 edot = Vector2::Zero();
  Vector2 s = Vector2::Zero();
  Vector2 zr_dot = Vector2::Zero();
  Vector2 zr_ddot = Vector2::Zero();
};

SubsystemError subsystem_error(const Vector2& X, const Vector2& Xdot, const TaskReference& ref, double lambda);

struct LockedLaw {
  Vector2 T_L = Vector2::Zero();
  Vector12 theta_d_dot = Vector12::Zero();
  Vector4 theta_k_dot = Vector4::Zero();
  Vector2 F_dot = Vector2::Zero();
};

struct ShapedLaw {
  Vector2 T_E = Vector2::Zero();
  Vector12 theta_d_dot = Vector12::Zero();
  Vector2 F_dot = Vector2::Zero();
};

LockedLaw locked_control(const SubsystemError& err, const Mat2x12& Y_Lr, const Mat2x4& Y_Lk, const LockedGains& g,
                         const Vector12& theta_d, const Vector2& F_L);
ShapedLaw shaped_control(const SubsystemError& err, const Mat2x12& Y_Er, const ShapedGains& g,
                         const Vector12& theta_d, const Vector2& F_E);

struct GraspReference {
  Vector2 center{0.010, 0.081};
  Vector2 amplitude{0.010, -0.017};
  double omega = 3.0;
  Vector2 X_E{0.020, 0.0};

  TaskReference locked(double t) const;
  TaskReference shaped(double t) const;
};

struct CoopEstimates {
  Vector12 theta_Ld = Vector12::Zero();
  Vector12 theta_Ed = Vector12::Zero();
  Vector4 theta_Lk = Vector4::Zero();
  Vector2 F_L = Vector2::Zero();
  Vector2 F_E = Vector2::Zero();

  bool finite() const;
  static std::vector<std::string> names();
  std::vector<double> values() const;
};

struct CoopCommand {
  Vector4 tau = Vector4::Zero();
  Vector4 pressure = Vector4::Zero();
  Vector2 T_L = Vector2::Zero();
  Vector2 T_E = Vector2::Zero();
  bool damped = false;
};

class CoopController {
 public:
  CoopController(const CoopGains& gains, const GraspReference& ref, const CoopEstimates& initial,
                 const std::array<ActuationMap<double>, 2>& act, const GripperLayout& layout,
                 const Vector2& gravity_world);

  CoopCommand compute(double t, const Vector4& q, const Vector4& qdot);
  void advance(double dt);
  const CoopEstimates& estimates() const { return est_; }

 private:
  CoopGains gains_;
  GraspReference ref_;
  CoopEstimates est_;
  std::array<ActuationMap<double>, 2> act_;
  GripperLayout layout_;
  Vector2 gravity_;
  LockedLaw locked_;
  ShapedLaw shaped_;
};

struct GripSpec {
  double side = 0.020;  // m
  double mass = 0.020;  // kg
  double K_s = 50.0;    // N/m

  void validate() const;
};

struct CoopConfig {
  SimConfig sim;
  GripperLayout layout;
  GripSpec grip;
  CoopGains gains;
  GraspReference ref;
  FingerPair truth;
  double initial_dynamics_scale = 0.7;
  double initial_kinematics_scale = 1.0;
  Vector2 disturbance{0.0, -0.3};  // N on each tip, world frame
  double disturbance_on = 1.0;     // s

  CoopConfig();
  void validate() const;
};

struct CoopRecord {
  double t = 0.0;
  ShapedLockedState z;
  ShapedLockedState z_ref;
  Vector2 T_L = Vector2::Zero();
  Vector2 T_E = Vector2::Zero();
  Vector2 grip = Vector2::Zero();  // grip force on tip 1
  Vector2 object_center = Vector2::Zero();
  double object_angle = 0.0;
  std::vector<double> estimates;
};

struct CoopResult {
  std::array<Trajectory, 2> finger;
  std::vector<CoopRecord> records;
};

/// Initial curvatures placing both tips on the reference at t = 0.
Vector4 grasp_initial_curvature(const CoopConfig& cfg);

CoopResult coop_simulate(const CoopConfig& cfg);

void write_coop_csv(std::ostream& out, const CoopResult& result);

}  // namespace softgrip
