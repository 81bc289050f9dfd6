#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "softgrip/rigideq.hpp"
#include "softgrip/types.hpp"

namespace softgrip {

inline constexpr double kMaxPressure = 1.8;  // bar

/// Placement of a finger base in the world plane. The finger frame is
/// optionally mirrored about its own y axis, then rotated and translated.
struct FingerPlacement {
  Vector2 base = Vector2::Zero();
  double angle = 0.0;
  bool mirrored = false;

  Matrix2 frame() const {
    Matrix2 m = Matrix2::Identity();
    if (mirrored) m(0, 0) = -1.0;
    return rotation(angle) * m;
  }
  Vector2 pointToWorld(const Vector2& p) const { return base + frame() * p; }
  Vector2 vectorToWorld(const Vector2& v) const { return frame() * v; }
  Vector2 vectorToLocal(const Vector2& v) const { return frame().transpose() * v; }
};

/// True plant parameters of one finger.
struct FingerModel {
  DynamicParams<double> dyn;
  KinematicParams<double> kin;
  ActuationMap<double> act;
  FingerPlacement placement;
};

struct SimConfig {
  double dt = 1e-3;
  double duration = 10.0;
  Vector2 gravity{0.0, -9.81};  // world frame, m/s^2
  double noise_std = 0.0;       // rad, added to measured curvature
  std::uint64_t seed = 1;
  double filter_cutoff = 30.0;  // Hz; <= 0 or infinite disables the filter
  bool clamp_pressure = true;   // clamp commanded pressure to [0, kMaxPressure]
  int substeps = 10;            // RK4 steps per control sample
  int log_every = 1;            // keep every n-th control sample in the log

  void validate() const;
  std::size_t sampleCount() const;
};

struct PressureSignal {
  enum class Kind { Constant, Ramp, Sinusoid };
  Kind kind = Kind::Constant;
  double offset = 0.0;     // bar
  double amplitude = 0.0;  // bar
  double frequency = 0.0;  // rad/s
  double phase = 0.0;      // rad
  double slope = 0.0;      // bar/s
  double start = 0.0;      // bar
  double end = 0.0;        // bar

  static PressureSignal constant(double p);
  static PressureSignal ramp(double start, double end, double slope);
  static PressureSignal sinusoid(double offset, double amplitude, double frequency, double phase);

  /// Pressure at time t, clamped to [0, kMaxPressure].
  double operator()(double t) const;
};

struct Obstacle {
  Vector2 point = Vector2::Zero();   // a point on the surface, world frame
  Vector2 normal{0.0, 1.0};          // outward unit normal
  double stiffness = 0.0;            // N/m
};

struct ForceScenario {
  Vector2 constant_tip_force = Vector2::Zero();  // world frame, N
  double t_on = 0.0;
  double t_off = std::numeric_limits<double>::infinity();
  std::optional<Obstacle> obstacle;

  /// Total world-frame tip force at time t for a given world tip position.
  Vector2 tipForce(double t, const Vector2& tip_world) const;
};

/// One uniformly sampled record.
struct TrajectoryRecord {
  double t = 0.0;
  Vector2 q = Vector2::Zero();
  Vector2 q_ref = Vector2::Constant(std::numeric_limits<double>::quiet_NaN());
  Vector2 qdot = Vector2::Zero();
  Vector2 qddot = Vector2::Zero();
  Vector2 tau = Vector2::Zero();
  Vector2 pressure = Vector2::Zero();
  Vector2 tip = Vector2::Zero();    // world frame
  Vector2 force = Vector2::Zero();  // applied tip force, world frame
  std::vector<double> estimates;
};

struct Trajectory {
  std::vector<std::string> estimate_names;
  std::vector<TrajectoryRecord> records;

  std::size_t size() const { return records.size(); }
};

/// Simulation stopped early; carries the samples logged so far.
class SimulationAborted : public SimulationDiverged {
 public:
  SimulationAborted(const std::string& what, Trajectory partial)
      : SimulationDiverged(what), partial_(std::make_shared<Trajectory>(std::move(partial))) {}
  const Trajectory& partial() const { return *partial_; }

 private:
  std::shared_ptr<Trajectory> partial_;
};

Vector2 pressure_to_torque(const Vector2& pressure, const ActuationMap<double>& act);

/// Curvature acceleration of the soft finger. Gravity and f_ext are in the finger frame.
Vector2 accel(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& tau,
              const Vector2& f_ext_local, const Vector2& gravity_local);

/// Residual M qdd + (C + D) qd + G + K q - tau - J^T f of the equation of motion.
Vector2 motion_residual(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& qddot,
                        const Vector2& tau, const Vector2& f_ext_local, const Vector2& gravity_local);

/// Kinetic + gravitational + elastic energy.
double total_energy(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& gravity_local);

/// One classical Runge-Kutta step of dx/dt = f(t, x).
template <typename State, typename Derivative>
State rk4_step(const State& x, double t, double dt, Derivative&& f) {
  const State k1 = f(t, x);
  const State k2 = f(t + dt / 2, State(x + dt / 2 * k1));
  const State k3 = f(t + dt / 2, State(x + dt / 2 * k2));
  const State k4 = f(t + dt, State(x + dt * k3));
  return x + dt / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector2 obstacle_force(const Vector2& tip_world, const Obstacle& obstacle);

/// First-order discrete low-pass filter with optional seeded Gaussian input noise.
class SensorFilter {
 public:
  SensorFilter(double cutoff_hz, double dt, double noise_std = 0.0, std::uint64_t seed = 1);

  /// Filters one raw sample; the first call initializes the state unless reset() set one.
  double operator()(double raw);
  void reset(double value);
  bool enabled() const { return gain_ < 1.0; }
  double gain() const { return gain_; }

 private:
  double gain_ = 1.0;
  double noise_std_ = 0.0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double state_ = 0.0;
  bool initialized_ = false;
};

/// What a controller sees each sample.
struct Measurement {
  double t = 0.0;
  Vector2 q = Vector2::Zero();
  Vector2 qdot = Vector2::Zero();
  Vector2 tip = Vector2::Zero();     // world frame, from the true kinematics
  Vector2 tipdot = Vector2::Zero();  // world frame
};

struct ControlOutput {
  Vector2 pressure = Vector2::Zero();  // bar, before clamping
  Vector2 q_ref = Vector2::Constant(std::numeric_limits<double>::quiet_NaN());
};

/// A sampled-data controller. compute() is called once per step at the
/// sample instant; advance() integrates internal state over the held step.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControlOutput compute(const Measurement& m) = 0;
  virtual void advance(double /*dt*/) {}
  virtual std::vector<std::string> estimateNames() const { return {}; }
  virtual std::vector<double> estimates() const { return {}; }
};

/// Applies a fixed pressure signal per segment.
class OpenLoopController : public Controller {
 public:
  OpenLoopController(PressureSignal p1, PressureSignal p2) : p1_(p1), p2_(p2) {}
  ControlOutput compute(const Measurement& m) override;

 private:
  PressureSignal p1_, p2_;
};

struct InitialState {
  Vector2 q = Vector2::Zero();
  Vector2 qdot = Vector2::Zero();
};

Trajectory simulate(Controller& controller, const FingerModel& model, const ForceScenario& scenario,
                    const SimConfig& config, const InitialState& initial = {});

/// Writes the trajectory as CSV: fixed columns then estimate columns.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Canonical 9-significant-digit formatting used by every CSV writer.
std::string format_number(double v);

}  // namespace softgrip
