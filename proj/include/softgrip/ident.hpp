#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softgrip/dynsim.hpp"

namespace softgrip {

/// One logged sample used for identification.
struct IdentSample {
  Vector2 q = Vector2::Zero();
  Vector2 qdot = Vector2::Zero();
  Vector2 qddot = Vector2::Zero();
  Vector2 pressure = Vector2::Zero();
};

/// Unknowns in solution order.
inline const std::vector<std::string>& ident_parameter_names() {
  static const std::vector<std::string> names{"K1", "K2", "D1", "D2", "alpha1", "alpha2"};
  return names;
}

struct IdentResult {
  Vector6 x = Vector6::Zero();  // (K1, K2, D1, D2, alpha1, alpha2)
  double residual_norm = 0.0;
  double condition = 0.0;  // ratio of extreme singular values of A
  int rank = 0;
  std::vector<std::string> negative;  // names of entries identified below zero

  bool ok() const { return negative.empty(); }
  DynamicParams<double> dynamics(double m1, double m2) const;
  ActuationMap<double> actuation() const { return {x(4), x(5)}; }
};

class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Regression {
  Eigen::MatrixXd A;
  Eigen::VectorXd Y;
};

/// Stacks [diag(q), diag(qdot), -diag(P)] x = -(M qdd + C qd + G) over all samples.
Regression build_regression(const std::vector<IdentSample>& samples, double m1, double m2,
                            const KinematicParams<double>& kin, const Vector2& gravity_local);

/// Least squares through column-pivoting QR; throws IdentificationError naming
/// the unidentifiable parameter combinations when A is rank deficient.
IdentResult solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& Y);

/// How the acceleration column is obtained from a simulated run.
enum class AccelerationSource {
  Logged,           // exact accelerations of the simulator
  CentralDifference  // differences of the filtered rate signal
};

struct RampExperiment {
  double p_start = 0.3;  // bar
  double p_end = 1.8;    // bar
  double slope = 0.1;    // bar/s
  bool separate = true;  // one run per segment, the other held at zero pressure
  SimConfig sim;         // dt, noise, seed and filter cutoff; duration is derived
  AccelerationSource acceleration = AccelerationSource::CentralDifference;

  double duration() const { return (p_end - p_start) / slope; }
};

/// Runs the open-loop ramp(s) on the given plant and returns the processed
/// samples of every run, concatenated. Measured curvature gets the configured
/// noise; curvature, rate and pressure pass through the same low-pass filter.
std::vector<IdentSample> generate_ramp_experiment(const FingerModel& truth, const RampExperiment& experiment);

/// Samples from raw logged signals: noise and filtering as in a sensor, then
/// central differences of the filtered rate for the acceleration.
std::vector<IdentSample> samples_from_trajectory(const Trajectory& traj, const SimConfig& sensor,
                                                 AccelerationSource acceleration);

/// Reads the trajectory CSV written by write_trajectory_csv (fixed columns only).
Trajectory read_trajectory_csv(std::istream& in);

/// Writes name,value[,truth,rel_error] rows.
void write_ident_csv(std::ostream& out, const IdentResult& result, const std::optional<Vector6>& truth);

/// Truth vector in solution order for a plant.
Vector6 ident_truth(const DynamicParams<double>& dyn, const ActuationMap<double>& act);

}  // namespace softgrip
