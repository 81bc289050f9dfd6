#include "softgrip/dynsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

namespace softgrip {

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!(duration >= dt) || !std::isfinite(duration)) throw ConfigError("duration must be at least dt");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  if (!gravity.allFinite()) throw ConfigError("gravity must be finite");
  if (std::isnan(filter_cutoff)) throw ConfigError("filter_cutoff must be a number");
  if (substeps < 1) throw ConfigError("substeps must be at least 1");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
}

std::size_t SimConfig::sampleCount() const { return static_cast<std::size_t>(std::llround(duration / dt)) + 1; }

PressureSignal PressureSignal::constant(double p) {
  PressureSignal s;
  s.kind = Kind::Constant;
  s.offset = p;
  return s;
}

PressureSignal PressureSignal::ramp(double start, double end, double slope) {
  PressureSignal s;
  s.kind = Kind::Ramp;
  s.start = start;
  s.end = end;
  s.slope = slope;
  return s;
}

PressureSignal PressureSignal::sinusoid(double offset, double amplitude, double frequency, double phase) {
  PressureSignal s;
  s.kind = Kind::Sinusoid;
  s.offset = offset;
  s.amplitude = amplitude;
  s.frequency = frequency;
  s.phase = phase;
  return s;
}

double PressureSignal::operator()(double t) const {
  double p = 0.0;
  switch (kind) {
    case Kind::Constant:
      p = offset;
      break;
    case Kind::Ramp: {
      p = start + slope * t;
      p = slope >= 0.0 ? std::min(p, end) : std::max(p, end);
      break;
    }
    case Kind::Sinusoid:
      p = offset + amplitude * std::sin(frequency * t + phase);
      break;
  }
  return std::clamp(p, 0.0, kMaxPressure);
}

Vector2 ForceScenario::tipForce(double t, const Vector2& tip_world) const {
  Vector2 f = Vector2::Zero();
  if (t >= t_on && t < t_off) f += constant_tip_force;
  if (obstacle) f += obstacle_force(tip_world, *obstacle);
  return f;
}

Vector2 pressure_to_torque(const Vector2& pressure, const ActuationMap<double>& act) {
  if (!pressure.allFinite() || (pressure.array() < 0.0).any()) throw DomainError("pressure must be non-negative");
  return act.asVector().cwiseProduct(pressure);
}

namespace {

DynamicsMatrices<double> plantDynamics(const FingerModel& model, const Vector2& q, const Vector2& qdot,
                                       const Vector2& gravity_local) {
  return soft_dynamics<double>(q, qdot, model.dyn, model.kin, gravity_local);
}

}  // namespace

Vector2 accel(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& tau,
              const Vector2& f_ext_local, const Vector2& gravity_local) {
  const auto d = plantDynamics(model, q, qdot, gravity_local);
  const Matrix2 J = task_jacobian<double>(q, model.kin);
  const Vector2 rhs = tau + J.transpose() * f_ext_local - (d.C + model.dyn.damping()) * qdot - d.G -
                      model.dyn.stiffness() * q;
  const Eigen::LLT<Matrix2> llt(d.M);
  if (llt.info() != Eigen::Success) throw SimulationDiverged("inertia matrix is not positive definite");
  return llt.solve(rhs);
}

Vector2 motion_residual(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& qddot,
                        const Vector2& tau, const Vector2& f_ext_local, const Vector2& gravity_local) {
  const auto d = plantDynamics(model, q, qdot, gravity_local);
  const Matrix2 J = task_jacobian<double>(q, model.kin);
  return d.M * qddot + (d.C + model.dyn.damping()) * qdot + d.G + model.dyn.stiffness() * q - tau -
         J.transpose() * f_ext_local;
}

double total_energy(const FingerModel& model, const Vector2& q, const Vector2& qdot, const Vector2& gravity_local) {
  const Matrix2 M = direct_inertia<double>(q, model.dyn, model.kin);
  return 0.5 * qdot.dot(M * qdot) + gravity_potential<double>(q, model.dyn, model.kin, gravity_local) +
         0.5 * q.dot(model.dyn.stiffness() * q);
}

Vector2 obstacle_force(const Vector2& tip_world, const Obstacle& obstacle) {
  if (obstacle.stiffness < 0.0) throw DomainError("obstacle stiffness must be non-negative");
  const Vector2 n = obstacle.normal.normalized();
  const double penetration = -(tip_world - obstacle.point).dot(n);
  if (penetration <= 0.0) return Vector2::Zero();
  return obstacle.stiffness * penetration * n;
}

SensorFilter::SensorFilter(double cutoff_hz, double dt, double noise_std, std::uint64_t seed)
    : noise_std_(noise_std), rng_(seed) {
  if (cutoff_hz > 0.0 && std::isfinite(cutoff_hz)) {
    const double rc = 1.0 / (2.0 * std::numbers::pi * cutoff_hz);
    gain_ = dt / (rc + dt);
  }
}

double SensorFilter::operator()(double raw) {
  if (noise_std_ > 0.0) raw += noise_std_ * normal_(rng_);
  if (gain_ == 1.0) return raw;
  if (!initialized_) {
    state_ = raw;
    initialized_ = true;
    return state_;
  }
  state_ += gain_ * (raw - state_);
  return state_;
}

void SensorFilter::reset(double value) {
  state_ = value;
  initialized_ = true;
}

ControlOutput OpenLoopController::compute(const Measurement& m) {
  ControlOutput out;
  out.pressure = Vector2(p1_(m.t), p2_(m.t));
  return out;
}

Trajectory simulate(Controller& controller, const FingerModel& model, const ForceScenario& scenario,
                    const SimConfig& config, const InitialState& initial) {
  config.validate();
  const std::size_t n = config.sampleCount();
  const double dt = config.dt;
  const Vector2 gravity_local = model.placement.vectorToLocal(config.gravity);
  const Matrix2 frame = model.placement.frame();

  Trajectory traj;
  traj.estimate_names = controller.estimateNames();
  traj.records.reserve(n);

  std::array<SensorFilter, 4> filters{
      SensorFilter(config.filter_cutoff, dt, config.noise_std, config.seed),
      SensorFilter(config.filter_cutoff, dt, config.noise_std, config.seed + 1),
      SensorFilter(config.filter_cutoff, dt),
      SensorFilter(config.filter_cutoff, dt),
  };

  Vector4 x;
  x << initial.q, initial.qdot;

  const auto derivative = [&](double t, const Vector4& s, const Vector2& tau) {
    const Vector2 q = s.head<2>(), qd = s.tail<2>();
    const Vector2 tip = model.placement.pointToWorld(fk_tip<double>(q, model.kin).position());
    const Vector2 f_local = model.placement.vectorToLocal(scenario.tipForce(t, tip));
    Vector4 out;
    out << qd, accel(model, q, qd, tau, f_local, gravity_local);
    return out;
  };

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vector2 q = x.head<2>(), qdot = x.tail<2>();
    const Vector2 tip = model.placement.pointToWorld(fk_tip<double>(q, model.kin).position());
    const Matrix2 J = task_jacobian<double>(q, model.kin);

    Measurement meas;
    meas.t = t;
    meas.q = Vector2(filters[0](q(0)), filters[1](q(1)));
    meas.qdot = Vector2(filters[2](qdot(0)), filters[3](qdot(1)));
    meas.tip = tip;
    meas.tipdot = frame * J * qdot;

    ControlOutput cmd;
    try {
      cmd = controller.compute(meas);
    } catch (const DomainError& e) {
      throw SimulationAborted(std::string("controller: ") + e.what() + " at t=" + format_number(t), std::move(traj));
    }
    Vector2 pressure = cmd.pressure;
    if (config.clamp_pressure) pressure = pressure.cwiseMax(0.0).cwiseMin(kMaxPressure);
    const Vector2 tau = model.act.asVector().cwiseProduct(pressure);

    const Vector2 force = scenario.tipForce(t, tip);
    TrajectoryRecord rec;
    rec.t = t;
    rec.q = q;
    rec.q_ref = cmd.q_ref;
    rec.qdot = qdot;
    rec.tau = tau;
    rec.pressure = pressure;
    rec.tip = tip;
    rec.force = force;
    rec.estimates = controller.estimates();
    if (!tau.allFinite()) {
      throw SimulationAborted("non-finite control command at t=" + format_number(t), std::move(traj));
    }
    rec.qddot = accel(model, q, qdot, tau, model.placement.vectorToLocal(force), gravity_local);
    if (k % static_cast<std::size_t>(config.log_every) == 0) traj.records.push_back(std::move(rec));
    if (k + 1 == n) break;

    const double h = dt / config.substeps;
    try {
      for (int j = 0; j < config.substeps; ++j) {
        x = rk4_step(x, t + j * h, h, [&](double ts, const Vector4& s) { return derivative(ts, s, tau); });
      }
    } catch (const DomainError& e) {
      throw SimulationAborted(std::string(e.what()) + " at t=" + format_number(t), std::move(traj));
    } catch (const SimulationDiverged& e) {
      throw SimulationAborted(std::string(e.what()) + " at t=" + format_number(t), std::move(traj));
    }
    controller.advance(dt);

    if (!x.allFinite() || x.tail<2>().norm() > 1e3) {
      throw SimulationAborted("simulation diverged at t=" + format_number(t + dt), std::move(traj));
    }
  }
  return traj;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,q1,q2,qd1,qd2,qdot1,qdot2,tau1,tau2,p1,p2,tipx,tipy,fx,fy";
  for (const auto& name : traj.estimate_names) out << ',' << name;
  out << '\n';
  for (const auto& r : traj.records) {
    const double row[] = {r.t,      r.q(0),   r.q(1),        r.q_ref(0),    r.q_ref(1),
                          r.qdot(0), r.qdot(1), r.tau(0),      r.tau(1),      r.pressure(0),
                          r.pressure(1), r.tip(0), r.tip(1), r.force(0), r.force(1)};
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
