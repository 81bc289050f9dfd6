#include "softgrip/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace softgrip {

namespace {

const std::vector<std::pair<Scenario, std::string>>& scenarioTable() {
  static const std::vector<std::pair<Scenario, std::string>> t{
      {Scenario::Identify, "identify"},
      {Scenario::ValidateDynamics, "validate-dynamics"},
      {Scenario::JointAdaptive, "joint-adaptive"},
      {Scenario::JointPID, "joint-pid"},
      {Scenario::JointAdaptiveContact, "joint-adaptive-contact"},
      {Scenario::JointPIDContact, "joint-pid-contact"},
      {Scenario::CartesianAdaptive, "cartesian-adaptive"},
      {Scenario::CartesianFblin, "cartesian-fblin"},
      {Scenario::Grasp, "grasp"}};
  return t;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parseDouble(const std::string& v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (!std::isfinite(x)) throw ConfigError("value must be finite");
  return x;
}

long long parseInteger(const std::string& v) {
  long long x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  return x;
}

bool parseBool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

enum class Range { Any, Positive, NonNegative };

double checked(double x, Range r) {
  if (r == Range::Positive && !(x > 0.0)) throw ConfigError("must be positive");
  if (r == Range::NonNegative && !(x >= 0.0)) throw ConfigError("must be non-negative");
  return x;
}

using Setter = std::function<void(const std::string&)>;
using Registry = std::map<std::string, Setter>;

Setter num(double& ref, Range r = Range::Any, double scale = 1.0) {
  return [&ref, r, scale](const std::string& v) { ref = checked(parseDouble(v), r) * scale; };
}

template <typename Vec>
Setter all(Vec& ref, Range r) {
  return [&ref, r](const std::string& v) { ref.setConstant(checked(parseDouble(v), r)); };
}

Setter integer(int& ref, int min) {
  return [&ref, min](const std::string& v) {
    const long long x = parseInteger(v);
    if (x < min || x > std::numeric_limits<int>::max()) {
      throw ConfigError("must be an integer of at least " + std::to_string(min));
    }
    ref = static_cast<int>(x);
  };
}

Setter flag(bool& ref) {
  return [&ref](const std::string& v) { ref = parseBool(v); };
}

void addTiming(Registry& k, const std::string& s, RunTiming& t) {
  k[s + ".dt"] = num(t.dt, Range::Positive);
  k[s + ".duration"] = num(t.duration, Range::Positive);
  k[s + ".substeps"] = integer(t.substeps, 1);
  k[s + ".log_every"] = integer(t.log_every, 1);
  k[s + ".noise_std"] = num(t.noise_std, Range::NonNegative);
  k[s + ".filter_hz"] = num(t.filter_hz, Range::NonNegative);
  k[s + ".clamp"] = flag(t.clamp);
}

Registry registry(RunConfig& c) {
  Registry k;
  FingerModel& f = c.finger;
  k["finger.L1_mm"] = num(f.kin.L1, Range::Positive, 1e-3);
  k["finger.L2_mm"] = num(f.kin.L2, Range::Positive, 1e-3);
  k["finger.m1"] = num(f.dyn.m1, Range::Positive);
  k["finger.m2"] = num(f.dyn.m2, Range::Positive);
  k["finger.K1"] = num(f.dyn.K1, Range::NonNegative);
  k["finger.K2"] = num(f.dyn.K2, Range::NonNegative);
  k["finger.D1"] = num(f.dyn.D1, Range::NonNegative);
  k["finger.D2"] = num(f.dyn.D2, Range::NonNegative);
  k["finger.alpha1"] = num(f.act.alpha1, Range::Positive);
  k["finger.alpha2"] = num(f.act.alpha2, Range::Positive);

  k["sim.seed"] = [&c](const std::string& v) {
    const long long x = parseInteger(v);
    if (x < 0) throw ConfigError("must be non-negative");
    c.seed = static_cast<std::uint64_t>(x);
  };
  k["sim.t_skip"] = num(c.t_skip, Range::NonNegative);

  IdentSection& id = c.ident;
  k["ident.p_start"] = num(id.p_start, Range::NonNegative);
  k["ident.p_end"] = num(id.p_end, Range::Positive);
  k["ident.slope"] = num(id.slope, Range::Positive);
  k["ident.dt"] = num(id.dt, Range::Positive);
  k["ident.noise_std"] = num(id.noise_std, Range::NonNegative);
  k["ident.filter_hz"] = num(id.filter_hz, Range::NonNegative);
  k["ident.logged_acceleration"] = flag(id.logged_acceleration);

  ValidateSection& va = c.validate;
  k["validate.dt"] = num(va.dt, Range::Positive);
  k["validate.duration"] = num(va.duration, Range::Positive);
  k["validate.offset"] = num(va.offset);
  k["validate.amplitude"] = num(va.amplitude);
  k["validate.omega"] = num(va.omega);
  k["validate.phase2"] = num(va.phase2);

  JointSection& j = c.joint;
  addTiming(k, "joint", j.timing);
  k["joint.K_p"] = all(j.gains.K_p, Range::Positive);
  k["joint.K_v"] = all(j.gains.K_v, Range::Positive);
  k["joint.L_d"] = all(j.gains.L_d, Range::Positive);
  k["joint.Lambda"] = all(j.gains.Lambda, Range::Positive);
  k["joint.P_f"] = all(j.gains.P_f, Range::Positive);
  k["joint.offset"] = num(j.ref.offset);
  k["joint.amplitude"] = num(j.ref.amplitude);
  k["joint.omega"] = num(j.ref.omega);
  k["joint.initial_scale"] = num(j.initial_scale, Range::Positive);
  k["pid.k_p"] = num(j.pid.k_p, Range::NonNegative);
  k["pid.k_i"] = num(j.pid.k_i, Range::NonNegative);
  k["pid.k_d1"] = num(j.pid.k_d1, Range::NonNegative);
  k["pid.k_d2"] = num(j.pid.k_d2, Range::NonNegative);
  k["pid.integral_limit"] = num(j.pid.integral_limit, Range::Positive);
  k["contact.offset"] = num(j.contact_ref.offset);
  k["contact.amplitude"] = num(j.contact_ref.amplitude);
  k["contact.omega"] = num(j.contact_ref.omega);
  k["contact.surface_y"] = num(j.surface_y);
  k["contact.stiffness"] = num(j.surface_stiffness, Range::NonNegative);

  CartesianSection& ca = c.cartesian;
  addTiming(k, "cartesian", ca.timing);
  k["cartesian.K_p"] = num(ca.gains.K_p, Range::Positive);
  k["cartesian.K_v"] = num(ca.gains.K_v, Range::Positive);
  k["cartesian.L_d"] = num(ca.gains.L_d, Range::Positive);
  k["cartesian.L_k"] = num(ca.gains.L_k, Range::Positive);
  k["cartesian.alpha_s"] = num(ca.gains.alpha_s, Range::Positive);
  k["cartesian.P_f"] = all(ca.gains.P_f, Range::Positive);
  k["cartesian.center_x"] = num(ca.ref.center(0));
  k["cartesian.center_y"] = num(ca.ref.center(1));
  k["cartesian.amplitude_x"] = num(ca.ref.amplitude(0));
  k["cartesian.amplitude_y"] = num(ca.ref.amplitude(1));
  k["cartesian.phase_x"] = num(ca.ref.phase(0));
  k["cartesian.phase_y"] = num(ca.ref.phase(1));
  k["cartesian.omega"] = num(ca.ref.omega);
  k["cartesian.base_x"] = num(ca.base(0));
  k["cartesian.base_y"] = num(ca.base(1));
  k["cartesian.initial_scale"] = num(ca.initial_scale, Range::Positive);
  k["cartesian.kinematic_scale"] = num(ca.kinematic_scale, Range::Positive);
  k["cartesian.K_hat_scale"] = num(ca.K_hat_scale, Range::Positive);
  k["cartesian.force_x"] = num(ca.force(0));
  k["cartesian.force_y"] = num(ca.force(1));
  k["cartesian.force_on"] = num(ca.force_on, Range::NonNegative);
  k["cartesian.force_off"] = num(ca.force_off, Range::NonNegative);
  k["cartesian.fblin_K_p"] = num(ca.fblin_K_p, Range::Positive);
  k["cartesian.fblin_K_v"] = num(ca.fblin_K_v, Range::Positive);

  GraspSection& g = c.grasp;
  CoopConfig& co = g.coop;
  addTiming(k, "grasp", g.timing);
  k["grasp.separation"] = num(co.layout.separation, Range::Positive);
  k["grasp.midline"] = num(co.layout.midline);
  k["grasp.base_y"] = num(co.layout.base_y);
  k["grasp.tilt"] = num(co.layout.tilt);
  k["grasp.side"] = num(co.grip.side, Range::Positive);
  k["grasp.mass"] = num(co.grip.mass, Range::Positive);
  k["grasp.K_s"] = num(co.grip.K_s, Range::NonNegative);
  k["grasp.k_p"] = num(co.gains.locked.k_p, Range::Positive);
  k["grasp.k_v"] = num(co.gains.locked.k_v, Range::Positive);
  k["grasp.Gamma_k"] = num(co.gains.locked.Gamma_k, Range::Positive);
  k["grasp.Gamma_Ld"] = num(co.gains.locked.Gamma_d, Range::Positive);
  k["grasp.P_L"] = num(co.gains.locked.P, Range::Positive);
  k["grasp.lambda_L"] = num(co.gains.locked.lambda, Range::Positive);
  k["grasp.k"] = num(co.gains.shaped.k, Range::Positive);
  k["grasp.k_d"] = num(co.gains.shaped.k_d, Range::Positive);
  k["grasp.Gamma_Ed"] = num(co.gains.shaped.Gamma_d, Range::Positive);
  k["grasp.P_E"] = num(co.gains.shaped.P, Range::Positive);
  k["grasp.lambda_E"] = num(co.gains.shaped.lambda, Range::Positive);
  k["grasp.center_x"] = num(co.ref.center(0));
  k["grasp.center_y"] = num(co.ref.center(1));
  k["grasp.amplitude_x"] = num(co.ref.amplitude(0));
  k["grasp.amplitude_y"] = num(co.ref.amplitude(1));
  k["grasp.omega"] = num(co.ref.omega);
  k["grasp.X_E_x"] = num(co.ref.X_E(0));
  k["grasp.X_E_y"] = num(co.ref.X_E(1));
  k["grasp.disturbance_x"] = num(co.disturbance(0));
  k["grasp.disturbance_y"] = num(co.disturbance(1));
  k["grasp.disturbance_on"] = num(co.disturbance_on, Range::NonNegative);
  k["grasp.initial_scale"] = num(co.initial_dynamics_scale, Range::Positive);
  k["grasp.kinematic_scale"] = num(co.initial_kinematics_scale, Range::Positive);
  return k;
}

// The value a CSV reader recovers from format_number.
double csvValue(double v) { return std::stod(format_number(v)); }

SimConfig simConfig(const RunTiming& t, std::uint64_t seed) {
  SimConfig s;
  s.dt = t.dt;
  s.duration = t.duration;
  s.substeps = t.substeps;
  s.log_every = t.log_every;
  s.noise_std = t.noise_std;
  s.filter_cutoff = t.filter_hz;
  s.clamp_pressure = t.clamp;
  s.seed = seed;
  return s;
}

void checkSkip(const RunConfig& c, double duration) {
  if (!(c.t_skip < duration)) throw ConfigError("sim.t_skip must be shorter than the run duration");
}

std::string trajectoryCsv(const Trajectory& t) {
  std::ostringstream os;
  write_trajectory_csv(os, t);
  return os.str();
}

std::string metricsCsv(const MetricsReport& m) {
  std::ostringstream os;
  write_metrics_csv(os, m);
  return os.str();
}

struct Columns {
  std::vector<double> t;
  std::vector<std::vector<double>> v;
  explicit Columns(int n) : v(n) {}
  void push(double time, std::initializer_list<double> values) {
    t.push_back(csvValue(time));
    int i = 0;
    for (double x : values) v[i++].push_back(csvValue(x));
  }
};

PlotSeries series(const std::string& name, const std::vector<double>& x, const std::vector<double>& y,
                  bool dashed = false) {
  return {name, x, y, dashed};
}

std::string metricsSummary(const MetricsReport& m, const std::string& unit, double scale) {
  std::ostringstream os;
  os << "post-transient metrics (t >= " << m.t_skip << " s), " << unit << ":\n";
  for (const auto& c : m.channels) {
    os << "  " << c.channel << ": rmse " << format_number(c.rmse * scale) << ", max " << format_number(c.max_error * scale)
       << ", final " << format_number(c.final_error * scale) << '\n';
  }
  return os.str();
}

ScenarioOutput runIdentify(const RunConfig& c) {
  FingerModel truth = c.finger;
  truth.placement.angle = std::numbers::pi;
  RampExperiment e;
  e.p_start = c.ident.p_start;
  e.p_end = c.ident.p_end;
  e.slope = c.ident.slope;
  if (!(e.p_end > e.p_start)) throw ConfigError("ident.p_end must exceed ident.p_start");
  e.sim.dt = c.ident.dt;
  e.sim.noise_std = c.ident.noise_std;
  e.sim.filter_cutoff = c.ident.filter_hz;
  e.sim.seed = c.seed;
  e.acceleration = c.ident.logged_acceleration ? AccelerationSource::Logged : AccelerationSource::CentralDifference;
  const auto samples = generate_ramp_experiment(truth, e);
  const Vector2 g = truth.placement.vectorToLocal(e.sim.gravity);
  const Regression reg = build_regression(samples, truth.dyn.m1, truth.dyn.m2, truth.kin, g);
  const IdentResult res = solve_least_squares(reg.A, reg.Y);
  const Vector6 x_true = ident_truth(truth.dyn, truth.act);

  ScenarioOutput out;
  out.ident = res;
  std::ostringstream ident;
  write_ident_csv(ident, res, x_true);
  out.files.emplace_back("ident.csv", ident.str());

  std::ostringstream s;
  s << "k,q1,q2,qdot1,qdot2,qddot1,qddot2,p1,p2\n";
  Columns cols(4);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const IdentSample& x = samples[k];
    s << k;
    for (double v : {x.q(0), x.q(1), x.qdot(0), x.qdot(1), x.qddot(0), x.qddot(1), x.pressure(0), x.pressure(1)}) {
      s << ',' << format_number(v);
    }
    s << '\n';
    cols.push(static_cast<double>(k) * e.sim.dt, {x.q(0), x.q(1), x.pressure(0), x.pressure(1)});
  }
  out.files.emplace_back("samples.csv", s.str());
  out.plots.push_back({"ramp_curvature", "elapsed ramp time [s]", "q [rad]",
                       {series("q1", cols.t, cols.v[0]), series("q2", cols.t, cols.v[1])}});
  out.plots.push_back({"ramp_pressure", "elapsed ramp time [s]", "p [bar]",
                       {series("p1", cols.t, cols.v[2]), series("p2", cols.t, cols.v[3])}});

  std::ostringstream sum;
  sum << "identified from " << samples.size() << " samples, rank " << res.rank << ", condition "
      << format_number(res.condition) << "\n";
  const auto& names = ident_parameter_names();
  for (int i = 0; i < 6; ++i) {
    sum << "  " << names[i] << ": " << format_number(res.x(i)) << "  truth " << format_number(x_true(i))
        << "  rel error " << format_number(std::abs(res.x(i) - x_true(i)) / std::abs(x_true(i))) << '\n';
  }
  for (const auto& n : res.negative) sum << "  warning: " << n << " identified negative\n";
  out.summary = sum.str();
  return out;
}

ScenarioOutput runValidate(const RunConfig& c) {
  const ValidateSection& v = c.validate;
  SimConfig sim;
  sim.dt = v.dt;
  sim.duration = v.duration;
  sim.seed = c.seed;
  OpenLoopController ctl(PressureSignal::sinusoid(v.offset, v.amplitude, v.omega, 0.0),
                         PressureSignal::sinusoid(v.offset, v.amplitude, v.omega, v.phase2));
  const FingerModel& m = c.finger;
  ScenarioOutput out;
  out.trajectory = simulate(ctl, m, {}, sim);
  const Vector2 g = m.placement.vectorToLocal(sim.gravity);

  double route = 0.0, skew = 0.0;
  const double h = 1e-6;
  for (const auto& r : out.trajectory.records) {
    const auto d = soft_dynamics<double>(r.q, r.qdot, m.dyn, m.kin, g);
    const auto o = direct_dynamics_oracle<double>(r.q, r.qdot, m.dyn, m.kin, g);
    route = std::max(route, (d.M - o.M).norm() / o.M.norm());
    const Matrix2 Mdot = (direct_inertia<double>(r.q + h * r.qdot, m.dyn, m.kin) -
                          direct_inertia<double>(r.q - h * r.qdot, m.dyn, m.kin)) /
                         (2 * h);
    const Matrix2 N = Mdot - 2 * d.C;
    skew = std::max(skew, (N + N.transpose()).cwiseAbs().maxCoeff());
  }
  std::ostringstream checks;
  checks << "name,value\n"
         << "max_inertia_route_mismatch," << format_number(route) << '\n'
         << "max_skew_residual," << format_number(skew) << '\n';
  out.files.emplace_back("trajectory.csv", trajectoryCsv(out.trajectory));
  out.files.emplace_back("checks.csv", checks.str());

  Columns cols(4);
  for (const auto& r : out.trajectory.records) cols.push(r.t, {r.q(0), r.q(1), r.pressure(0), r.pressure(1)});
  out.plots.push_back({"curvature", "t [s]", "q [rad]", {series("q1", cols.t, cols.v[0]), series("q2", cols.t, cols.v[1])}});
  out.plots.push_back(
      {"pressure", "t [s]", "p [bar]", {series("p1", cols.t, cols.v[2]), series("p2", cols.t, cols.v[3])}});
  out.summary = "open-loop replay, " + std::to_string(out.trajectory.size()) +
                " samples\n  max inertia route mismatch " + format_number(route) + "\n  max skew residual " +
                format_number(skew) + "\n";
  return out;
}

ScenarioOutput runJoint(const RunConfig& c, bool adaptive, bool contact) {
  const JointSection& j = c.joint;
  const SimConfig sim = simConfig(j.timing, c.seed);
  checkSkip(c, sim.duration);
  const FingerModel& m = c.finger;
  const SinusoidReference ref = contact ? j.contact_ref : j.ref;
  ForceScenario forces;
  if (contact) forces.obstacle = Obstacle{Vector2(0.0, j.surface_y), Vector2(0.0, 1.0), j.surface_stiffness};

  ScenarioOutput out;
  if (adaptive) {
    AdaptiveState est;
    est.theta_d = j.initial_scale * m.dyn.asVector();
    est.theta_k = m.kin.asVector();
    AdaptiveJointController ctl(j.gains, ref, est, m.kin, m.act, m.placement.vectorToLocal(sim.gravity));
    out.trajectory = simulate(ctl, m, forces, sim);
  } else {
    PIDJointController ctl(j.pid, ref, m.act);
    out.trajectory = simulate(ctl, m, forces, sim);
  }

  Columns cols(6);
  for (const auto& r : out.trajectory.records) {
    cols.push(r.t, {r.q(0), r.q_ref(0), r.q(1), r.q_ref(1), r.pressure(0), r.pressure(1)});
  }
  out.metrics.t_skip = c.t_skip;
  out.metrics.channels = {channel_metrics("q1", cols.t, cols.v[0], cols.v[1], c.t_skip),
                          channel_metrics("q2", cols.t, cols.v[2], cols.v[3], c.t_skip)};
  out.files.emplace_back("trajectory.csv", trajectoryCsv(out.trajectory));
  out.files.emplace_back("metrics.csv", metricsCsv(out.metrics));
  for (int i = 0; i < 2; ++i) {
    const std::string n = "q" + std::to_string(i + 1);
    out.plots.push_back({n, "t [s]", n + " [rad]",
                         {series(n, cols.t, cols.v[2 * i]), series(n + " reference", cols.t, cols.v[2 * i + 1], true)}});
  }
  out.plots.push_back(
      {"pressure", "t [s]", "p [bar]", {series("p1", cols.t, cols.v[4]), series("p2", cols.t, cols.v[5])}});
  out.summary = metricsSummary(out.metrics, "rad", 1.0);
  return out;
}

ScenarioOutput runCartesian(const RunConfig& c, bool adaptive) {
  const CartesianSection& ca = c.cartesian;
  const SimConfig sim = simConfig(ca.timing, c.seed);
  checkSkip(c, sim.duration);
  FingerModel m = c.finger;
  m.placement.base = ca.base;
  ForceScenario forces;
  forces.constant_tip_force = ca.force;
  forces.t_on = ca.force_on;
  forces.t_off = ca.force_off;

  InitialState init;
  try {
    init.q = inverse_kinematics(m.placement.vectorToLocal(ca.ref(0.0).x - m.placement.base), m.kin);
  } catch (const DomainError&) {
    throw ConfigError("cartesian reference start is out of reach of the finger");
  }

  ScenarioOutput out;
  int damped = 0;
  if (adaptive) {
    AdaptiveState est;
    est.theta_d = ca.initial_scale * m.dyn.asVector();
    est.theta_k = ca.kinematic_scale * m.kin.asVector();
    CartesianAdaptiveController ctl(ca.gains, ca.ref, est, m.act.scaled(ca.K_hat_scale), m.placement, sim.gravity);
    out.trajectory = simulate(ctl, m, forces, sim, init);
    damped = ctl.dampedEvents();
  } else {
    const NominalModel nominal{m.dyn.scaled(ca.initial_scale), m.kin.scaled(ca.kinematic_scale),
                               m.act.scaled(ca.K_hat_scale)};
    FeedbackLinearizationController ctl(ca.fblin_K_p, ca.fblin_K_v, ca.ref, nominal, m.placement, sim.gravity);
    out.trajectory = simulate(ctl, m, forces, sim, init);
    damped = ctl.dampedEvents();
  }

  Columns cols(4);
  std::ostringstream task;
  task << "t,x,y,x_ref,y_ref\n";
  for (const auto& r : out.trajectory.records) {
    const Vector2 xd = ca.ref(r.t).x;
    cols.push(r.t, {r.tip(0), xd(0), r.tip(1), xd(1)});
    task << format_number(r.t) << ',' << format_number(r.tip(0)) << ',' << format_number(r.tip(1)) << ','
         << format_number(xd(0)) << ',' << format_number(xd(1)) << '\n';
  }
  out.metrics.t_skip = c.t_skip;
  out.metrics.channels = {channel_metrics("x", cols.t, cols.v[0], cols.v[1], c.t_skip),
                          channel_metrics("y", cols.t, cols.v[2], cols.v[3], c.t_skip)};
  out.files.emplace_back("trajectory.csv", trajectoryCsv(out.trajectory));
  out.files.emplace_back("task.csv", task.str());
  out.files.emplace_back("metrics.csv", metricsCsv(out.metrics));
  out.plots.push_back({"x", "t [s]", "x [m]", {series("x", cols.t, cols.v[0]), series("x reference", cols.t, cols.v[1], true)}});
  out.plots.push_back({"y", "t [s]", "y [m]", {series("y", cols.t, cols.v[2]), series("y reference", cols.t, cols.v[3], true)}});
  out.plots.push_back({"path", "x [m]", "y [m]",
                       {series("tip", cols.v[0], cols.v[2]), series("reference", cols.v[1], cols.v[3], true)}});
  out.summary = metricsSummary(out.metrics, "mm", 1e3);
  if (damped > 0) out.summary += "  damped Jacobian inverse used on " + std::to_string(damped) + " samples\n";
  return out;
}

ScenarioOutput runGrasp(const RunConfig& c) {
  CoopConfig co = c.grasp.coop;
  co.sim = simConfig(c.grasp.timing, c.seed);
  checkSkip(c, co.sim.duration);
  for (int i = 0; i < 2; ++i) {
    co.truth.dyn[i] = c.finger.dyn;
    co.truth.kin[i] = c.finger.kin;
    co.truth.act[i] = c.finger.act;
  }
  ScenarioOutput out;
  out.coop = coop_simulate(co);

  Columns cols(10);
  for (const auto& r : out.coop.records) {
    cols.push(r.t, {r.z.X_L(0), r.z_ref.X_L(0), r.z.X_L(1), r.z_ref.X_L(1), r.z.X_E(0), r.z_ref.X_E(0), r.z.X_E(1),
                    r.z_ref.X_E(1), r.grip(0), r.grip(1)});
  }
  out.metrics.t_skip = c.t_skip;
  const char* names[] = {"XL_x", "XL_y", "XE_x", "XE_y"};
  for (int i = 0; i < 4; ++i) {
    out.metrics.channels.push_back(channel_metrics(names[i], cols.t, cols.v[2 * i], cols.v[2 * i + 1], c.t_skip));
    out.plots.push_back({names[i], "t [s]", std::string(names[i]) + " [m]",
                         {series(names[i], cols.t, cols.v[2 * i]),
                          series(std::string(names[i]) + " reference", cols.t, cols.v[2 * i + 1], true)}});
  }
  out.plots.push_back({"grip_force", "t [s]", "force on tip 1 [N]",
                       {series("grip_fx", cols.t, cols.v[8]), series("grip_fy", cols.t, cols.v[9])}});
  std::ostringstream coop;
  write_coop_csv(coop, out.coop);
  out.files.emplace_back("coop.csv", coop.str());
  out.files.emplace_back("finger1.csv", trajectoryCsv(out.coop.finger[0]));
  out.files.emplace_back("finger2.csv", trajectoryCsv(out.coop.finger[1]));
  out.files.emplace_back("metrics.csv", metricsCsv(out.metrics));
  out.summary = metricsSummary(out.metrics, "mm", 1e3);
  return out;
}

void writeFile(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << contents;
  f.close();
  if (!f) throw IoError("failed writing " + path.string());
}

std::string escapeXml(const std::string& s) {
  std::string r;
  for (char ch : s) {
    switch (ch) {
      case '&': r += "&amp;"; break;
      case '<': r += "&lt;"; break;
      case '>': r += "&gt;"; break;
      case '"': r += "&quot;"; break;
      default: r += ch;
    }
  }
  return r;
}

// Round step of about (hi - lo) / 5 from {1, 2, 5} x 10^n.
double tickStep(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0}) {
    if (m * p >= raw) return m * p;
  }
  return 10.0 * p;
}

std::string svgNumber(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> n = [] {
    std::vector<std::string> v;
    for (const auto& [s, name] : scenarioTable()) v.push_back(name);
    return v;
  }();
  return n;
}

Scenario parse_scenario(const std::string& name) {
  for (const auto& [s, n] : scenarioTable()) {
    if (n == name) return s;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
  for (const auto& [sc, n] : scenarioTable()) {
    if (sc == s) return n;
  }
  return "unknown";
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  Registry reg = registry(cfg);
  const auto it = reg.find(key);
  if (it == reg.end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second(trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(n) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) throw ConfigError("line " + std::to_string(n) + ": key '" + key + "' outside a section");
    try {
      apply_setting(base, section + "." + key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> keys;
  for (const auto& [k, s] : registry(c)) keys.push_back(k);
  return keys;
}

double rmse(const std::vector<double>& t, const std::vector<double>& signal, const std::vector<double>& reference,
            double t_skip) {
  return channel_metrics("", t, signal, reference, t_skip).rmse;
}

ChannelMetrics channel_metrics(const std::string& channel, const std::vector<double>& t,
                               const std::vector<double>& signal, const std::vector<double>& reference,
                               double t_skip) {
  if (t.size() != signal.size() || signal.size() != reference.size()) {
    throw std::invalid_argument("rmse: signal, reference and time lengths differ");
  }
  ChannelMetrics m;
  m.channel = channel;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_skip) continue;
    const double e = signal[k] - reference[k];
    sum += e * e;
    m.max_error = std::max(m.max_error, std::abs(e));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rmse: no samples after t_skip");
  m.rmse = std::sqrt(sum / static_cast<double>(n));
  m.final_error = signal.back() - reference.back();
  return m;
}

const ChannelMetrics& MetricsReport::at(const std::string& channel) const {
  for (const auto& c : channels) {
    if (c.channel == channel) return c;
  }
  throw std::out_of_range("no metrics channel '" + channel + "'");
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  char buf[40];
  const auto full = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "channel,rmse,max_abs_error,final_error,t_skip\n";
  for (const auto& c : report.channels) {
    out << c.channel << ',' << full(c.rmse) << ',' << full(c.max_error) << ',' << full(c.final_error) << ','
        << full(report.t_skip) << '\n';
  }
}

void write_svg_plot(std::ostream& out, const Plot& plot) {
  const double W = 720, H = 420, left = 80, right = 160, top = 40, bottom = 56;
  const double pw = W - left - right, ph = H - top - bottom;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series) {
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y0))) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escapeXml(plot.title)
      << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  const double xs = tickStep(x0, x1), ys = tickStep(y0, y1);
  for (double x = std::ceil(x0 / xs) * xs; x <= x1 + 1e-9 * xs; x += xs) {
    out << "<line x1=\"" << sx(x) << "\" y1=\"" << top << "\" x2=\"" << sx(x) << "\" y2=\"" << top + ph
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << sx(x) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << svgNumber(x) << "</text>\n";
  }
  for (double y = std::ceil(y0 / ys) * ys; y <= y1 + 1e-9 * ys; y += ys) {
    out << "<line x1=\"" << left << "\" y1=\"" << sy(y) << "\" x2=\"" << left + pw << "\" y2=\"" << sy(y)
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">"
        << svgNumber(y) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << escapeXml(plot.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escapeXml(plot.y_label) << "</text>\n";

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const PlotSeries& s = plot.series[i];
    const char* color = colors[i % 6];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    const std::size_t stride = std::max<std::size_t>(1, n / 2000);
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (s.dashed) out << " stroke-dasharray=\"6 4\"";
    out << " points=\"";
    for (std::size_t k = 0; k < n; k += stride) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      out << svgNumber(sx(s.x[k])) << ',' << svgNumber(sy(s.y[k])) << ' ';
    }
    out << "\"/>\n";
    const double ly = top + 16 + 18 * static_cast<double>(i);
    out << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
        << "/>\n<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << escapeXml(s.name) << "</text>\n";
  }
  out << "</svg>\n";
}

ScenarioOutput run_scenario(const RunConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::Identify: return runIdentify(cfg);
    case Scenario::ValidateDynamics: return runValidate(cfg);
    case Scenario::JointAdaptive: return runJoint(cfg, true, false);
    case Scenario::JointPID: return runJoint(cfg, false, false);
    case Scenario::JointAdaptiveContact: return runJoint(cfg, true, true);
    case Scenario::JointPIDContact: return runJoint(cfg, false, true);
    case Scenario::CartesianAdaptive: return runCartesian(cfg, true);
    case Scenario::CartesianFblin: return runCartesian(cfg, false);
    case Scenario::Grasp: return runGrasp(cfg);
  }
  throw ConfigError("unknown scenario");
}

ScenarioOutput run(const RunConfig& cfg) {
  ScenarioOutput out = run_scenario(cfg);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.out_dir.string() + ": " + ec.message());
  for (const auto& [name, contents] : out.files) writeFile(cfg.out_dir / name, contents);
  for (const auto& p : out.plots) {
    std::ostringstream svg;
    write_svg_plot(svg, p);
    writeFile(cfg.out_dir / (p.title + ".svg"), svg.str());
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  return 2;
}

}  // namespace softgrip
