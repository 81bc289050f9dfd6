#include "softgrip/ident.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace softgrip {

DynamicParams<double> IdentResult::dynamics(double m1, double m2) const {
  return {m1, m2, x(0), x(1), x(2), x(3)};
}

Vector6 ident_truth(const DynamicParams<double>& dyn, const ActuationMap<double>& act) {
  return (Vector6() << dyn.K1, dyn.K2, dyn.D1, dyn.D2, act.alpha1, act.alpha2).finished();
}

Regression build_regression(const std::vector<IdentSample>& samples, double m1, double m2,
                            const KinematicParams<double>& kin, const Vector2& gravity_local) {
  if (samples.size() < 3) throw IdentificationError("at least 3 samples are needed for 6 unknowns");
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Regression r;
  r.A = Eigen::MatrixXd::Zero(2 * n, 6);
  r.Y = Eigen::VectorXd::Zero(2 * n);
  DynamicParams<double> masses;
  masses.m1 = m1;
  masses.m2 = m2;
  for (Eigen::Index k = 0; k < n; ++k) {
    const IdentSample& s = samples[static_cast<std::size_t>(k)];
    if (!s.q.allFinite() || !s.qdot.allFinite() || !s.qddot.allFinite() || !s.pressure.allFinite()) {
      throw IdentificationError("sample " + std::to_string(k) + " is not finite");
    }
    const auto d = soft_dynamics<double>(s.q, s.qdot, masses, kin, gravity_local);
    for (int i = 0; i < 2; ++i) {
      const Eigen::Index row = 2 * k + i;
      r.A(row, i) = s.q(i);
      r.A(row, 2 + i) = s.qdot(i);
      r.A(row, 4 + i) = -s.pressure(i);
    }
    r.Y.segment<2>(2 * k) = -(d.M * s.qddot + d.C * s.qdot + d.G);
  }
  return r;
}

namespace {

std::string describeDirection(const Eigen::VectorXd& v) {
  const auto& names = ident_parameter_names();
  std::ostringstream os;
  bool first = true;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) < 1e-3) continue;
    if (!first) os << (v(i) < 0 ? " - " : " + ");
    else if (v(i) < 0) os << "-";
    os << format_number(std::abs(v(i))) << "*" << names[static_cast<std::size_t>(i)];
    first = false;
  }
  return os.str();
}

}  // namespace

IdentResult solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& Y) {
  if (A.cols() != 6) throw IdentificationError("regression matrix must have 6 columns");
  if (A.rows() != Y.size()) throw IdentificationError("regression matrix and target differ in length");
  if (A.rows() < A.cols()) throw IdentificationError("fewer equations than unknowns");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double tol = sv(0) * 1e-10;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > tol ? 1 : 0;
  if (rank < 6) {
    std::ostringstream os;
    os << "regression matrix has rank " << rank << " of 6; unidentifiable directions:";
    for (Eigen::Index i = rank; i < 6; ++i) os << " [" << describeDirection(svd.matrixV().col(i)) << "]";
    throw IdentificationError(os.str());
  }

  IdentResult r;
  r.x = A.colPivHouseholderQr().solve(Y);
  r.residual_norm = (A * r.x - Y).norm();
  r.condition = sv(0) / sv(sv.size() - 1);
  r.rank = rank;
  for (int i = 0; i < 6; ++i) {
    if (r.x(i) < 0.0) r.negative.push_back(ident_parameter_names()[static_cast<std::size_t>(i)]);
  }
  return r;
}

std::vector<IdentSample> samples_from_trajectory(const Trajectory& traj, const SimConfig& sensor,
                                                 AccelerationSource acceleration) {
  const std::size_t n = traj.size();
  std::vector<IdentSample> out(n);
  if (n < 3) throw IdentificationError("trajectory too short for differencing");

  std::array<SensorFilter, 6> filters{
      SensorFilter(sensor.filter_cutoff, sensor.dt, sensor.noise_std, sensor.seed),
      SensorFilter(sensor.filter_cutoff, sensor.dt, sensor.noise_std, sensor.seed + 1),
      SensorFilter(sensor.filter_cutoff, sensor.dt),
      SensorFilter(sensor.filter_cutoff, sensor.dt),
      SensorFilter(sensor.filter_cutoff, sensor.dt),
      SensorFilter(sensor.filter_cutoff, sensor.dt),
  };
  // The plant rests at zero before the run starts.
  for (auto& f : filters) f.reset(0.0);

  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = traj.records[k];
    out[k].q = Vector2(filters[0](r.q(0)), filters[1](r.q(1)));
    out[k].qdot = Vector2(filters[2](r.qdot(0)), filters[3](r.qdot(1)));
    out[k].pressure = Vector2(filters[4](r.pressure(0)), filters[5](r.pressure(1)));
    out[k].qddot = r.qddot;
  }
  if (acceleration == AccelerationSource::CentralDifference) {
    const double dt = sensor.dt;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t lo = k == 0 ? 0 : k - 1;
      const std::size_t hi = k + 1 == n ? k : k + 1;
      out[k].qddot = (out[hi].qdot - out[lo].qdot) / (static_cast<double>(hi - lo) * dt);
    }
  }
  return out;
}

std::vector<IdentSample> generate_ramp_experiment(const FingerModel& truth, const RampExperiment& experiment) {
  if (!(experiment.slope > 0.0) || !(experiment.p_end > experiment.p_start) || experiment.p_start < 0.0 ||
      experiment.p_end > kMaxPressure) {
    throw ConfigError("ramp must rise within [0, 1.8] bar with positive slope");
  }
  SimConfig cfg = experiment.sim;
  cfg.duration = experiment.duration();
  // The simulator itself runs noise-free and unfiltered; the sensor model is applied afterwards.
  SimConfig plant = cfg;
  plant.noise_std = 0.0;
  plant.filter_cutoff = 0.0;

  const auto ramp = PressureSignal::ramp(experiment.p_start, experiment.p_end, experiment.slope);
  const auto off = PressureSignal::constant(0.0);
  std::vector<std::pair<PressureSignal, PressureSignal>> runs;
  if (experiment.separate) {
    runs = {{ramp, off}, {off, ramp}};
  } else {
    runs = {{ramp, ramp}};
  }

  std::vector<IdentSample> all;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    OpenLoopController c(runs[i].first, runs[i].second);
    const Trajectory traj = simulate(c, truth, {}, plant);
    SimConfig sensor = cfg;
    sensor.seed = cfg.seed + 2 * i;
    const auto samples = samples_from_trajectory(traj, sensor, experiment.acceleration);
    all.insert(all.end(), samples.begin(), samples.end());
  }
  return all;
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory CSV is empty");
  std::map<std::string, std::size_t> col;
  {
    std::istringstream hs(line);
    std::string name;
    std::size_t i = 0;
    while (std::getline(hs, name, ',')) col[name] = i++;
  }
  const char* required[] = {"t",     "q1",   "q2", "qd1", "qd2", "qdot1", "qdot2", "tau1",
                            "tau2",  "p1",   "p2", "tipx", "tipy", "fx",  "fy"};
  for (const char* r : required) {
    if (!col.count(r)) throw std::runtime_error(std::string("trajectory CSV lacks column ") + r);
  }
  Trajectory traj;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        v.push_back(cell == "nan" ? std::nan("") : std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("trajectory CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != col.size()) {
      throw std::runtime_error("trajectory CSV line " + std::to_string(lineno) + ": wrong field count");
    }
    const auto at = [&](const char* name) { return v[col[name]]; };
    TrajectoryRecord r;
    r.t = at("t");
    r.q = Vector2(at("q1"), at("q2"));
    r.q_ref = Vector2(at("qd1"), at("qd2"));
    r.qdot = Vector2(at("qdot1"), at("qdot2"));
    r.tau = Vector2(at("tau1"), at("tau2"));
    r.pressure = Vector2(at("p1"), at("p2"));
    r.tip = Vector2(at("tipx"), at("tipy"));
    r.force = Vector2(at("fx"), at("fy"));
    r.qddot = Vector2::Constant(std::nan(""));
    traj.records.push_back(r);
  }
  return traj;
}

void write_ident_csv(std::ostream& out, const IdentResult& result, const std::optional<Vector6>& truth) {
  out << (truth ? "name,value,truth,rel_error\n" : "name,value\n");
  for (int i = 0; i < 6; ++i) {
    out << ident_parameter_names()[static_cast<std::size_t>(i)] << ',' << format_number(result.x(i));
    if (truth) {
      out << ',' << format_number((*truth)(i)) << ','
          << format_number(std::abs(result.x(i) - (*truth)(i)) / std::abs((*truth)(i)));
    }
    out << '\n';
  }
  out << "residual_norm," << format_number(result.residual_norm) << (truth ? ",,\n" : "\n");
  out << "condition," << format_number(result.condition) << (truth ? ",,\n" : "\n");
}

}  // namespace softgrip
