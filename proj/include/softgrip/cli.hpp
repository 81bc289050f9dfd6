#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softgrip/coop.hpp"
#include "softgrip/ctrl.hpp"
#include "softgrip/ident.hpp"

namespace softgrip {

enum class Scenario {
  Identify,
  ValidateDynamics,
  JointAdaptive,
  JointPID,
  JointAdaptiveContact,
  JointPIDContact,
  CartesianAdaptive,
  CartesianFblin,
  Grasp
};

const std::vector<std::string>& scenario_names();
Scenario parse_scenario(const std::string& name);  // throws ConfigError
std::string scenario_name(Scenario s);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Timing, sensing and clamping shared by the scenario sections.
struct RunTiming {
  double dt = 1e-3;
  double duration = 10.0;
  int substeps = 10;
  int log_every = 1;
  double noise_std = 0.0;
  double filter_hz = 30.0;
  bool clamp = true;
};

struct IdentSection {
  double p_start = 0.3;
  double p_end = 1.8;
  double slope = 0.1;
  double dt = 1e-3;
  double noise_std = 0.01;
  double filter_hz = 30.0;
  bool logged_acceleration = false;
};

struct ValidateSection {
  double dt = 1e-3;
  double duration = 10.0;
  double offset = 0.8;
  double amplitude = 0.4;
  double omega = 3.0;
  double phase2 = 1.57;
};

struct JointSection {
  RunTiming timing;
  JointGains gains;
  PIDGains pid;
  SinusoidReference ref;
  double initial_scale = 0.7;
  // contact variant
  SinusoidReference contact_ref{0.7, 0.3, 2.0, 0.0};
  double surface_y = 0.13;  // m, world frame
  double surface_stiffness = 50.0;
};

struct CartesianSection {
  RunTiming timing{1e-4, 20.0, 1, 10, 0.0, 30.0, false};
  CartesianGains gains;
  EllipseReference ref;
  Vector2 base{0.06, 0.0};
  double initial_scale = 0.7;
  double kinematic_scale = 0.7;
  double K_hat_scale = 0.7;
  Vector2 force{0.0, -0.2};
  double force_on = 5.0;
  double force_off = 15.0;
  double fblin_K_p = 50.0;
  double fblin_K_v = 10.0;
};

struct GraspSection {
  RunTiming timing{1e-4, 10.0, 1, 10, 0.0, 30.0, false};
  CoopConfig coop;
};

struct RunConfig {
  Scenario scenario = Scenario::JointAdaptive;
  std::filesystem::path out_dir = "softgrip-out";
  FingerModel finger;
  std::uint64_t seed = 1;
  double t_skip = 3.0;  // s, transient excluded from metrics
  IdentSection ident;
  ValidateSection validate;
  JointSection joint;
  CartesianSection cartesian;
  GraspSection grasp;
};

/// Applies one `section.key = value` override; errors name the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses INI text (`[section]` headers, `key = value`, `#` or `;` comments)
/// on top of the defaults; errors name the key and the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});

/// Every accepted `section.key`.
std::vector<std::string> config_keys();

/// Square root of the mean squared error over samples with t >= t_skip.
double rmse(const std::vector<double>& t, const std::vector<double>& signal, const std::vector<double>& reference,
            double t_skip);

struct ChannelMetrics {
  std::string channel;
  double rmse = 0.0;
  double max_error = 0.0;    // largest |error| after t_skip
  double final_error = 0.0;  // error at the last sample
};

struct MetricsReport {
  double t_skip = 3.0;
  std::vector<ChannelMetrics> channels;

  const ChannelMetrics& at(const std::string& channel) const;
};

ChannelMetrics channel_metrics(const std::string& channel, const std::vector<double>& t,
                               const std::vector<double>& signal, const std::vector<double>& reference,
                               double t_skip);

void write_metrics_csv(std::ostream& out, const MetricsReport& report);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  bool dashed = false;
};

struct Plot {
  std::string title;
  std::string x_label = "t [s]";
  std::string y_label;
  std::vector<PlotSeries> series;
};

void write_svg_plot(std::ostream& out, const Plot& plot);

/// Everything a scenario produced, before it is written to disk.
struct ScenarioOutput {
  MetricsReport metrics;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
  std::vector<Plot> plots;                                 // written as <title>.svg
  std::string summary;                                     // printed on stdout
  Trajectory trajectory;                                   // single-finger runs
  CoopResult coop;                                         // grasp runs
  std::optional<IdentResult> ident;
};

ScenarioOutput run_scenario(const RunConfig& cfg);

/// Runs the scenario and writes its files into cfg.out_dir; returns the output.
ScenarioOutput run(const RunConfig& cfg);

/// Exit status for an exception escaping run(): 1 config, 2 simulation, 3 I/O.
int exit_code_for(const std::exception& e);

}  // namespace softgrip
