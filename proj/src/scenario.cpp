#include "cavlock/scenario.hpp"

#include "cavlock/error.hpp"

#include <cmath>
#include <map>

namespace cavlock {

namespace {

// Measured rms length fluctuations (pm).
const std::map<std::string, double>& reference_rms_pm() {
  static const std::map<std::string, double> table{
      {"bare-rt-pt-off", 23.5},    {"bare-4k-pt-on", 31.6},     {"bare-4k-pt-off", 19.8},
      {"bare-mk15-pt-on", 30.0},   {"bare-mk15-pt-off", 19.9},  {"diamond-rt-pt-off", 13.1},
      {"diamond-4k-pt-on", 46.0},  {"diamond-4k-pt-off", 21.5}, {"diamond-mk15-pt-on", 63.0},
      {"diamond-mk15-pt-off", 16.8}};
  return table;
}

} // namespace

std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const char* cavity : {"bare", "diamond"})
    for (const char* stage : {"rt-pt-off", "4k-pt-on", "4k-pt-off", "mk15-pt-on", "mk15-pt-off"})
      names.push_back(std::string(cavity) + "-" + stage);
  return names;
}

Scenario scenario(const std::string& name) {
  const auto& table = reference_rms_pm();
  auto it = table.find(name);
  if (it == table.end()) {
    std::string known;
    for (const std::string& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown scenario '" + name + "' (known: " + known + ")");
  }
  Scenario s;
  s.name = name;
  const bool diamond = name.rfind("diamond-", 0) == 0;
  s.cavity_preset = diamond ? "diamond" : "bare";
  s.plant_preset = s.cavity_preset;
  s.servo_preset = s.cavity_preset;
  s.noise_preset = diamond ? name : name.substr(std::string("bare-").size());
  s.reference_rms_m = it->second * 1e-12;
  return s;
}

SimConfig scenario_config(const Scenario& s) {
  SimConfig c;
  c.cavity = cavity_preset(s.cavity_preset);
  c.noise = noise_preset(s.noise_preset);
  c.plant = plant_preset(s.plant_preset);
  c.servo = servo_preset(s.servo_preset);
  return c;
}

ScenarioResult run_scenario(const SimConfig& config, double duration_s, std::uint64_t seed) {
  validate(config);
  ScenarioResult r;
  r.derived = derive(config.cavity);

  // Calibration scan over 1.5 FSR with ~20 samples per linewidth.
  ScanRamp ramp;
  ramp.start_detuning_hz = -0.25 * r.derived.fsr;
  ramp.stop_detuning_hz = 1.25 * r.derived.fsr;
  ramp.duration_s = 10e-3;
  ramp.sample_rate_hz =
      std::ceil(20.0 * (ramp.stop_detuning_hz - ramp.start_detuning_hz) / r.derived.linewidth_fwhm / ramp.duration_s);
  const ScanSpectrum scan = scan_spectrum(config.cavity, config.pdh, ramp, derive_seed(seed, 3));
  analysis::ScanFitOptions fit_options;
  fit_options.nominal_sweep_rate_hz_per_s = ramp.sweep_rate_hz_per_s();
  r.scan_fit = analysis::fit_scan(scan.transmission, config.pdh.modulation_frequency_Omega, fit_options);
  r.error_calibration = analysis::calibrate_error_slope(scan.error, r.scan_fit);

  r.run = run_closed_loop(config.cavity, config.pdh, config.noise, config.plant, config.servo, duration_s, seed);
  const LockReport& report = r.run.report;
  if (report.residual_error.size() > 16) {
    r.error_displacement = analysis::error_to_displacement(report.residual_error, r.error_calibration,
                                                           r.scan_fit.finesse, config.cavity.wavelength_lambda);
    r.residual_asd = analysis::compute_asd(report.residual_displacement);
    const std::size_t first = static_cast<std::size_t>(
        std::llround((report.residual_displacement.t0_s - r.run.disturbance.t0_s) * r.run.disturbance.sample_rate_hz));
    const Trace disturbance = r.run.disturbance.slice(first, first + report.residual_displacement.size());
    r.disturbance_asd = analysis::compute_asd(disturbance);
  }

  const LoopModel model(config.cavity, config.pdh, config.plant, config.servo);
  r.sensitivity_10hz_db = 20.0 * std::log10(std::abs(model.sensitivity(10.0)));
  return r;
}

} // namespace cavlock
