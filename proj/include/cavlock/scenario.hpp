#pragma once

#include "cavlock/analysis/calibration.hpp"
#include "cavlock/analysis/fit.hpp"
#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/io.hpp"
#include "cavlock/servo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cavlock {

// One measured condition: cavity (bare or diamond) at a temperature stage
// (rt, 4k, mk15) with the pulse tube on or off.
struct Scenario {
  std::string name;
  std::string cavity_preset;
  std::string noise_preset;
  std::string plant_preset;
  std::string servo_preset;
  double reference_rms_m = 0.0; // measured rms length fluctuation for this condition
};

// Names have the form <bare|diamond>-<rt|4k|mk15>-pt-<on|off>; room
// temperature exists only with the pulse tube off.
Scenario scenario(const std::string& name);
std::vector<std::string> scenario_names();
SimConfig scenario_config(const Scenario& s);

struct ScenarioResult {
  ClosedLoopRun run;
  DerivedCavity derived;
  // Calibration chain applied to the simulated signals, as on the bench:
  // scan, fit, tanh calibration, then error -> length on the locked error.
  analysis::ScanFit scan_fit;
  analysis::ErrorCalibration error_calibration;
  analysis::DisplacementResult error_displacement;
  analysis::AsdTable residual_asd;
  analysis::AsdTable disturbance_asd;
  double sensitivity_10hz_db = 0.0; // loop model |S(10 Hz)|
};

ScenarioResult run_scenario(const SimConfig& config, double duration_s, std::uint64_t seed);

} // namespace cavlock
