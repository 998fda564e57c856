#pragma once

#include "cavlock/analysis/calibration.hpp"
#include "cavlock/analysis/fit.hpp"
#include "cavlock/analysis/loss_budget.hpp"
#include "cavlock/cavity.hpp"
#include "cavlock/pdh.hpp"
#include "cavlock/plant.hpp"
#include "cavlock/servo.hpp"
#include "cavlock/vibration.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace cavlock {

using json = nlohmann::ordered_json;

// Everything a simulation needs. A config file is a JSON object with any of
// the sections "cavity", "pdh", "noise", "plant", "servo". A section is
// either a preset name or an object; an object may name a "preset" to start
// from and override individual fields. Missing sections use the bare presets.
struct SimConfig {
  CavityConfig cavity = cavity_preset("bare");
  PdhConfig pdh;
  NoiseSpec noise = noise_preset("mk15-pt-on");
  PlantConfig plant = plant_preset("bare");
  ServoConfig servo = servo_preset("bare");
};

void validate(const SimConfig& config);

json to_json(const CavityConfig& c);
json to_json(const PdhConfig& c);
json to_json(const NoiseSpec& c);
json to_json(const PlantConfig& c);
json to_json(const ServoConfig& c);
json to_json(const SimConfig& c);

CavityConfig cavity_from_json(const json& j);
PdhConfig pdh_from_json(const json& j);
NoiseSpec noise_from_json(const json& j);
PlantConfig plant_from_json(const json& j);
ServoConfig servo_from_json(const json& j);
// Throws ValidationError on unknown fields, wrong types, or invalid values.
SimConfig config_from_json(const json& j);

SimConfig load_config(const std::filesystem::path& path);
json load_json(const std::filesystem::path& path);
json parse_json(const std::string& text);

// Pretty JSON with every floating-point number written with 17 significant
// digits, so values read back bit-exactly.
std::string dump_json(const json& j);

// 64-bit FNV-1a of the canonical dump of the resolved config, as 16 hex digits.
std::string config_hash(const SimConfig& config);
std::string fnv1a_hex(const std::string& bytes);

json to_json(const DerivedCavity& d);
json to_json(const analysis::ScanFit& fit);
analysis::ScanFit scan_fit_from_json(const json& j);
json to_json(const analysis::ErrorCalibration& cal);
analysis::ErrorCalibration error_calibration_from_json(const json& j);
json to_json(const analysis::FringeCalibration& cal);
analysis::FringeCalibration fringe_calibration_from_json(const json& j);
json to_json(const analysis::LossBudget& b);
json to_json(const LockReport& r);

} // namespace cavlock
