#include "cavlock/io.hpp"

#include "cavlock/error.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace cavlock {

namespace {

// Reads the fields of one JSON object, rejecting keys nobody asked for.
class Fields {
public:
  Fields(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    require(j.is_object(), "config: " + section_ + " must be an object");
  }

  const json* get(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = get(key)) out = as_number(*v, key);
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    const json* v = get(key);
    if (!v) return;
    require(v->is_number_integer(), "config: " + path(key) + " must be an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      require(v->is_number_unsigned() || v->get<std::int64_t>() >= 0, "config: " + path(key) + " must be >= 0");
    }
    out = v->get<Int>();
  }

  void pair(const std::string& key, std::array<double, 2>& out) {
    const json* v = get(key);
    if (!v) return;
    require(v->is_array() && v->size() == 2, "config: " + path(key) + " must be a two-element array");
    out = {as_number((*v)[0], key), as_number((*v)[1], key)};
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ValidationError("config: unknown field " + path(it.key()));
  }

  std::string path(const std::string& key) const { return section_ + "." + key; }

private:
  double as_number(const json& v, const std::string& key) const {
    require(v.is_number(), "config: " + path(key) + " must be a number");
    const double x = v.get<double>();
    require(std::isfinite(x), "config: " + path(key) + " must be finite");
    return x;
  }

  const json& j_;
  std::string section_;
  std::set<std::string> used_;
};

std::string preset_name(Fields& f) {
  const json* p = f.get("preset");
  if (!p) return {};
  require(p->is_string(), "config: " + f.path("preset") + " must be a string");
  return p->get<std::string>();
}

void dump(const json& j, std::string& out, int indent, int depth) {
  const bool pretty = indent >= 0;
  auto newline = [&](int d) {
    if (!pretty) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
  case json::value_t::object: {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += '{';
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ',';
      first = false;
      newline(depth + 1);
      out += json(it.key()).dump();
      out += pretty ? ": " : ":";
      dump(it.value(), out, indent, depth + 1);
    }
    newline(depth);
    out += '}';
    return;
  }
  case json::value_t::array: {
    if (j.empty()) {
      out += "[]";
      return;
    }
    out += '[';
    bool first = true;
    for (const json& v : j) {
      if (!first) out += ',';
      first = false;
      newline(depth + 1);
      dump(v, out, indent, depth + 1);
    }
    newline(depth);
    out += ']';
    return;
  }
  case json::value_t::number_float: {
    const double x = j.get<double>();
    if (!std::isfinite(x)) {
      out += "null";
      return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out += buf;
    return;
  }
  default:
    out += j.dump();
  }
}

} // namespace

void validate(const SimConfig& config) {
  validate(config.cavity);
  validate(config.pdh);
  validate(config.noise);
  validate(config.plant);
  validate(config.servo);
}

json to_json(const CavityConfig& c) {
  return json{{"wavelength_lambda", c.wavelength_lambda},
              {"air_gap_length", c.air_gap_length},
              {"diamond_thickness_d", c.diamond_thickness_d},
              {"refractive_index_n", c.refractive_index_n},
              {"mirror_reflectivity_R1", c.mirror_reflectivity_R1},
              {"mirror_reflectivity_R2", c.mirror_reflectivity_R2},
              {"roc_top_mirror", c.roc_top_mirror},
              {"coating_aperture_D", c.coating_aperture_D},
              {"surface_roughness_Rq", c.surface_roughness_Rq},
              {"absorption_alpha", c.absorption_alpha},
              {"ar_residual_reflectivity", c.ar_residual_reflectivity}};
}

json to_json(const PdhConfig& c) {
  return json{{"modulation_frequency_Omega", c.modulation_frequency_Omega},
              {"modulation_depth_beta", c.modulation_depth_beta},
              {"detector_gain", c.detector_gain},
              {"detector_noise_rms", c.detector_noise_rms}};
}

json to_json(const NoiseSpec& c) {
  json segments = json::array();
  for (const NoiseSegment& s : c.segments)
    segments.push_back(
        json{{"f_lo", s.f_lo}, {"f_hi", s.f_hi}, {"asd_at_f_lo", s.asd_at_f_lo}, {"exponent", s.exponent}});
  json peaks = json::array();
  for (const NoisePeak& p : c.peaks)
    peaks.push_back(json{{"f0", p.f0}, {"peak_asd", p.peak_asd}, {"quality_q", p.quality_q}});
  return json{{"segments", segments}, {"peaks", peaks}, {"floor_asd", c.floor_asd}, {"seed", c.seed}};
}

json to_json(const PlantConfig& c) {
  json modes = json::array();
  for (const PlantMode& m : c.modes)
    modes.push_back(json{{"f0", m.f0}, {"quality_q", m.quality_q}, {"modal_weight", m.modal_weight}});
  return json{{"piezo_gain", c.piezo_gain},
              {"voltage_range", {c.voltage_range[0], c.voltage_range[1]}},
              {"modes", modes},
              {"loop_delay", c.loop_delay}};
}

json to_json(const ServoConfig& c) {
  return json{{"sample_rate_fs", c.sample_rate_fs},
              {"kp", c.kp},
              {"ki", c.ki},
              {"kd", c.kd},
              {"output_limits", {c.output_limits[0], c.output_limits[1]}},
              {"integrator_clamp", c.integrator_clamp},
              {"lock_engage_threshold", c.lock_engage_threshold},
              {"unlock_threshold", c.unlock_threshold},
              {"scan_ramp", {{"amplitude", c.scan_ramp.amplitude}, {"frequency", c.scan_ramp.frequency}}},
              {"lock_confirm_threshold", c.lock_confirm_threshold},
              {"engage_settle_s", c.engage_settle_s},
              {"engage_timeout_s", c.engage_timeout_s},
              {"unlock_debounce_samples", c.unlock_debounce_samples},
              {"initial_length_offset", c.initial_length_offset},
              {"record_rate_hz", c.record_rate_hz},
              {"noise_rate_hz", c.noise_rate_hz},
              {"residual_settle_s", c.residual_settle_s}};
}

json to_json(const SimConfig& c) {
  return json{{"cavity", to_json(c.cavity)},
              {"pdh", to_json(c.pdh)},
              {"noise", to_json(c.noise)},
              {"plant", to_json(c.plant)},
              {"servo", to_json(c.servo)}};
}

CavityConfig cavity_from_json(const json& j) {
  if (j.is_string()) return cavity_preset(j.get<std::string>());
  Fields f(j, "cavity");
  const std::string preset = preset_name(f);
  CavityConfig c = preset.empty() ? CavityConfig{} : cavity_preset(preset);
  f.number("wavelength_lambda", c.wavelength_lambda);
  f.number("air_gap_length", c.air_gap_length);
  f.number("diamond_thickness_d", c.diamond_thickness_d);
  f.number("refractive_index_n", c.refractive_index_n);
  f.number("mirror_reflectivity_R1", c.mirror_reflectivity_R1);
  f.number("mirror_reflectivity_R2", c.mirror_reflectivity_R2);
  f.number("roc_top_mirror", c.roc_top_mirror);
  f.number("coating_aperture_D", c.coating_aperture_D);
  f.number("surface_roughness_Rq", c.surface_roughness_Rq);
  f.number("absorption_alpha", c.absorption_alpha);
  f.number("ar_residual_reflectivity", c.ar_residual_reflectivity);
  f.finish();
  validate(c);
  return c;
}

PdhConfig pdh_from_json(const json& j) {
  Fields f(j, "pdh");
  PdhConfig c;
  f.number("modulation_frequency_Omega", c.modulation_frequency_Omega);
  f.number("modulation_depth_beta", c.modulation_depth_beta);
  f.number("detector_gain", c.detector_gain);
  f.number("detector_noise_rms", c.detector_noise_rms);
  f.finish();
  validate(c);
  return c;
}

NoiseSpec noise_from_json(const json& j) {
  if (j.is_string()) return noise_preset(j.get<std::string>());
  Fields f(j, "noise");
  const std::string preset = preset_name(f);
  NoiseSpec c = preset.empty() ? NoiseSpec{} : noise_preset(preset);
  if (const json* segs = f.get("segments")) {
    require(segs->is_array(), "config: noise.segments must be an array");
    c.segments.clear();
    for (const json& s : *segs) {
      Fields g(s, "noise.segments[]");
      NoiseSegment seg;
      g.number("f_lo", seg.f_lo);
      g.number("f_hi", seg.f_hi);
      g.number("asd_at_f_lo", seg.asd_at_f_lo);
      g.number("exponent", seg.exponent);
      g.finish();
      c.segments.push_back(seg);
    }
  }
  if (const json* peaks = f.get("peaks")) {
    require(peaks->is_array(), "config: noise.peaks must be an array");
    c.peaks.clear();
    for (const json& p : *peaks) {
      Fields g(p, "noise.peaks[]");
      NoisePeak peak;
      g.number("f0", peak.f0);
      g.number("peak_asd", peak.peak_asd);
      g.number("quality_q", peak.quality_q);
      g.finish();
      c.peaks.push_back(peak);
    }
  }
  f.number("floor_asd", c.floor_asd);
  f.integer("seed", c.seed);
  f.finish();
  validate(c);
  return c;
}

PlantConfig plant_from_json(const json& j) {
  if (j.is_string()) return plant_preset(j.get<std::string>());
  Fields f(j, "plant");
  const std::string preset = preset_name(f);
  PlantConfig c = preset.empty() ? PlantConfig{} : plant_preset(preset);
  f.number("piezo_gain", c.piezo_gain);
  f.pair("voltage_range", c.voltage_range);
  if (const json* modes = f.get("modes")) {
    require(modes->is_array(), "config: plant.modes must be an array");
    c.modes.clear();
    for (const json& m : *modes) {
      Fields g(m, "plant.modes[]");
      PlantMode mode;
      g.number("f0", mode.f0);
      g.number("quality_q", mode.quality_q);
      g.number("modal_weight", mode.modal_weight);
      g.finish();
      c.modes.push_back(mode);
    }
  }
  f.number("loop_delay", c.loop_delay);
  f.finish();
  validate(c);
  return c;
}

ServoConfig servo_from_json(const json& j) {
  if (j.is_string()) return servo_preset(j.get<std::string>());
  Fields f(j, "servo");
  const std::string preset = preset_name(f);
  ServoConfig c = preset.empty() ? ServoConfig{} : servo_preset(preset);
  f.number("sample_rate_fs", c.sample_rate_fs);
  f.number("kp", c.kp);
  f.number("ki", c.ki);
  f.number("kd", c.kd);
  f.pair("output_limits", c.output_limits);
  f.number("integrator_clamp", c.integrator_clamp);
  f.number("lock_engage_threshold", c.lock_engage_threshold);
  f.number("unlock_threshold", c.unlock_threshold);
  if (const json* ramp = f.get("scan_ramp")) {
    Fields g(*ramp, "servo.scan_ramp");
    g.number("amplitude", c.scan_ramp.amplitude);
    g.number("frequency", c.scan_ramp.frequency);
    g.finish();
  }
  f.number("lock_confirm_threshold", c.lock_confirm_threshold);
  f.number("engage_settle_s", c.engage_settle_s);
  f.number("engage_timeout_s", c.engage_timeout_s);
  f.integer("unlock_debounce_samples", c.unlock_debounce_samples);
  f.number("initial_length_offset", c.initial_length_offset);
  f.number("record_rate_hz", c.record_rate_hz);
  f.number("noise_rate_hz", c.noise_rate_hz);
  f.number("residual_settle_s", c.residual_settle_s);
  f.finish();
  validate(c);
  return c;
}

SimConfig config_from_json(const json& j) {
  Fields f(j, "config");
  SimConfig c;
  if (const json* v = f.get("cavity")) c.cavity = cavity_from_json(*v);
  if (const json* v = f.get("pdh")) c.pdh = pdh_from_json(*v);
  if (const json* v = f.get("noise")) c.noise = noise_from_json(*v);
  if (const json* v = f.get("plant")) c.plant = plant_from_json(*v);
  if (const json* v = f.get("servo")) c.servo = servo_from_json(*v);
  f.finish();
  validate(c);
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

json load_json(const std::filesystem::path& path) {
  try {
    return parse_json(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

SimConfig load_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string dump_json(const json& j) {
  std::string out;
  dump(j, out, 2, 0);
  out += '\n';
  return out;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const SimConfig& config) {
  std::string canonical;
  dump(to_json(config), canonical, -1, 0);
  return fnv1a_hex(canonical);
}

json to_json(const DerivedCavity& d) {
  return json{{"optical_length", d.optical_length},
              {"geometric_length", d.geometric_length},
              {"fsr", d.fsr},
              {"finesse", d.finesse},
              {"finesse_small_loss", d.finesse_small_loss},
              {"linewidth_fwhm", d.linewidth_fwhm},
              {"quality_factor", d.quality_factor},
              {"beam_waist_w0", d.beam_waist_w0},
              {"mode_volume", d.mode_volume},
              {"mirror_loss", d.mirror_loss},
              {"intracavity_loss", d.intracavity_loss},
              {"round_trip_loss_total", d.round_trip_loss_total},
              {"linewidth_in_length_DeltaL", d.linewidth_in_length_DeltaL}};
}

namespace {

double number_at(const json& j, const char* key) {
  auto it = j.find(key);
  require(it != j.end() && it->is_number(), std::string("report: missing numeric field ") + key);
  return it->get<double>();
}

} // namespace

json to_json(const analysis::ScanFit& fit) {
  json peaks = json::array();
  for (const analysis::ScanPeak& p : fit.peaks)
    peaks.push_back(json{{"kind", p.kind},
                         {"center_s", p.center_s},
                         {"center_hz", p.center_hz},
                         {"fwhm_hz", p.fwhm_hz},
                         {"height", p.height}});
  return json{{"fsr", fit.fsr},
              {"finesse", fit.finesse},
              {"linewidth", fit.linewidth},
              {"axis_calibration", fit.axis_calibration},
              {"sideband_spacing_s", fit.sideband_spacing_s},
              {"modulation_frequency", fit.modulation_frequency},
              {"fsr_source", fit.fsr_source},
              {"carriers", fit.carriers},
              {"offset", fit.offset},
              {"residual_norm", fit.residual_norm},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"linewidth_error", fit.linewidth_error},
              {"calibration_error", fit.calibration_error},
              {"sweep_rate_deviation", fit.sweep_rate_deviation ? json(*fit.sweep_rate_deviation) : json(nullptr)},
              {"peaks", peaks}};
}

analysis::ScanFit scan_fit_from_json(const json& j) {
  require(j.is_object(), "scan fit: expected a JSON object");
  analysis::ScanFit fit;
  fit.fsr = number_at(j, "fsr");
  fit.finesse = number_at(j, "finesse");
  fit.linewidth = number_at(j, "linewidth");
  fit.axis_calibration = number_at(j, "axis_calibration");
  fit.sideband_spacing_s = number_at(j, "sideband_spacing_s");
  fit.modulation_frequency = number_at(j, "modulation_frequency");
  fit.fsr_source = j.value("fsr_source", std::string{});
  fit.carriers = j.value("carriers", 0);
  fit.offset = j.value("offset", 0.0);
  fit.residual_norm = j.value("residual_norm", 0.0);
  fit.iterations = j.value("iterations", 0);
  fit.converged = j.value("converged", false);
  fit.linewidth_error = j.value("linewidth_error", 0.0);
  fit.calibration_error = j.value("calibration_error", 0.0);
  if (j.contains("sweep_rate_deviation") && j["sweep_rate_deviation"].is_number())
    fit.sweep_rate_deviation = j["sweep_rate_deviation"].get<double>();
  require(j.contains("peaks") && j["peaks"].is_array(), "scan fit: missing peaks array");
  for (const json& p : j["peaks"]) {
    analysis::ScanPeak peak;
    peak.kind = p.value("kind", std::string{});
    peak.center_s = number_at(p, "center_s");
    peak.center_hz = number_at(p, "center_hz");
    peak.fwhm_hz = number_at(p, "fwhm_hz");
    peak.height = number_at(p, "height");
    fit.peaks.push_back(peak);
  }
  return fit;
}

json to_json(const analysis::ErrorCalibration& cal) {
  return json{{"amplitude", cal.amplitude},
              {"width_hz", cal.width_hz},
              {"x0_hz", cal.x0_hz},
              {"offset", cal.offset},
              {"linewidth_hz", cal.linewidth_hz},
              {"finesse", cal.finesse},
              {"width_over_linewidth", cal.width_over_linewidth},
              {"slope_v_per_hz", cal.slope_v_per_hz},
              {"region_lo_hz", cal.region_lo_hz},
              {"region_hi_hz", cal.region_hi_hz},
              {"region_samples", cal.region_samples},
              {"residual_norm", cal.residual_norm},
              {"iterations", cal.iterations}};
}

analysis::ErrorCalibration error_calibration_from_json(const json& j) {
  require(j.is_object(), "error calibration: expected a JSON object");
  analysis::ErrorCalibration cal;
  cal.amplitude = number_at(j, "amplitude");
  cal.width_hz = number_at(j, "width_hz");
  cal.x0_hz = j.value("x0_hz", 0.0);
  cal.offset = number_at(j, "offset");
  cal.linewidth_hz = number_at(j, "linewidth_hz");
  cal.finesse = number_at(j, "finesse");
  cal.width_over_linewidth = cal.width_hz / cal.linewidth_hz;
  cal.slope_v_per_hz = cal.amplitude / cal.width_hz;
  cal.region_lo_hz = j.value("region_lo_hz", 0.0);
  cal.region_hi_hz = j.value("region_hi_hz", 0.0);
  cal.region_samples = j.value("region_samples", std::size_t{0});
  cal.residual_norm = j.value("residual_norm", 0.0);
  cal.iterations = j.value("iterations", 0);
  return cal;
}

json to_json(const analysis::FringeCalibration& cal) {
  return json{{"amplitude", cal.amplitude},
              {"frequency", cal.frequency},
              {"phase", cal.phase},
              {"offset", cal.offset},
              {"residual_norm", cal.residual_norm},
              {"amplitude_error", cal.amplitude_error},
              {"offset_error", cal.offset_error},
              {"iterations", cal.iterations}};
}

analysis::FringeCalibration fringe_calibration_from_json(const json& j) {
  require(j.is_object(), "fringe calibration: expected a JSON object");
  analysis::FringeCalibration cal;
  cal.amplitude = number_at(j, "amplitude");
  cal.frequency = number_at(j, "frequency");
  cal.phase = number_at(j, "phase");
  cal.offset = number_at(j, "offset");
  cal.residual_norm = j.value("residual_norm", 0.0);
  cal.amplitude_error = j.value("amplitude_error", 0.0);
  cal.offset_error = j.value("offset_error", 0.0);
  cal.iterations = j.value("iterations", 0);
  return cal;
}

json to_json(const analysis::LossBudget& b) {
  json j{{"mirror_loss", b.mirror_loss},
         {"scattering_single_pass", b.scattering_single_pass},
         {"scattering_roundtrip", b.scattering_roundtrip},
         {"clipping", b.clipping},
         {"absorption", b.absorption},
         {"ar_residual", b.ar_residual},
         {"total", b.total},
         {"implied_finesse", b.implied_finesse}};
  if (b.measured_finesse) {
    j["measured_finesse"] = *b.measured_finesse;
    j["residual"] = b.residual ? json(*b.residual) : json(nullptr);
    j["implied_alpha"] = b.implied_alpha ? json(*b.implied_alpha) : json(nullptr);
    j["over_explained"] = b.over_explained;
  }
  return j;
}

json to_json(const LockReport& r) {
  return json{{"lock_acquired", r.lock_acquired},
              {"time_to_lock", r.time_to_lock},
              {"locked_fraction", r.locked_fraction},
              {"rms_displacement", r.rms_displacement},
              {"residual_samples", r.residual_displacement.size()},
              {"residual_duration_s", r.residual_displacement.duration()},
              {"saturation_events", r.saturation_events},
              {"relock_count", r.relock_count}};
}

} // namespace cavlock
