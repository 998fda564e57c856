#include "cavlock/plant.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"

#include <algorithm>
#include <cmath>

namespace cavlock {

double PlantConfig::clamp(double volts) const {
  return std::clamp(volts, voltage_range[0], voltage_range[1]);
}

void validate(const PlantConfig& c) {
  require(std::isfinite(c.piezo_gain) && c.piezo_gain > 0.0, "plant: piezo_gain must be > 0");
  require(std::isfinite(c.voltage_range[0]) && std::isfinite(c.voltage_range[1]) &&
              c.voltage_range[0] < c.voltage_range[1],
          "plant: voltage_range must be [V_min, V_max] with V_min < V_max");
  require(std::isfinite(c.loop_delay) && c.loop_delay >= 0.0, "plant: loop_delay must be >= 0");
  double wsum = 0.0;
  for (std::size_t i = 0; i < c.modes.size(); ++i) {
    const PlantMode& m = c.modes[i];
    const std::string where = "plant: mode " + std::to_string(i);
    require(std::isfinite(m.f0) && m.f0 > 0.0, where + " f0 must be > 0");
    require(std::isfinite(m.quality_q) && m.quality_q > 0.0, where + " quality_q must be > 0");
    require(std::isfinite(m.modal_weight) && m.modal_weight >= 0.0, where + " modal_weight must be >= 0");
    wsum += m.modal_weight;
  }
  require(wsum <= 1.0 + 1e-12, "plant: modal weights must sum to at most 1");
}

std::complex<double> transfer_function(const PlantConfig& c, double f) {
  require(f >= 0.0, "plant: frequency must be >= 0");
  double wsum = 0.0;
  std::complex<double> h = 0.0;
  for (const PlantMode& m : c.modes) {
    wsum += m.modal_weight;
    h += m.modal_weight * m.f0 * m.f0 / std::complex<double>(m.f0 * m.f0 - f * f, f * m.f0 / m.quality_q);
  }
  h += 1.0 - wsum;
  return h * std::polar(1.0, -kTwoPi * f * c.loop_delay);
}

Plant::Plant(const PlantConfig& config, double sample_rate_hz) : config_(config), fs_(sample_rate_hz) {
  validate(config_);
  require(std::isfinite(fs_) && fs_ > 0.0, "plant: sample rate must be > 0");
  const double T = 1.0 / fs_;
  double wsum = 0.0;
  for (const PlantMode& m : config_.modes) {
    require(m.f0 < 0.45 * fs_, "plant: mode f0 must be below 0.45 * sample rate");
    wsum += m.modal_weight;
    const double w0 = kTwoPi * m.f0;
    const double K = w0 / std::tan(0.5 * w0 * T);
    const double a0 = K * K + K * w0 / m.quality_q + w0 * w0;
    const double g = m.modal_weight * w0 * w0 / a0;
    sections_.push_back({g, 2.0 * g, g, (2.0 * w0 * w0 - 2.0 * K * K) / a0,
                         (K * K - K * w0 / m.quality_q + w0 * w0) / a0});
  }
  static_weight_ = 1.0 - wsum;
  const double d = config_.loop_delay * fs_;
  delay_whole_ = static_cast<std::size_t>(std::floor(d));
  delay_frac_ = d - std::floor(d);
  // Snap to whole samples when the delay is an integer up to rounding.
  if (delay_frac_ < 1e-9) delay_frac_ = 0.0;
  if (delay_frac_ > 1.0 - 1e-9) {
    delay_frac_ = 0.0;
    ++delay_whole_;
  }
  reset();
}

void Plant::reset() {
  state_.delay_line.assign(delay_whole_ + 2, 0.0);
  state_.sections.assign(sections_.size(), {0.0, 0.0});
  clamped_ = false;
}

void Plant::set_state(const State& state) {
  require(state.delay_line.size() == delay_whole_ + 2 && state.sections.size() == sections_.size(),
          "plant: state does not match this plant");
  state_ = state;
}

double Plant::advance(State& s, double volts) const {
  auto& line = s.delay_line;
  std::rotate(line.rbegin(), line.rbegin() + 1, line.rend());
  line[0] = volts;
  const double u = (1.0 - delay_frac_) * line[delay_whole_] + delay_frac_ * line[delay_whole_ + 1];
  double y = static_weight_ * u;
  for (std::size_t k = 0; k < sections_.size(); ++k) {
    const Section& c = sections_[k];
    auto& z = s.sections[k];
    const double out = c.b0 * u + z[0];
    z[0] = c.b1 * u - c.a1 * out + z[1];
    z[1] = c.b2 * u - c.a2 * out;
    y += out;
  }
  return y;
}

double Plant::step(double control_voltage, double noise_displacement) {
  require(std::isfinite(control_voltage) && std::isfinite(noise_displacement),
          "plant: step inputs must be finite");
  const double v = config_.clamp(control_voltage);
  clamped_ = v != control_voltage;
  return config_.piezo_gain * advance(state_, v) + noise_displacement;
}

double step(const Plant& plant, Plant::State& state, double control_voltage, double noise_displacement) {
  require(std::isfinite(control_voltage) && std::isfinite(noise_displacement),
          "plant: step inputs must be finite");
  const double v = plant.config().clamp(control_voltage);
  return plant.config().piezo_gain * plant.advance(state, v) + noise_displacement;
}

std::complex<double> Plant::frequency_response(double f) const {
  const std::complex<double> zi = std::polar(1.0, -kTwoPi * f / fs_); // z^-1
  std::complex<double> h = static_weight_;
  for (const Section& c : sections_)
    h += (c.b0 + c.b1 * zi + c.b2 * zi * zi) / (1.0 + c.a1 * zi + c.a2 * zi * zi);
  const std::complex<double> delay =
      std::pow(zi, static_cast<double>(delay_whole_)) * ((1.0 - delay_frac_) + delay_frac_ * zi);
  return h * delay;
}

PlantConfig plant_preset(const std::string& name) {
  PlantConfig c;
  if (name == "bare") {
    c.modes = {{6e3, 50.0, 0.02}, {18e3, 50.0, 0.02}, {30e3, 50.0, 0.02}};
    return c;
  }
  if (name == "diamond") {
    c.modes = {{6e3, 50.0, 0.02}, {12e3, 50.0, 0.02}};
    return c;
  }
  if (name == "none") return c;
  throw ValidationError("plant: unknown preset '" + name + "'");
}

std::vector<std::string> plant_preset_names() { return {"bare", "diamond", "none"}; }

} // namespace cavlock
