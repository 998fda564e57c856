#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace cavlock {

struct PlantMode {
  double f0 = 0.0;
  double quality_q = 50.0;
  double modal_weight = 0.05;
};

// Piezo actuator with mechanical resonances. The normalized response is
//   H(f) = (1 - sum w_k) + sum w_k f0_k^2 / (f0_k^2 - f^2 + i f f0_k / q_k)
// so H(0) = 1; the first term is the quasi-static part of the structure.
struct PlantConfig {
  double piezo_gain = 6e-9; // m/V
  std::array<double, 2> voltage_range{-75.0, 75.0};
  std::vector<PlantMode> modes;
  double loop_delay = 2e-6; // s

  double clamp(double volts) const;
};

void validate(const PlantConfig& config);

// Normalized continuous-time response including the delay phasor.
std::complex<double> transfer_function(const PlantConfig& config, double f);

// Discrete realization at a fixed step: an input delay line (linear
// interpolation for fractional delays) followed by one bilinear biquad per
// mode, each prewarped to its own f0.
class Plant {
public:
  struct Section {
    double b0, b1, b2, a1, a2; // a0 normalized to 1
  };
  struct State {
    std::vector<double> delay_line; // newest sample first
    std::vector<std::array<double, 2>> sections; // transposed direct form II
  };

  Plant(const PlantConfig& config, double sample_rate_hz);

  // Advances one sample. The voltage is clamped to the range first; the
  // return value is piezo_gain * (normalized response) + noise, in meters.
  double step(double control_voltage, double noise_displacement);
  bool last_step_clamped() const { return clamped_; }

  void reset();
  const State& state() const { return state_; }
  void set_state(const State& state);

  // Exact frequency response of this discrete system (normalized, includes
  // the delay line), evaluated on the unit circle.
  std::complex<double> frequency_response(double f) const;

  const PlantConfig& config() const { return config_; }
  double sample_rate() const { return fs_; }

  // Advances `state` by one sample for an already clamped voltage and returns
  // the normalized response.
  double advance(State& state, double volts) const;

private:
  PlantConfig config_;
  double fs_;
  double static_weight_;
  std::size_t delay_whole_;
  double delay_frac_;
  std::vector<Section> sections_;
  State state_;
  bool clamped_ = false;
};

// Stateless form of Plant::step.
double step(const Plant& plant, Plant::State& state, double control_voltage, double noise_displacement);

PlantConfig plant_preset(const std::string& name);
std::vector<std::string> plant_preset_names();

} // namespace cavlock
