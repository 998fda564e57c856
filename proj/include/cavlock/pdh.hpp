#pragma once

#include "cavlock/cavity.hpp"
#include "cavlock/trace.hpp"

#include <cstdint>

namespace cavlock {

struct PdhConfig {
  double modulation_frequency_Omega = 150e6;
  double modulation_depth_beta = 0.3;
  double detector_gain = 1.0;      // volts per unit of normalized optical power
  double detector_noise_rms = 0.0; // volts, white, added to the error signal
};

void validate(const PdhConfig& config);

// Fractions of the input power in the carrier and in each first-order sideband.
double carrier_power(double beta);
double sideband_power(double beta);

// PDH discriminator and transmitted-power model for a fixed cavity. Detuning
// is laser minus resonance in Hz; input power is normalized to 1.
class PdhDiscriminator {
public:
  PdhDiscriminator(const CavityConfig& cavity, const PdhConfig& pdh);
  PdhDiscriminator(const CavityResponse& response, const PdhConfig& pdh);

  double error(double detuning_hz) const;

  struct Reading {
    double error;
    double transmission;
  };
  // Both outputs at one detuning, sharing the phasor evaluations.
  Reading read(double detuning_hz) const;
  // Carrier plus both first-order sidebands, each through the cavity.
  double transmission(double detuning_hz) const;
  // Error slope at the carrier resonance in V/Hz (central difference on the
  // exact expression with a step of 1e-4 linewidths).
  double slope_at_resonance() const;
  // Magnitude of the error extremum next to the carrier, located by a
  // golden-section search on (0, linewidth).
  double peak_error() const;

  const CavityResponse& cavity() const { return response_; }
  const PdhConfig& config() const { return pdh_; }
  double carrier_fraction() const { return pc_; }
  double sideband_fraction() const { return ps_; }

private:
  CavityResponse response_;
  PdhConfig pdh_;
  double pc_, ps_;
  double error_scale_;
  std::complex<double> omega_phasor_;
};

double error_signal(const CavityConfig& cavity, const PdhConfig& pdh, double detuning_hz);

// Linear sweep of the laser-cavity detuning over [start, stop] in `duration_s`,
// as produced by one edge of the triangular piezo ramp.
struct ScanRamp {
  double start_detuning_hz = -300e6;
  double stop_detuning_hz = 300e6;
  double duration_s = 10e-3;
  double sample_rate_hz = 2e6;

  double sweep_rate_hz_per_s() const { return (stop_detuning_hz - start_detuning_hz) / duration_s; }
  std::size_t samples() const;
};

void validate(const ScanRamp& ramp);

// A ramp centred on the carrier resonance spanning span_hz.
ScanRamp centered_ramp(double span_hz, double duration_s, double sample_rate_hz);

struct ScanSpectrum {
  Trace transmission; // normalized power
  Trace error;        // volts
  bool crosses_carrier = false; // some resonance k * FSR lies inside the ramp
  bool covers_triplet = false;  // a carrier and both of its sidebands lie inside
  int carriers_crossed = 0;
};

// Detector noise, when configured, is drawn from Rng(seed).
ScanSpectrum scan_spectrum(const CavityConfig& cavity, const PdhConfig& pdh, const ScanRamp& ramp,
                           std::uint64_t seed = 0);

} // namespace cavlock
