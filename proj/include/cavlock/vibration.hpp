#pragma once

#include "cavlock/trace.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cavlock {

// ASD(f) = asd_at_f_lo * (f / f_lo)^exponent on [f_lo, f_hi).
struct NoiseSegment {
  double f_lo = 0.0;
  double f_hi = 0.0;
  double asd_at_f_lo = 0.0;
  double exponent = 0.0;
};

// Adds peak_asd / sqrt(1 + (2 q (f - f0) / f0)^2) to the ASD.
struct NoisePeak {
  double f0 = 0.0;
  double peak_asd = 0.0;
  double quality_q = 1.0;
};

// One-sided displacement ASD in m/sqrt(Hz).
struct NoiseSpec {
  std::vector<NoiseSegment> segments;
  std::vector<NoisePeak> peaks;
  double floor_asd = 0.0;
  std::uint64_t seed = 0;
};

void validate(const NoiseSpec& spec);

// max(floor, segment value) plus all peaks. Outside every segment the
// segment value is taken as zero.
double asd_model(const NoiseSpec& spec, double f);

// Integral of ASD^2 over [f_lo, f_hi] (m^2), by composite Simpson on pieces
// split at segment edges and around each peak.
double band_power(const NoiseSpec& spec, double f_lo, double f_hi);
double band_rms(const NoiseSpec& spec, double f_lo, double f_hi);

// Inverse-spectral synthesis: bin k of an N-point spectrum carries a
// sinusoid of amplitude sqrt(2) * ASD(k fs / N) * sqrt(fs / N) with a phase
// drawn uniformly from Rng(spec.seed), bins visited in ascending order. DC and
// the Nyquist bin are zero, so the trace has zero mean and is periodic in N.
Trace synthesize(const NoiseSpec& spec, double duration_s, double sample_rate_hz);

// Segment and peak ASDs multiplied by `factor`; floor unchanged.
NoiseSpec scaled(const NoiseSpec& spec, double factor);
NoiseSpec without_floor(const NoiseSpec& spec);

NoiseSpec noise_preset(const std::string& name);
std::vector<std::string> noise_preset_names();

} // namespace cavlock
