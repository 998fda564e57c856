#pragma once

#include "cavlock/analysis/fit.hpp"
#include "cavlock/trace.hpp"

#include <cstddef>
#include <vector>

namespace cavlock::analysis {

// y = amplitude * tanh((x - x0) / width) + offset with x the detuning in Hz
// relative to the fitted carrier.
struct ErrorCalibration {
  double amplitude = 0.0; // V
  double width_hz = 0.0;
  double x0_hz = 0.0;
  double offset = 0.0; // V
  double linewidth_hz = 0.0;
  double finesse = 0.0;
  double width_over_linewidth = 0.0;
  double slope_v_per_hz = 0.0; // amplitude / width
  double region_lo_hz = 0.0;   // fitted region, between the error extrema
  double region_hi_hz = 0.0;
  std::size_t region_samples = 0;
  double residual_norm = 0.0;
  int iterations = 0;
};

// Fits the tanh model to the error samples between the two error extrema
// flanking the carrier found by `scan`. The error trace must share the
// transmission trace's time base.
ErrorCalibration calibrate_error_slope(const Trace& error, const ScanFit& scan);

struct DisplacementResult {
  Trace displacement;         // m
  std::vector<bool> clipped_mask;
  std::size_t clipped = 0;    // samples at or beyond +-amplitude
  double rms = 0.0;           // rms about the mean, clipped samples excluded
  double length_scale = 0.0;  // m per unit of atanh argument
};

// Linewidth in length, lambda / (2 F).
double linewidth_in_length(double finesse, double wavelength_m);

// displacement = length_scale * atanh((error - offset) / amplitude), where
// length_scale = (width / linewidth) * lambda / (2 F). Clipped samples are
// pinned to the value at |argument| = 1 - 1e-6, flagged in clipped_mask and
// excluded from the rms.
DisplacementResult error_to_displacement(const Trace& error, const ErrorCalibration& cal, double finesse,
                                         double wavelength_m);

// y = amplitude * sin(2 pi frequency t + phase) + offset
struct FringeCalibration {
  double amplitude = 0.0;
  double frequency = 0.0; // Hz
  double phase = 0.0;     // rad
  double offset = 0.0;
  double residual_norm = 0.0;
  double amplitude_error = 0.0;
  double offset_error = 0.0;
  int iterations = 0;
};

FringeCalibration interferometer_calibrate(const Trace& fringe);

// delta_x = asin((y - offset) / amplitude) * lambda / (4 pi); arguments
// outside [-1, 1] are clipped to +-1, counted in `clipped`, and kept in the rms.
DisplacementResult interferometer_convert(const Trace& signal, const FringeCalibration& cal, double wavelength_m);

} // namespace cavlock::analysis
