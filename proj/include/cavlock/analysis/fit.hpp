#pragma once

#include "cavlock/trace.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace cavlock::analysis {

struct Peak {
  std::size_t index = 0;
  double height = 0.0;
  double prominence = 0.0;
};

// Local maxima with at least `min_prominence`, sorted by descending height.
// Plateaus report their first sample.
std::vector<Peak> find_peaks(const std::vector<double>& y, double min_prominence);

// height / (1 + (2 (x - center) / fwhm)^2)
double lorentzian(double x, double center, double fwhm, double height);

struct LorentzianPeak {
  double center = 0.0; // in the trace's time axis (s) unless stated
  double fwhm = 0.0;
  double height = 0.0;
  double center_error = 0.0;
  double fwhm_error = 0.0;
  double height_error = 0.0;
};

struct LorentzianFit {
  double offset = 0.0;
  std::vector<LorentzianPeak> peaks;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Independent Lorentzians plus a constant offset, initialized from the
// `count` most prominent peaks.
LorentzianFit fit_lorentzians(const Trace& trace, int count);

struct ScanFitOptions {
  // FSR used when the trace holds a single carrier.
  std::optional<double> fsr_hint_hz;
  // Ramp rate from the drive settings, compared against the sideband
  // calibration when given.
  std::optional<double> nominal_sweep_rate_hz_per_s;
  // Carriers are peaks at least this fraction of the tallest peak.
  double carrier_fraction = 0.3;
};

struct ScanPeak {
  std::string kind; // "carrier", "lower_sideband", "upper_sideband"
  double center_s = 0.0;
  double center_hz = 0.0; // relative to the first carrier
  double fwhm_hz = 0.0;
  double height = 0.0;
};

struct ScanFit {
  double fsr = 0.0;       // Hz
  double finesse = 0.0;
  double linewidth = 0.0; // Hz, carrier FWHM
  double axis_calibration = 0.0; // Hz per s of scan time
  double sideband_spacing_s = 0.0;
  double modulation_frequency = 0.0;
  std::string fsr_source; // "carrier_spacing" or "hint"
  int carriers = 0;
  std::vector<ScanPeak> peaks;
  double offset = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  double linewidth_error = 0.0;  // 1-sigma, Hz
  double calibration_error = 0.0; // 1-sigma, Hz/s
  std::optional<double> sweep_rate_deviation; // (fit - nominal) / nominal
};

// Fits each carrier with a Lorentzian triplet (carrier plus sidebands at
// +-spacing). FWHM and sideband spacing are shared by all carriers because the
// sweep is linear in time. The sideband spacing fixes the Hz-per-second axis
// calibration, and with two or more carriers the carrier spacing gives the FSR.
ScanFit fit_scan(const Trace& transmission, double modulation_frequency_hz, const ScanFitOptions& options = {});

} // namespace cavlock::analysis
