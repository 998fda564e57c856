#pragma once

#include "cavlock/trace.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace cavlock::analysis {

struct WelchOptions {
  std::string window = "hann"; // hann, hamming, blackman, rectangular
  std::size_t segment_length = 0; // 0: derived from `segments` and `overlap`
  double overlap = 0.5;
  int segments = 8;
};

// One-sided amplitude spectral density table.
struct AsdTable {
  std::vector<double> f;   // Hz
  std::vector<double> asd; // units / sqrt(Hz)
  std::string units;
  double resolution_hz = 0.0;
  // Welch parameters actually used.
  std::string window;
  std::size_t segment_length = 0;
  double overlap = 0.0;
  int segments_used = 0;
  // sum(PSD) * df / variance(trace); 1 for an exact Parseval balance.
  double parseval_ratio = 0.0;
  // Provenance carried over from the input trace (seed, config_hash, ...).
  std::map<std::string, std::string> metadata;
};

std::vector<double> make_window(const std::string& name, std::size_t n);

// Welch-averaged one-sided ASD with per-segment mean removal, normalized so
// that sum(ASD^2) * df equals the trace variance.
AsdTable compute_asd(const Trace& trace, const WelchOptions& options = {});

// rms in [f_lo, f_hi] from an ASD table (rectangle rule over bins).
double band_rms(const AsdTable& table, double f_lo, double f_hi);

// rms in [f_lo, f_hi] of a trace from its full-length FFT (brick-wall band,
// mean excluded). A sine of amplitude a fully inside the band gives a / sqrt(2)
// when it spans a whole number of periods.
double band_rms(const Trace& trace, double f_lo, double f_hi);

// Mean of ASD^2 over bins in [f_lo, f_hi), as an ASD.
double band_average_asd(const AsdTable& table, double f_lo, double f_hi);

void write_asd_csv(const std::string& path, const AsdTable& table);
AsdTable parse_asd_csv(const std::string& text);

} // namespace cavlock::analysis
