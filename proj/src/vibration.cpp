#include "cavlock/vibration.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/fft.hpp"
#include "cavlock/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace cavlock {

void validate(const NoiseSpec& spec) {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  require(ok(spec.floor_asd), "noise: floor_asd must be finite and >= 0");
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const NoiseSegment& s = spec.segments[i];
    const std::string where = "noise: segment " + std::to_string(i);
    require(ok(s.f_lo) && std::isfinite(s.f_hi) && s.f_hi > s.f_lo, where + " needs 0 <= f_lo < f_hi");
    require(ok(s.asd_at_f_lo), where + " asd_at_f_lo must be finite and >= 0");
    require(std::isfinite(s.exponent), where + " exponent must be finite");
    require(s.f_lo > 0.0 || s.exponent == 0.0, where + " starting at 0 Hz must have exponent 0");
    if (i > 0) require(s.f_lo == spec.segments[i - 1].f_hi, where + " is not contiguous with its predecessor");
  }
  for (std::size_t i = 0; i < spec.peaks.size(); ++i) {
    const NoisePeak& p = spec.peaks[i];
    const std::string where = "noise: peak " + std::to_string(i);
    require(std::isfinite(p.f0) && p.f0 > 0.0, where + " f0 must be > 0");
    require(ok(p.peak_asd), where + " peak_asd must be finite and >= 0");
    require(std::isfinite(p.quality_q) && p.quality_q > 0.0, where + " quality_q must be > 0");
  }
}

namespace {

double segment_value(const NoiseSpec& spec, double f) {
  for (const NoiseSegment& s : spec.segments) {
    if (f >= s.f_lo && f < s.f_hi) {
      if (s.exponent == 0.0) return s.asd_at_f_lo;
      return s.asd_at_f_lo * std::pow(f / s.f_lo, s.exponent);
    }
  }
  return 0.0;
}

double simpson(const NoiseSpec& spec, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  auto g = [&](double f) {
    const double v = asd_model(spec, f);
    return v * v;
  };
  double sum = g(a) + g(b);
  for (int i = 1; i < intervals; ++i) sum += g(a + i * h) * ((i % 2) ? 4.0 : 2.0);
  return sum * h / 3.0;
}

} // namespace

double asd_model(const NoiseSpec& spec, double f) {
  double v = std::max(spec.floor_asd, segment_value(spec, f));
  for (const NoisePeak& p : spec.peaks) {
    const double x = 2.0 * p.quality_q * (f - p.f0) / p.f0;
    v += p.peak_asd / std::sqrt(1.0 + x * x);
  }
  return v;
}

double band_power(const NoiseSpec& spec, double f_lo, double f_hi) {
  require(std::isfinite(f_lo) && std::isfinite(f_hi) && 0.0 <= f_lo && f_lo <= f_hi,
          "noise: band needs 0 <= f_lo <= f_hi");
  if (f_lo == f_hi) return 0.0;
  std::vector<double> cuts{f_lo, f_hi};
  for (const NoiseSegment& s : spec.segments) {
    cuts.push_back(s.f_lo);
    cuts.push_back(s.f_hi);
  }
  for (const NoisePeak& p : spec.peaks) {
    const double half = p.f0 / (2.0 * p.quality_q);
    for (double m : {0.0, 1.0, 3.0, 10.0, 30.0}) {
      cuts.push_back(p.f0 - m * half);
      cuts.push_back(p.f0 + m * half);
    }
  }
  // Power-law segments spanning decades are cut geometrically.
  for (double f = 1e-3; f < f_hi; f *= 2.0) cuts.push_back(f);
  std::erase_if(cuts, [&](double c) { return c < f_lo || c > f_hi; });
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += simpson(spec, cuts[i], cuts[i + 1], 64);
  return total;
}

double band_rms(const NoiseSpec& spec, double f_lo, double f_hi) {
  return std::sqrt(band_power(spec, f_lo, f_hi));
}

Trace synthesize(const NoiseSpec& spec, double duration_s, double sample_rate_hz) {
  validate(spec);
  require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0.0, "synthesize: sample rate must be > 0");
  require(std::isfinite(duration_s) && duration_s > 0.0, "synthesize: duration must be > 0");
  const double n_real = std::round(duration_s * sample_rate_hz);
  require(n_real >= 2.0, "synthesize: duration * sample_rate must give at least 2 samples");
  require(n_real <= 1e9, "synthesize: trace too long");
  const auto n = static_cast<std::size_t>(n_real);

  const double df = sample_rate_hz / static_cast<double>(n);
  const std::size_t last = (n - 1) / 2; // highest bin below Nyquist
  std::vector<std::complex<double>> spectrum(n / 2 + 1);
  Rng rng(spec.seed);
  // irfft divides by n; a one-sided bin of c * exp(i theta) * n / 2 yields
  // the sinusoid c cos(2 pi k t / T + theta).
  const double scale = std::sqrt(2.0 * df) * static_cast<double>(n) / 2.0;
  for (std::size_t k = 1; k <= last; ++k) {
    const double theta = kTwoPi * rng.uniform();
    const double amp = asd_model(spec, static_cast<double>(k) * df) * scale;
    spectrum[k] = std::polar(amp, theta);
  }
  Trace out(sample_rate_hz, "m", irfft(spectrum, n));
  out.metadata["seed"] = std::to_string(spec.seed);
  out.metadata["generator"] = std::string(Rng::kGeneratorId);
  return out;
}

NoiseSpec scaled(const NoiseSpec& spec, double factor) {
  require(std::isfinite(factor) && factor >= 0.0, "noise: scale factor must be >= 0");
  NoiseSpec out = spec;
  for (NoiseSegment& s : out.segments) s.asd_at_f_lo *= factor;
  for (NoisePeak& p : out.peaks) p.peak_asd *= factor;
  return out;
}

NoiseSpec without_floor(const NoiseSpec& spec) {
  NoiseSpec out = spec;
  out.floor_asd = 0.0;
  return out;
}

namespace {

constexpr double kFloor = 7e-12;       // interferometer detection limit
constexpr double kMidBand = 1e-10;     // 10 Hz to 100 Hz plateau
constexpr double kCorner = 3e-11;      // start of the f^-2 rolloff at 700 Hz
constexpr double kTopFrequency = 1e7;

std::vector<NoisePeak> beam_mode_peaks(double factor) {
  return {{140.0, 0.20e-9 * factor, 40.0}, {310.0, 0.25e-9 * factor, 40.0}, {560.0, 0.15e-9 * factor, 40.0}};
}

// Plateau at 100 Hz down to the rolloff corner, then f^-2.
void append_high_band(NoiseSpec& spec) {
  spec.segments.push_back({100.0, 700.0, kMidBand, std::log(kCorner / kMidBand) / std::log(7.0)});
  spec.segments.push_back({700.0, kTopFrequency, kCorner, -2.0});
}

// Pulse-tube on: a low-frequency excess below 2 Hz falling as a power law to
// the plateau at 10 Hz.
NoiseSpec pt_on_shape(double low) {
  NoiseSpec s;
  s.segments.push_back({0.0, 2.0, low, 0.0});
  s.segments.push_back({2.0, 10.0, low, std::log(kMidBand / low) / std::log(5.0)});
  s.segments.push_back({10.0, 100.0, kMidBand, 0.0});
  append_high_band(s);
  s.peaks = beam_mode_peaks(1.0);
  s.floor_asd = kFloor;
  return s;
}

NoiseSpec pt_off_shape(double plateau) {
  NoiseSpec s;
  s.segments.push_back({0.0, 100.0, plateau, 0.0});
  append_high_band(s);
  s.peaks = beam_mode_peaks(0.5);
  s.floor_asd = kFloor;
  return s;
}

// Bisection on a monotone parameter so that the 0-100 Hz rms hits `target`.
template <class Make>
NoiseSpec calibrate(Make make, double lo, double hi, double target) {
  for (int i = 0; i < 100; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (band_rms(make(mid), 0.0, 100.0) < target) lo = mid;
    else hi = mid;
  }
  return make(std::sqrt(lo * hi));
}

NoiseSpec mk15_pt_on() { return calibrate(pt_on_shape, 1e-11, 1e-7, 5.6e-9); }

// Relative displacement with the pulse tube off stays within about 10 nm
// peak-to-peak over seconds; for Gaussian noise that is roughly ten times
// the rms.
NoiseSpec mk15_pt_off() { return calibrate(pt_off_shape, 1e-12, 1e-8, 0.93e-9); }

NoiseSpec scaled_to_total(const NoiseSpec& shape, double target_rms) {
  const double f_hi = 1e4;
  NoiseSpec bare = without_floor(shape);
  const double k = target_rms / band_rms(bare, 0.0, f_hi);
  return scaled(shape, k);
}

// Diamond-integrated cavities show additional peaks near 11 kHz and 20 kHz.
NoiseSpec with_diamond_peaks(NoiseSpec s) {
  s.peaks.push_back({11e3, 1.5e-12, 30.0});
  s.peaks.push_back({20e3, 1.0e-12, 30.0});
  return s;
}

NoiseSpec base_preset(const std::string& name) {
  if (name == "mk15-pt-on") return mk15_pt_on();
  if (name == "mk15-pt-off") return mk15_pt_off();
  // 4 K and room-temperature cells are scaled from the 15 mK shapes by the
  // ratios of their measured lock residuals.
  if (name == "4k-pt-on") return scaled(mk15_pt_on(), 31.6 / 30.0);
  if (name == "4k-pt-off") return scaled(mk15_pt_off(), 19.8 / 19.9);
  if (name == "rt-pt-off") return scaled(mk15_pt_off(), 23.5 / 19.9);
  if (name == "absolute-ad-on") return scaled_to_total(mk15_pt_on(), 1.2e-6);
  if (name == "absolute-ad-off") return scaled_to_total(mk15_pt_on(), 2.8e-6);
  throw ValidationError("noise: unknown preset '" + name + "'");
}

} // namespace

NoiseSpec noise_preset(const std::string& name) {
  const std::string prefix = "diamond-";
  if (name.rfind(prefix, 0) == 0) {
    const std::string base = name.substr(prefix.size());
    require(base.rfind("absolute", 0) != 0, "noise: unknown preset '" + name + "'");
    return with_diamond_peaks(base_preset(base));
  }
  return base_preset(name);
}

std::vector<std::string> noise_preset_names() {
  return {"mk15-pt-on",         "mk15-pt-off",         "4k-pt-on",           "4k-pt-off",
          "rt-pt-off",          "absolute-ad-on",      "absolute-ad-off",    "diamond-mk15-pt-on",
          "diamond-mk15-pt-off", "diamond-4k-pt-on",   "diamond-4k-pt-off",  "diamond-rt-pt-off"};
}

} // namespace cavlock
