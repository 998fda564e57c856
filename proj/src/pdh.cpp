#include "cavlock/pdh.hpp"

#include "cavlock/error.hpp"
#include "cavlock/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cavlock {

void validate(const PdhConfig& c) {
  require(std::isfinite(c.modulation_frequency_Omega) && c.modulation_frequency_Omega > 0.0,
          "pdh: modulation_frequency_Omega must be > 0");
  require(std::isfinite(c.modulation_depth_beta) && c.modulation_depth_beta >= 0.0,
          "pdh: modulation_depth_beta must be >= 0");
  require(c.modulation_depth_beta < 2.4048,
          "pdh: modulation_depth_beta must be below the first zero of J0 (2.4048)");
  require(std::isfinite(c.detector_gain), "pdh: detector_gain must be finite");
  require(std::isfinite(c.detector_noise_rms) && c.detector_noise_rms >= 0.0,
          "pdh: detector_noise_rms must be >= 0");
}

double carrier_power(double beta) {
  const double j0 = std::cyl_bessel_j(0.0, beta);
  return j0 * j0;
}

double sideband_power(double beta) {
  const double j1 = std::cyl_bessel_j(1.0, beta);
  return j1 * j1;
}

PdhDiscriminator::PdhDiscriminator(const CavityConfig& cavity, const PdhConfig& pdh)
    : PdhDiscriminator(CavityResponse(cavity), pdh) {}

PdhDiscriminator::PdhDiscriminator(const CavityResponse& response, const PdhConfig& pdh)
    : response_(response), pdh_(pdh) {
  validate(pdh_);
  pc_ = carrier_power(pdh_.modulation_depth_beta);
  ps_ = sideband_power(pdh_.modulation_depth_beta);
  // Sign chosen so that the slope at resonance is positive for positive gain.
  error_scale_ = -2.0 * pdh_.detector_gain * std::sqrt(pc_ * ps_);
  omega_phasor_ = response_.phasor(pdh_.modulation_frequency_Omega);
}

PdhDiscriminator::Reading PdhDiscriminator::read(double detuning_hz) const {
  const std::complex<double> e0 = response_.phasor(detuning_hz);
  const std::complex<double> ep = e0 * omega_phasor_;
  const std::complex<double> em = e0 * std::conj(omega_phasor_);
  const std::complex<double> f0 = response_.reflection_at(e0);
  const std::complex<double> beat =
      f0 * std::conj(response_.reflection_at(ep)) - std::conj(f0) * response_.reflection_at(em);
  Reading r;
  r.error = error_scale_ * beat.imag();
  r.transmission = pc_ * response_.transmitted_power_at(e0);
  if (ps_ > 0.0) r.transmission += ps_ * (response_.transmitted_power_at(ep) + response_.transmitted_power_at(em));
  return r;
}

double PdhDiscriminator::error(double detuning_hz) const {
  const double omega = pdh_.modulation_frequency_Omega;
  const std::complex<double> f0 = response_.reflection(detuning_hz);
  const std::complex<double> fp = response_.reflection(detuning_hz + omega);
  const std::complex<double> fm = response_.reflection(detuning_hz - omega);
  const std::complex<double> beat = f0 * std::conj(fp) - std::conj(f0) * fm;
  return error_scale_ * beat.imag();
}

double PdhDiscriminator::transmission(double detuning_hz) const {
  const double omega = pdh_.modulation_frequency_Omega;
  double t = pc_ * response_.transmitted_power(detuning_hz);
  if (ps_ > 0.0)
    t += ps_ * (response_.transmitted_power(detuning_hz + omega) +
                response_.transmitted_power(detuning_hz - omega));
  return t;
}

double PdhDiscriminator::slope_at_resonance() const {
  const double h = 1e-4 * response_.derived().linewidth_fwhm;
  return (error(h) - error(-h)) / (2.0 * h);
}

double PdhDiscriminator::peak_error() const {
  const double lw = response_.derived().linewidth_fwhm;
  double a = 0.0, b = lw;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto score = [&](double x) { return -std::abs(error(x)); };
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = score(c), fd = score(d);
  for (int i = 0; i < 80; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = score(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = score(d);
    }
  }
  return std::abs(error(0.5 * (a + b)));
}

double error_signal(const CavityConfig& cavity, const PdhConfig& pdh, double detuning_hz) {
  return PdhDiscriminator(cavity, pdh).error(detuning_hz);
}

std::size_t ScanRamp::samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

void validate(const ScanRamp& r) {
  require(std::isfinite(r.start_detuning_hz) && std::isfinite(r.stop_detuning_hz),
          "scan: ramp endpoints must be finite");
  require(r.stop_detuning_hz != r.start_detuning_hz, "scan: ramp span must be nonzero");
  require(std::isfinite(r.duration_s) && r.duration_s > 0.0, "scan: duration must be > 0");
  require(std::isfinite(r.sample_rate_hz) && r.sample_rate_hz > 0.0, "scan: sample rate must be > 0");
  require(r.samples() >= 2, "scan: ramp must contain at least 2 samples");
}

ScanRamp centered_ramp(double span_hz, double duration_s, double sample_rate_hz) {
  ScanRamp r;
  r.start_detuning_hz = -0.5 * span_hz;
  r.stop_detuning_hz = 0.5 * span_hz;
  r.duration_s = duration_s;
  r.sample_rate_hz = sample_rate_hz;
  return r;
}

ScanSpectrum scan_spectrum(const CavityConfig& cavity, const PdhConfig& pdh, const ScanRamp& ramp,
                           std::uint64_t seed) {
  validate(ramp);
  const PdhDiscriminator disc(cavity, pdh);
  const std::size_t n = ramp.samples();
  const double rate = ramp.sweep_rate_hz_per_s();

  ScanSpectrum out;
  out.transmission = Trace(ramp.sample_rate_hz, "normalized_power", std::vector<double>(n));
  out.error = Trace(ramp.sample_rate_hz, "V", std::vector<double>(n));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = ramp.start_detuning_hz + rate * (static_cast<double>(i) / ramp.sample_rate_hz);
    out.transmission.values[i] = disc.transmission(delta);
    double e = disc.error(delta);
    if (pdh.detector_noise_rms > 0.0) e += pdh.detector_noise_rms * rng.normal();
    out.error.values[i] = e;
  }

  const double fsr = disc.cavity().derived().fsr;
  const double omega = pdh.modulation_frequency_Omega;
  const double lo = std::min(ramp.start_detuning_hz, ramp.stop_detuning_hz);
  const double hi = std::max(ramp.start_detuning_hz, ramp.stop_detuning_hz);
  for (double k = std::ceil(lo / fsr); k * fsr <= hi; k += 1.0) {
    ++out.carriers_crossed;
    const double c = k * fsr;
    if (c - omega >= lo && c + omega <= hi) out.covers_triplet = true;
  }
  out.crosses_carrier = out.carriers_crossed > 0;

  for (Trace* t : {&out.transmission, &out.error}) {
    t->metadata["sweep_start_hz"] = format_double(ramp.start_detuning_hz);
    t->metadata["sweep_rate_hz_per_s"] = format_double(rate);
  }
  return out;
}

} // namespace cavlock
