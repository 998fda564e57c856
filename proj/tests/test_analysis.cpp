#include "cavlock/analysis/calibration.hpp"
#include "cavlock/analysis/fit.hpp"
#include "cavlock/analysis/least_squares.hpp"
#include "cavlock/analysis/loss_budget.hpp"
#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/pdh.hpp"
#include "cavlock/rng.hpp"
#include "cavlock/vibration.hpp"

#include <doctest.h>

#include <cmath>

using namespace cavlock;
using namespace cavlock::analysis;

namespace {

ScanRamp fsr_ramp(const CavityConfig& c, double samples_per_linewidth = 20.0) {
  const DerivedCavity d = derive(c);
  ScanRamp r;
  r.start_detuning_hz = -0.25 * d.fsr;
  r.stop_detuning_hz = 1.25 * d.fsr;
  r.duration_s = 10e-3;
  r.sample_rate_hz = samples_per_linewidth * 1.5 * d.fsr / d.linewidth_fwhm / r.duration_s;
  return r;
}

Trace sine(double amplitude, double f, double fs, std::size_t n, double offset = 0.0, double phase = 0.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = offset + amplitude * std::sin(kTwoPi * f * i / fs + phase);
  return Trace(fs, "V", v);
}

} // namespace

TEST_CASE("levenberg-marquardt recovers an exponential decay") {
  std::vector<double> t(50), y(50);
  for (int i = 0; i < 50; ++i) {
    t[i] = 0.1 * i;
    y[i] = 3.0 * std::exp(-0.7 * t[i]) + 0.5;
  }
  auto res = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(50);
    for (int i = 0; i < 50; ++i) r[i] = p[0] * std::exp(-p[1] * t[i]) + p[2] - y[i];
    return r;
  };
  Eigen::VectorXd p0(3);
  p0 << 1.0, 0.2, 0.0;
  const LeastSquaresResult out = levenberg_marquardt(res, p0);
  CHECK(out.converged);
  CHECK(out.params[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(out.params[1] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(out.params[2] == doctest::Approx(0.5).epsilon(1e-6));
  Eigen::VectorXd too_many(60);
  too_many.setZero();
  CHECK_THROWS_AS(levenberg_marquardt(res, too_many), AnalysisError);
}

TEST_CASE("peak picking") {
  const std::vector<double> y{0, 1, 0, 0.5, 0.4, 3, 0, 0.2, 0};
  // Prominences: index 1 -> 1, index 3 -> 0.1, index 5 -> 3, index 7 -> 0.2.
  const auto peaks = find_peaks(y, 0.15);
  REQUIRE(peaks.size() == 3);
  CHECK(peaks[0].index == 5);
  CHECK(peaks[1].index == 1);
  CHECK(peaks[2].index == 7);
  CHECK(peaks[2].prominence == doctest::Approx(0.2));
  CHECK(find_peaks(y, 0.05).size() == 4);
}

TEST_CASE("noiseless lorentzian self-fit") {
  std::vector<double> v(2001);
  const double fs = 1e5;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 + lorentzian(i / fs, 0.0101, 0.0007, 2.0);
  const LorentzianFit fit = fit_lorentzians(Trace(fs, "V", v), 1);
  REQUIRE(fit.peaks.size() == 1);
  CHECK(fit.converged);
  CHECK(fit.peaks[0].center == doctest::Approx(0.0101).epsilon(1e-8));
  CHECK(fit.peaks[0].fwhm == doctest::Approx(0.0007).epsilon(1e-7));
  CHECK(fit.peaks[0].height == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(fit.offset == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("scan fits recover finesse and FSR") {
  for (const char* name : {"bare", "diamond"}) {
    CAPTURE(name);
    const CavityConfig c = cavity_preset(name);
    const DerivedCavity d = derive(c);
    const ScanRamp ramp = fsr_ramp(c);
    const ScanSpectrum s = scan_spectrum(c, PdhConfig{}, ramp, 0);
    ScanFitOptions o;
    o.nominal_sweep_rate_hz_per_s = ramp.sweep_rate_hz_per_s();
    const ScanFit fit = fit_scan(s.transmission, 150e6, o);
    CHECK(fit.fsr_source == "carrier_spacing");
    CHECK(fit.carriers == 2);
    CHECK(fit.finesse == doctest::Approx(d.finesse).epsilon(0.02));
    CHECK(fit.fsr == doctest::Approx(d.fsr).epsilon(0.01));
    CHECK(fit.linewidth == doctest::Approx(fit.fsr / fit.finesse).epsilon(1e-12));
    CHECK(std::abs(*fit.sweep_rate_deviation) < 0.01);
    CHECK(fit.peaks.size() == 6);
  }
  const ScanFit diamond = fit_scan(scan_spectrum(cavity_preset("diamond"), PdhConfig{}, fsr_ramp(cavity_preset("diamond")), 0).transmission, 150e6);
  CHECK(diamond.finesse == doctest::Approx(90).epsilon(0.05));
  CHECK(diamond.fsr == doctest::Approx(5.5e9).epsilon(0.01));
}

TEST_CASE("single-carrier scan uses the FSR hint") {
  const CavityConfig c = cavity_preset("bare");
  const DerivedCavity d = derive(c);
  const ScanRamp ramp = centered_ramp(500e6, 5e-3, 2e6);
  const ScanSpectrum s = scan_spectrum(c, PdhConfig{}, ramp, 0);
  CHECK_THROWS_AS(fit_scan(s.transmission, 150e6), AnalysisError);
  ScanFitOptions o;
  o.fsr_hint_hz = d.fsr;
  const ScanFit fit = fit_scan(s.transmission, 150e6, o);
  CHECK(fit.fsr_source == "hint");
  CHECK(fit.finesse == doctest::Approx(d.finesse).epsilon(0.02));
  CHECK(fit.axis_calibration == doctest::Approx(ramp.sweep_rate_hz_per_s()).epsilon(1e-3));
}

TEST_CASE("scan fit rejects traces without resonances") {
  NoiseSpec n = noise_preset("mk15-pt-on");
  CHECK_THROWS_AS(fit_scan(synthesize(n, 1.0, 2000.0), 150e6), AnalysisError);
  CHECK_THROWS_AS(fit_scan(Trace(1e3, "V", std::vector<double>(100, 1.0)), 150e6), ValidationError);
}

TEST_CASE("error slope calibration") {
  const CavityConfig c = cavity_preset("bare");
  const ScanRamp ramp = fsr_ramp(c, 40.0);
  const ScanSpectrum s = scan_spectrum(c, PdhConfig{}, ramp, 0);
  const ScanFit fit = fit_scan(s.transmission, 150e6);
  const ErrorCalibration cal = calibrate_error_slope(s.error, fit);
  CHECK(std::abs(cal.x0_hz) < 0.01 * fit.linewidth);
  const double slope = PdhDiscriminator(c, PdhConfig{}).slope_at_resonance();
  CHECK(cal.slope_v_per_hz == doctest::Approx(slope).epsilon(0.05));
  CHECK(cal.region_samples >= 8);

  Trace inverted = s.error;
  for (double& v : inverted.values) v = -v;
  const ErrorCalibration inv = calibrate_error_slope(inverted, fit);
  CHECK(inv.amplitude == doctest::Approx(-cal.amplitude).epsilon(1e-6));
  CHECK(inv.width_hz == doctest::Approx(cal.width_hz).epsilon(1e-6));

  // A straight line through the slope region: A / w reproduces its slope.
  Trace line = s.error;
  const ScanPeak& carrier = fit.peaks[1];
  REQUIRE(carrier.kind == "carrier");
  for (std::size_t i = 0; i < line.size(); ++i) {
    const double x = (line.time(i) - carrier.center_s) * fit.axis_calibration;
    line.values[i] = std::abs(x) <= fit.linewidth ? 2e-8 * x : (x > 0 ? 2e-8 : -2e-8) * fit.linewidth;
  }
  const ErrorCalibration lin = calibrate_error_slope(line, fit);
  CHECK(lin.slope_v_per_hz == doctest::Approx(2e-8).epsilon(0.01));

  Trace wiggly = s.error;
  for (std::size_t i = 0; i < wiggly.size(); ++i) wiggly.values[i] += 0.2 * std::sin(i * 2.0);
  CHECK_THROWS_AS(calibrate_error_slope(wiggly, fit), ValidationError);
}

TEST_CASE("error to displacement") {
  ErrorCalibration cal;
  cal.amplitude = 0.3;
  cal.offset = 0.01;
  cal.linewidth_hz = 14.755e6;
  cal.width_hz = 0.26 * cal.linewidth_hz;
  CHECK(linewidth_in_length(310.0, 737e-9) == doctest::Approx(1.19e-9).epsilon(0.01));

  const double scale = 0.26 * 737e-9 / (2.0 * 312.6);
  std::vector<double> truth(1000), err(1000);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    // Inner 90% of the linear range.
    truth[i] = 0.9 * scale * std::sin(0.01 * i);
    err[i] = cal.offset + cal.amplitude * std::tanh(truth[i] / scale);
  }
  const DisplacementResult r = error_to_displacement(Trace(1e4, "V", err), cal, 312.6, 737e-9);
  CHECK(r.length_scale == doctest::Approx(scale).epsilon(1e-12));
  CHECK(r.clipped == 0);
  for (std::size_t i = 0; i < truth.size(); i += 37)
    CHECK(r.displacement.values[i] == doctest::Approx(truth[i]).epsilon(5e-3).scale(1e-15));

  const DisplacementResult zero = error_to_displacement(Trace(1e4, "V", {0.01, 0.01}), cal, 312.6, 737e-9);
  CHECK(zero.displacement.values[0] == 0.0);

  const DisplacementResult clip = error_to_displacement(Trace(1e4, "V", {0.01, 0.5, 0.02, -0.4}), cal, 312.6, 737e-9);
  CHECK(clip.clipped == 2);
  CHECK(clip.clipped_mask[1]);
  CHECK(clip.clipped_mask[3]);
  CHECK(std::isfinite(clip.displacement.values[1]));
}

TEST_CASE("interferometer conversion anchors") {
  FringeCalibration cal;
  cal.amplitude = 0.8;
  cal.offset = 0.1;
  const DisplacementResult r = interferometer_convert(Trace(1e3, "V", {0.1, 0.9, -0.7, 1.5}), cal, 737e-9);
  CHECK(r.displacement.values[0] == 0.0);
  CHECK(r.displacement.values[1] == doctest::Approx(737e-9 / 8.0).epsilon(1e-12));
  CHECK(r.displacement.values[1] == doctest::Approx(92.1e-9).epsilon(1e-3));
  CHECK(r.displacement.values[2] == doctest::Approx(-737e-9 / 8.0).epsilon(1e-12));
  CHECK(r.clipped == 1);
  CHECK(r.displacement.values[3] == doctest::Approx(737e-9 / 8.0).epsilon(1e-12));
}

TEST_CASE("interferometer round trip") {
  const double lambda = 737e-9;
  // Fringe scan: a few fringes with a little detector noise.
  Rng rng(4);
  Trace fringe = sine(0.75, 13.0, 2000.0, 4000, 0.2, 0.4);
  for (double& v : fringe.values) v += 1e-3 * rng.normal();
  const FringeCalibration cal = interferometer_calibrate(fringe);
  CHECK(cal.amplitude == doctest::Approx(0.75).epsilon(1e-3));
  CHECK(cal.offset == doctest::Approx(0.2).epsilon(1e-2));
  CHECK(cal.frequency == doctest::Approx(13.0).epsilon(1e-4));
  CHECK(std::abs(std::remainder(cal.phase - 0.4, kTwoPi)) < 1e-2);

  // Quadrature signal carrying 5.6 nm rms of displacement.
  NoiseSpec n = noise_preset("mk15-pt-on");
  const Trace x = synthesize(without_floor(n), 20.0, 2000.0);
  Trace y = x;
  for (double& v : y.values) v = 0.2 + 0.75 * std::sin(4.0 * kPi * v / lambda);
  const DisplacementResult r = interferometer_convert(y, cal, lambda);
  CHECK(r.clipped == 0);
  CHECK(r.rms == doctest::Approx(rms(x)).epsilon(0.02));

  CHECK_THROWS_AS(interferometer_calibrate(sine(1.0, 0.2, 100.0, 200)), AnalysisError);
}

TEST_CASE("welch ASD normalization") {
  const double fs = 1000.0;
  // Tone: band power around f0 equals a^2 / 2.
  const Trace tone = sine(2.0, 125.0, fs, 8192);
  const AsdTable t = compute_asd(tone);
  CHECK(band_rms(t, 115.0, 135.0) * band_rms(t, 115.0, 135.0) == doctest::Approx(2.0).epsilon(0.01));
  CHECK(t.parseval_ratio == doctest::Approx(1.0).epsilon(0.01));
  CHECK(band_rms(tone, 100.0, 150.0) == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-3));
  CHECK(band_rms(tone, 200.0, 300.0) < 1e-9);

  // White noise: flat one-sided ASD sqrt(2 sigma^2 / fs).
  Rng rng(9);
  std::vector<double> w(1 << 16);
  for (double& v : w) v = 0.3 * rng.normal();
  const AsdTable white = compute_asd(Trace(fs, "V", w));
  const double expected = std::sqrt(2.0 * 0.09 / fs);
  const double measured = band_average_asd(white, 10.0, 490.0);
  CHECK(std::abs(20.0 * std::log10(measured / expected)) < 1.0);
  CHECK(white.segments_used == 8);
  CHECK(white.window == "hann");
  CHECK(white.units == "V/sqrt(Hz)");

  WelchOptions o;
  o.window = "rectangular";
  o.segment_length = 1000;
  o.overlap = 0.0;
  CHECK(compute_asd(tone, o).segments_used == 8);
  o.window = "kaiser";
  CHECK_THROWS_AS(compute_asd(tone, o), ValidationError);
  o = WelchOptions{};
  o.segment_length = 10000;
  CHECK_THROWS_AS(compute_asd(tone, o), ValidationError);
}

TEST_CASE("asd csv round trip") {
  Rng rng(1);
  std::vector<double> w(4096);
  for (double& v : w) v = rng.normal();
  Trace t(100.0, "m", w);
  t.metadata["seed"] = "1";
  const AsdTable a = compute_asd(t);
  const std::string path = "asd_roundtrip_test.csv";
  write_asd_csv(path, a);
  const AsdTable b = parse_asd_csv(read_file(path));
  CHECK(b.f == a.f);
  CHECK(b.asd == a.asd);
  CHECK(b.units == a.units);
  CHECK(b.segment_length == a.segment_length);
  CHECK(b.metadata.at("seed") == "1");
  std::remove(path.c_str());
  CHECK_THROWS_AS(parse_asd_csv("f_hz,asd\n1,abc\n"), ValidationError);
}

TEST_CASE("loss budget forward values") {
  const LossBudget b = loss_budget(cavity_preset("diamond"));
  CHECK(b.scattering_single_pass == doctest::Approx(0.0038).epsilon(0.02));
  CHECK(b.scattering_roundtrip == doctest::Approx(0.0075).epsilon(0.10));
  CHECK(b.absorption == doctest::Approx(0.034).epsilon(0.05));
  CHECK(b.clipping < 1e-50);
  CHECK(b.total == doctest::Approx(b.mirror_loss + b.scattering_roundtrip + b.clipping + b.absorption + b.ar_residual));
  CHECK(b.implied_finesse == doctest::Approx(kTwoPi / b.total));
  CHECK(b.implied_finesse == doctest::Approx(90.0).epsilon(0.15));
  CHECK_FALSE(b.measured_finesse.has_value());

  CavityConfig smooth = cavity_preset("diamond");
  smooth.surface_roughness_Rq = 0.0;
  CHECK(loss_budget(smooth).scattering_roundtrip == 0.0);
}

TEST_CASE("loss budget is monotone in every loss parameter") {
  const CavityConfig base = cavity_preset("diamond");
  const double total = loss_budget(base).total;
  auto lower = [&](auto edit) {
    CavityConfig c = base;
    edit(c);
    return loss_budget(c).total;
  };
  CHECK(lower([](CavityConfig& c) { c.surface_roughness_Rq *= 0.5; }) < total);
  CHECK(lower([](CavityConfig& c) { c.absorption_alpha *= 0.5; }) < total);
  CHECK(lower([](CavityConfig& c) { c.ar_residual_reflectivity *= 0.5; }) < total);
  CHECK(lower([](CavityConfig& c) { c.mirror_reflectivity_R1 = 0.995; }) < total);
  CHECK(lower([](CavityConfig& c) { c.mirror_reflectivity_R2 = 0.995; }) < total);
  CHECK(lower([](CavityConfig& c) { c.diamond_thickness_d *= 0.5; c.air_gap_length += 0.25e-3 * 2.4; }) < total);
  // Clipping: a narrower aperture loses more, so widening it lowers the total.
  CavityConfig tight = base;
  tight.coating_aperture_D = 0.3e-3;
  CavityConfig wide = tight;
  wide.coating_aperture_D = 0.35e-3;
  CHECK(loss_budget(wide).total < loss_budget(tight).total);
}

TEST_CASE("loss budget inverse mode") {
  const CavityConfig c = cavity_preset("diamond");
  const LossBudget inv = loss_budget(c, 90.0);
  REQUIRE(inv.implied_alpha.has_value());
  CHECK(*inv.implied_alpha >= 0.15);
  CHECK(*inv.implied_alpha <= 0.19);
  CHECK_FALSE(inv.over_explained);

  CavityConfig back = c;
  back.absorption_alpha = *inv.implied_alpha;
  CHECK(loss_budget(back).implied_finesse == doctest::Approx(90.0).epsilon(0.01));

  const LossBudget over = loss_budget(c, 1000.0);
  CHECK(over.over_explained);
  CHECK_FALSE(over.implied_alpha.has_value());
  CHECK_THROWS_AS(loss_budget(c, -5.0), ValidationError);
}
