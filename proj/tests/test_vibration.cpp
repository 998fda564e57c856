#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/error.hpp"
#include "cavlock/vibration.hpp"

#include <doctest.h>

#include <cmath>

using namespace cavlock;

namespace {

// Trapezoid integral of ASD^2 on a dense grid, linear below 1 Hz and
// logarithmic above.
double dense_band_power(const NoiseSpec& spec, double lo, double hi) {
  double sum = 0.0;
  auto piece = [&](double a, double b, int n, bool log_grid) {
    double prev_f = a, prev_v = std::pow(asd_model(spec, a), 2);
    for (int i = 1; i <= n; ++i) {
      const double f = log_grid ? a * std::pow(b / a, static_cast<double>(i) / n) : a + (b - a) * i / n;
      const double v = std::pow(asd_model(spec, f), 2);
      sum += 0.5 * (v + prev_v) * (f - prev_f);
      prev_f = f;
      prev_v = v;
    }
  };
  const double split = std::min(std::max(lo, 1.0), hi);
  if (split > lo) piece(lo, split, 20000, false);
  if (hi > split) piece(split, hi, 400000, true);
  return sum;
}

} // namespace

TEST_CASE("mk15 pulse-tube-on model anchors") {
  const NoiseSpec s = noise_preset("mk15-pt-on");
  CHECK(band_rms(s, 0.0, 100.0) == doctest::Approx(5.6e-9).epsilon(1e-6));
  CHECK(asd_model(s, 5e5) == doctest::Approx(7e-12).epsilon(1e-9)); // floor
  // f^-2 rolloff above the last peak, before the floor takes over.
  const double ratio = asd_model(s, 1200.0) / asd_model(s, 800.0);
  CHECK(ratio == doctest::Approx(std::pow(1200.0 / 800.0, -2.0)).epsilon(0.02));
}

TEST_CASE("band power agrees with dense numerical integration") {
  for (const std::string& name : noise_preset_names()) {
    const NoiseSpec s = noise_preset(name);
    for (auto [lo, hi] : {std::pair{0.0, 100.0}, std::pair{10.0, 1000.0}, std::pair{0.5, 3e4}}) {
      CAPTURE(name);
      CAPTURE(lo);
      CHECK(band_power(s, lo, hi) == doctest::Approx(dense_band_power(s, lo, hi)).epsilon(5e-3));
    }
  }
}

TEST_CASE("absolute vibration presets carry the accelerometer rms") {
  CHECK(band_rms(without_floor(noise_preset("absolute-ad-on")), 0.0, 1e4) == doctest::Approx(1.2e-6).epsilon(0.02));
  CHECK(band_rms(without_floor(noise_preset("absolute-ad-off")), 0.0, 1e4) == doctest::Approx(2.8e-6).epsilon(0.02));
}

TEST_CASE("pulse tube off is quieter than on at each stage") {
  CHECK(band_rms(noise_preset("mk15-pt-off"), 0, 100) < band_rms(noise_preset("mk15-pt-on"), 0, 100));
  CHECK(band_rms(noise_preset("4k-pt-off"), 0, 100) < band_rms(noise_preset("4k-pt-on"), 0, 100));
  CHECK(band_rms(noise_preset("mk15-pt-off"), 0, 100) == doctest::Approx(0.93e-9).epsilon(0.01));
}

TEST_CASE("scaling multiplies the rms") {
  const NoiseSpec s = without_floor(noise_preset("4k-pt-on"));
  CHECK(band_rms(scaled(s, 3.0), 0.0, 1e4) == doctest::Approx(3.0 * band_rms(s, 0.0, 1e4)).epsilon(1e-9));
}

TEST_CASE("synthesis is seeded, sized and matches the model") {
  NoiseSpec s = noise_preset("mk15-pt-on");
  s.seed = 11;
  const Trace a = synthesize(s, 20.0, 2000.0);
  const Trace b = synthesize(s, 20.0, 2000.0);
  s.seed = 12;
  const Trace c = synthesize(s, 20.0, 2000.0);
  CHECK(a.size() == 40000);
  CHECK(a.sample_rate_hz == 2000.0);
  CHECK(a.units == "m");
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.metadata.at("seed") == "11");
  // Amplitudes are deterministic per bin, so band rms tracks the model closely.
  CHECK(analysis::band_rms(a, 0.0, 100.0) == doctest::Approx(band_rms(s, 0.0, 100.0)).epsilon(0.05));
  CHECK(analysis::band_rms(a, 100.0, 900.0) == doctest::Approx(band_rms(s, 100.0, 900.0)).epsilon(0.05));
}

TEST_CASE("noise spec validation") {
  NoiseSpec s;
  s.segments = {{1.0, 10.0, 1e-10, 0.0}, {20.0, 30.0, 1e-10, 0.0}}; // gap
  CHECK_THROWS_AS(validate(s), ValidationError);
  s.segments = {{1.0, 10.0, -1e-10, 0.0}};
  CHECK_THROWS_AS(validate(s), ValidationError);
  s.segments = {{0.0, 10.0, 1e-10, -1.0}}; // power law from zero frequency
  CHECK_THROWS_AS(validate(s), ValidationError);
  s.segments = {{0.0, 10.0, 1e-10, 0.0}};
  s.peaks = {{100.0, 1e-11, 0.0}};
  CHECK_THROWS_AS(validate(s), ValidationError);
  s.peaks.clear();
  s.floor_asd = -1.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  CHECK_THROWS_AS(noise_preset("mk15"), ValidationError);
  for (const std::string& name : noise_preset_names()) CHECK_NOTHROW(validate(noise_preset(name)));
}
