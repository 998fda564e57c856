#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/servo.hpp"

#include <doctest.h>

#include <cmath>

using namespace cavlock;

namespace {

struct Setup {
  CavityConfig cavity = cavity_preset("bare");
  PdhConfig pdh;
  PlantConfig plant = plant_preset("bare");
  ServoConfig servo = servo_preset("bare");
  NoiseSpec noise = noise_preset("mk15-pt-on");
};

} // namespace

TEST_CASE("pid arithmetic") {
  Pid p(2.0, 100.0, 0.0, 1e-3, 5.0);
  CHECK(p.update(1.0) == doctest::Approx(-(2.0 + 100.0 * 1e-3)));
  CHECK(p.update(1.0) == doctest::Approx(-(2.0 + 2.0 * 100.0 * 1e-3)));
  CHECK(p.integral() == doctest::Approx(0.2));
  for (int i = 0; i < 1000; ++i) p.update(1.0);
  CHECK(p.integral() == doctest::Approx(5.0)); // clamped
  p.reset();
  CHECK(p.integral() == 0.0);

  Pid d(0.0, 0.0, 1e-3, 1e-3, 1.0);
  d.update(0.0);
  CHECK(d.update(0.5) == doctest::Approx(-0.5));
}

TEST_CASE("servo validation") {
  ServoConfig s;
  s.lock_engage_threshold = 0.1;
  s.unlock_threshold = 0.2;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = ServoConfig{};
  s.unlock_threshold = 1.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = ServoConfig{};
  s.sample_rate_fs = 0.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = ServoConfig{};
  s.output_limits = {1.0, -1.0};
  CHECK_THROWS_AS(validate(s), ValidationError);
  CHECK_NOTHROW(validate(servo_preset("diamond")));
  CHECK_THROWS_AS(servo_preset("fast"), ValidationError);
}

TEST_CASE("loop model identities") {
  const Setup s;
  const LoopModel m(s.cavity, s.pdh, s.plant, s.servo);
  const PdhDiscriminator disc(s.cavity, s.pdh);
  const CavityResponse r(s.cavity);
  CHECK(m.discriminator_slope() == doctest::Approx(std::abs(disc.slope_at_resonance() * r.detuning_from_length(1.0))).epsilon(1e-9));
  for (double f : {10.0, 1e3, 6e3, 3e4}) {
    const auto L = m.loop_gain(f);
    CHECK(std::abs(m.sensitivity(f) * (1.0 + L) - 1.0) < 1e-12);
    CHECK(std::abs(m.injection_response(f) - m.discriminator_slope() * m.actuator(f) * m.sensitivity(f)) <
          1e-9 * std::abs(m.injection_response(f)));
  }
  CHECK(std::abs(m.sensitivity(10.0)) < 0.01);
  double worst = 0.0;
  for (double f : log_spaced(1.0, 4.9e5, 2000)) worst = std::max(worst, std::abs(m.sensitivity(f)));
  CHECK(worst < 3.0);
}

TEST_CASE("closed loop locks and reports consistent statistics") {
  const Setup s;
  const ClosedLoopRun a = run_closed_loop(s.cavity, s.pdh, s.noise, s.plant, s.servo, 0.3, 5);
  const LockReport& r = a.report;
  CHECK(r.lock_acquired);
  CHECK(r.time_to_lock > 0.0);
  CHECK(r.time_to_lock < 0.05);
  CHECK(r.locked_fraction > 0.9);
  CHECK(r.relock_count == 0);
  CHECK(r.saturation_events == 0);
  CHECK(r.rms_displacement == rms(r.residual_displacement));
  CHECK(r.rms_displacement < 100e-12);
  CHECK(r.residual_error.size() == r.residual_displacement.size());
  CHECK(a.error.size() == static_cast<std::size_t>(0.3 * s.servo.record_rate_hz));

  const ClosedLoopRun b = run_closed_loop(s.cavity, s.pdh, s.noise, s.plant, s.servo, 0.3, 5);
  CHECK(a.error.values == b.error.values);
  CHECK(a.length_offset.values == b.length_offset.values);
  const ClosedLoopRun c = run_closed_loop(s.cavity, s.pdh, s.noise, s.plant, s.servo, 0.3, 6);
  CHECK(a.disturbance.values != c.disturbance.values);
}

TEST_CASE("no lock when the scan cannot reach a resonance") {
  Setup s;
  s.servo.scan_ramp.amplitude = 1.0; // 6 nm of travel, resonance is ~92 nm away
  const ClosedLoopRun run = run_closed_loop(s.cavity, s.pdh, s.noise, s.plant, s.servo, 0.3, 0);
  CHECK_FALSE(run.report.lock_acquired);
  CHECK(run.report.time_to_lock == 0.0);
  CHECK(run.report.locked_fraction == 0.0);
  CHECK(run.report.residual_displacement.empty());

  LoopSimulator sim(s.cavity, s.pdh, s.plant, s.servo, Trace{}, 0);
  CHECK_THROWS_AS(run_until_locked(sim, 1e-3, 0.05), AnalysisError);
}

TEST_CASE("lock is lost on a large jump and reacquired") {
  const Setup s;
  // 0.2 um length jump at t = 0.1 s, held for the rest of the run.
  std::vector<double> steps(1000, 0.0);
  for (std::size_t i = 100; i < steps.size(); ++i) steps[i] = 0.2e-6;
  LoopSimulator sim(s.cavity, s.pdh, s.plant, s.servo, Trace(1e3, "m", steps), 0);
  bool lost = false;
  while (sim.time() < 0.7) {
    const SimSample x = sim.step();
    if (x.t > 0.1 && x.state != LockState::Locked) lost = true;
  }
  CHECK(lost);
  CHECK(sim.relock_count() >= 1);
  CHECK(sim.state() == LockState::Locked);
}

TEST_CASE("in-loop bode points agree with the loop model") {
  const Setup s;
  LoopSimulator sim(s.cavity, s.pdh, s.plant, s.servo, Trace{}, 0);
  run_until_locked(sim, 20e-3, 0.5);
  const LoopModel m(s.cavity, s.pdh, s.plant, s.servo);
  for (const BodePoint& p : bode_measure(sim, {300.0, 5e3, 25e3}, 0.01)) {
    CAPTURE(p.f_hz);
    CHECK(p.valid);
    const auto h = m.injection_response(p.f_hz);
    CHECK(std::abs(p.gain_db - 20.0 * std::log10(std::abs(h))) < 0.1);
    CHECK(std::abs(std::remainder(p.phase_deg - std::arg(h) * 180.0 / kPi, 360.0)) < 1.0);
  }
  CHECK_THROWS_AS(bode_measure(sim, {1e3}, 0.0), ValidationError);
}

TEST_CASE("log spacing") {
  const auto f = log_spaced(100.0, 40e3, 20);
  REQUIRE(f.size() == 20);
  CHECK(f.front() == doctest::Approx(100.0));
  CHECK(f.back() == doctest::Approx(40e3));
  CHECK(f[1] / f[0] == doctest::Approx(f[19] / f[18]));
}
