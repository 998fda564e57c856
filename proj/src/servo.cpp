#include "cavlock/servo.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cavlock {

void validate(const ServoConfig& c) {
  auto finite = [](double v) { return std::isfinite(v); };
  require(finite(c.sample_rate_fs) && c.sample_rate_fs > 0.0, "servo: sample_rate_fs must be > 0");
  require(finite(c.kp) && finite(c.ki) && finite(c.kd), "servo: gains must be finite");
  require(finite(c.output_limits[0]) && finite(c.output_limits[1]) && c.output_limits[0] < c.output_limits[1],
          "servo: output_limits must be [min, max] with min < max");
  require(finite(c.integrator_clamp) && c.integrator_clamp > 0.0, "servo: integrator_clamp must be > 0");
  require(c.lock_engage_threshold > 0.0 && c.lock_engage_threshold < 1.0,
          "servo: lock_engage_threshold must be in (0,1)");
  require(c.unlock_threshold > 0.0 && c.unlock_threshold < 1.0, "servo: unlock_threshold must be in (0,1)");
  require(c.lock_engage_threshold > c.unlock_threshold,
          "servo: lock_engage_threshold must exceed unlock_threshold");
  require(c.lock_confirm_threshold > 0.0 && c.lock_confirm_threshold <= 1.0,
          "servo: lock_confirm_threshold must be in (0,1]");
  require(finite(c.scan_ramp.amplitude) && c.scan_ramp.amplitude > 0.0, "servo: scan_ramp.amplitude must be > 0");
  require(finite(c.scan_ramp.frequency) && c.scan_ramp.frequency > 0.0, "servo: scan_ramp.frequency must be > 0");
  require(finite(c.engage_settle_s) && c.engage_settle_s >= 0.0, "servo: engage_settle_s must be >= 0");
  require(finite(c.engage_timeout_s) && c.engage_timeout_s > c.engage_settle_s,
          "servo: engage_timeout_s must exceed engage_settle_s");
  require(c.unlock_debounce_samples >= 1, "servo: unlock_debounce_samples must be >= 1");
  require(finite(c.initial_length_offset), "servo: initial_length_offset must be finite");
  require(finite(c.record_rate_hz) && c.record_rate_hz > 0.0 && c.record_rate_hz <= c.sample_rate_fs,
          "servo: record_rate_hz must be in (0, sample_rate_fs]");
  require(finite(c.noise_rate_hz) && c.noise_rate_hz > 0.0 && c.noise_rate_hz <= c.sample_rate_fs,
          "servo: noise_rate_hz must be in (0, sample_rate_fs]");
  require(finite(c.residual_settle_s) && c.residual_settle_s >= 0.0, "servo: residual_settle_s must be >= 0");
}

std::string to_string(LockState s) {
  switch (s) {
  case LockState::Scan: return "scan";
  case LockState::Engage: return "engage";
  case LockState::Locked: return "locked";
  case LockState::Relock: return "relock";
  }
  return "unknown";
}

Pid::Pid(double kp, double ki, double kd, double dt, double integrator_clamp)
    : kp_(kp), ki_(ki), kd_(kd), dt_(dt), clamp_(integrator_clamp) {}

double Pid::update(double e) {
  integral_ = std::clamp(integral_ + ki_ * dt_ * e, -clamp_, clamp_);
  const double derivative = first_ ? 0.0 : kd_ * (e - previous_) / dt_;
  previous_ = e;
  first_ = false;
  return -(kp_ * e + integral_ + derivative);
}

void Pid::reset() {
  integral_ = 0.0;
  previous_ = 0.0;
  first_ = true;
}

LoopModel::LoopModel(const CavityConfig& cavity, const PdhConfig& pdh, const PlantConfig& plant,
                     const ServoConfig& servo)
    : plant_(plant, servo.sample_rate_fs), servo_(servo) {
  validate(servo_);
  const PdhDiscriminator disc(cavity, pdh);
  slope_v_per_m_ = disc.slope_at_resonance() * disc.cavity().detuning_from_length(1.0);
}

std::complex<double> LoopModel::controller(double f) const {
  const double T = 1.0 / servo_.sample_rate_fs;
  const std::complex<double> zi = std::polar(1.0, -kTwoPi * f * T);
  return servo_.kp + servo_.ki * T / (1.0 - zi) + servo_.kd * (1.0 - zi) / T;
}

std::complex<double> LoopModel::actuator(double f) const {
  const std::complex<double> zi = std::polar(1.0, -kTwoPi * f / servo_.sample_rate_fs);
  return plant_.config().piezo_gain * plant_.frequency_response(f) * zi;
}

std::complex<double> LoopModel::loop_gain(double f) const {
  return slope_v_per_m_ * actuator(f) * controller(f);
}

std::complex<double> LoopModel::sensitivity(double f) const { return 1.0 / (1.0 + loop_gain(f)); }

std::complex<double> LoopModel::injection_response(double f) const {
  return slope_v_per_m_ * actuator(f) * sensitivity(f);
}

LoopSimulator::LoopSimulator(const CavityConfig& cavity, const PdhConfig& pdh, const PlantConfig& plant,
                             const ServoConfig& servo, Trace disturbance, std::uint64_t seed)
    : disc_(cavity, pdh),
      plant_(plant, servo.sample_rate_fs),
      servo_(servo),
      pid_(servo.kp, servo.ki, servo.kd, 1.0 / servo.sample_rate_fs, servo.integrator_clamp),
      disturbance_(std::move(disturbance)),
      detector_rng_(derive_seed(seed, 2)) {
  validate(servo_);
  if (!disturbance_.empty()) validate(disturbance_);
  dt_ = 1.0 / servo_.sample_rate_fs;
  hz_per_m_ = disc_.cavity().detuning_from_length(1.0);
  half_wavelength_ = 0.5 * disc_.cavity().wavelength();
  peak_transmission_ = disc_.transmission(0.0);
}

double LoopSimulator::disturbance_at(double t) const {
  const std::size_t n = disturbance_.size();
  if (n == 0) return 0.0;
  const double pos = t * disturbance_.sample_rate_hz;
  const double base = std::floor(pos);
  const double frac = pos - base;
  const auto i0 = static_cast<std::size_t>(std::fmod(base, static_cast<double>(n)));
  const std::size_t i1 = (i0 + 1) % n;
  return (1.0 - frac) * disturbance_.values[i0] + frac * disturbance_.values[i1];
}

double LoopSimulator::scan_voltage() const {
  const double p = scan_phase_ - std::floor(scan_phase_);
  double tri;
  if (p < 0.25) tri = 4.0 * p;
  else if (p < 0.75) tri = 2.0 - 4.0 * p;
  else tri = 4.0 * p - 4.0;
  return servo_.scan_ramp.amplitude * tri;
}

// Continues the triangle upward from `volts` (clamped to the ramp span).
void LoopSimulator::resume_scan(double volts) {
  const double x = std::clamp(volts / servo_.scan_ramp.amplitude, -1.0, 1.0);
  scan_phase_ = x >= 0.0 ? 0.25 * x : 1.0 + 0.25 * x;
  armed_ = false;
}

SimSample LoopSimulator::step(double injection_volts) {
  require(std::isfinite(injection_volts), "servo: injection must be finite");
  const double t = time();
  SimSample s;
  s.t = t;
  s.disturbance = disturbance_at(t);
  const double length = servo_.initial_length_offset + actuator_ + s.disturbance;
  s.length_offset = length - half_wavelength_ * std::round(length / half_wavelength_);

  const PdhDiscriminator::Reading reading = disc_.read(hz_per_m_ * length);
  s.error = reading.error;
  if (disc_.config().detector_noise_rms > 0.0)
    s.error += disc_.config().detector_noise_rms * detector_rng_.normal();
  s.transmission = reading.transmission / peak_transmission_;

  double command = 0.0;
  switch (state_) {
  case LockState::Scan:
  case LockState::Relock:
    command = scan_voltage();
    scan_phase_ += servo_.scan_ramp.frequency * dt_;
    if (!armed_ && s.transmission < servo_.unlock_threshold) armed_ = true;
    if (armed_ && s.transmission >= servo_.lock_engage_threshold) {
      state_ = LockState::Engage;
      bias_ = command;
      engage_start_ = t;
      pid_.reset();
      below_count_ = 0;
    }
    break;
  case LockState::Engage:
  case LockState::Locked:
    command = bias_ + pid_.update(s.error);
    break;
  }

  if (state_ == LockState::Engage) {
    const double elapsed = t - engage_start_;
    if (elapsed >= servo_.engage_settle_s && s.transmission >= servo_.lock_confirm_threshold) {
      state_ = LockState::Locked;
      below_count_ = 0;
      if (!time_to_lock_) time_to_lock_ = t;
    } else if (elapsed >= servo_.engage_timeout_s) {
      state_ = LockState::Relock;
      resume_scan(command);
    }
  } else if (state_ == LockState::Locked) {
    below_count_ = s.transmission < servo_.unlock_threshold ? below_count_ + 1 : 0;
    if (below_count_ >= servo_.unlock_debounce_samples) {
      state_ = LockState::Relock;
      ++relocks_;
      resume_scan(command);
    }
  }
  s.state = state_;
  if (state_ == LockState::Locked) ++locked_samples_;

  const double requested = command + injection_volts;
  const double limited = std::clamp(requested, servo_.output_limits[0], servo_.output_limits[1]);
  s.control = plant_.config().clamp(limited);
  const bool clamped = s.control != requested;
  if (clamped && !was_clamped_) ++saturation_events_;
  was_clamped_ = clamped;

  actuator_ = plant_.step(s.control, 0.0);
  ++n_;
  return s;
}

Trace closed_loop_disturbance(const NoiseSpec& noise, const ServoConfig& servo, double duration_s,
                              std::uint64_t seed) {
  NoiseSpec spec = without_floor(noise);
  spec.seed = derive_seed(seed, 1);
  const double rate = servo.noise_rate_hz;
  const double span = std::max(duration_s, 2.0 / rate);
  return synthesize(spec, span, rate);
}

ClosedLoopRun run_closed_loop(const CavityConfig& cavity, const PdhConfig& pdh, const NoiseSpec& noise,
                              const PlantConfig& plant, const ServoConfig& servo, double duration_s,
                              std::uint64_t seed) {
  validate(servo);
  validate(noise);
  require(std::isfinite(duration_s) && duration_s >= 10.0 / servo.sample_rate_fs,
          "lock: duration must be at least 10 samples");
  LoopSimulator sim(cavity, pdh, plant, servo, closed_loop_disturbance(noise, servo, duration_s, seed), seed);

  const auto total = static_cast<std::uint64_t>(std::llround(duration_s * servo.sample_rate_fs));
  const auto decimation =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(servo.sample_rate_fs / servo.record_rate_hz)));
  const double record_rate = servo.sample_rate_fs / static_cast<double>(decimation);

  ClosedLoopRun run;
  run.length_offset = Trace(record_rate, "m", {});
  run.disturbance = Trace(record_rate, "m", {});
  run.error = Trace(record_rate, "V", {});
  run.control = Trace(record_rate, "V", {});
  run.transmission = Trace(record_rate, "normalized_power", {});
  run.lock_state = Trace(record_rate, "state", {});
  const std::size_t reserve = static_cast<std::size_t>(total / decimation + 1);
  for (Trace* t : {&run.length_offset, &run.disturbance, &run.error, &run.control, &run.transmission,
                   &run.lock_state})
    t->values.reserve(reserve);

  // Recorded values are means over each record interval, which keeps
  // loop residuals near multiples of the record rate from aliasing into the
  // low-frequency band. The lock state is taken at the end of the interval.
  //
  // Longest stretch of recorded LOCKED samples, skipping the settle time
  // after each entry into LOCKED.
  std::size_t best_begin = 0, best_end = 0, cur_begin = 0;
  bool in_run = false;
  double locked_since = 0.0;
  LockState previous = LockState::Scan;
  std::array<double, 5> sums{};
  bool block_usable = true;

  for (std::uint64_t i = 0; i < total; ++i) {
    const SimSample s = sim.step();
    if (s.state == LockState::Locked && previous != LockState::Locked) locked_since = s.t;
    previous = s.state;
    sums[0] += s.length_offset;
    sums[1] += s.disturbance;
    sums[2] += s.error;
    sums[3] += s.control;
    sums[4] += s.transmission;
    block_usable = block_usable && s.state == LockState::Locked && s.t - locked_since >= servo.residual_settle_s;
    if ((i + 1) % decimation != 0) continue;

    const double scale = 1.0 / static_cast<double>(decimation);
    const std::size_t idx = run.error.values.size();
    run.length_offset.values.push_back(sums[0] * scale);
    run.disturbance.values.push_back(sums[1] * scale);
    run.error.values.push_back(sums[2] * scale);
    run.control.values.push_back(sums[3] * scale);
    run.transmission.values.push_back(sums[4] * scale);
    run.lock_state.values.push_back(static_cast<double>(static_cast<int>(s.state)));
    const bool usable = block_usable;
    sums.fill(0.0);
    block_usable = true;

    if (usable && !in_run) {
      cur_begin = idx;
      in_run = true;
    }
    if (!usable && in_run) in_run = false;
    if (in_run && idx + 1 - cur_begin > best_end - best_begin) {
      best_begin = cur_begin;
      best_end = idx + 1;
    }
  }

  LockReport& rep = run.report;
  rep.lock_acquired = sim.time_to_lock().has_value();
  rep.time_to_lock = sim.time_to_lock().value_or(0.0);
  rep.locked_fraction = static_cast<double>(sim.locked_samples()) / static_cast<double>(total);
  rep.saturation_events = sim.saturation_events();
  rep.relock_count = sim.relock_count();
  rep.residual_error = run.error.slice(best_begin, best_end);
  rep.residual_displacement = run.length_offset.slice(best_begin, best_end);
  rep.rms_displacement = rep.residual_displacement.empty() ? 0.0 : rms(rep.residual_displacement);
  return run;
}

void run_until_locked(LoopSimulator& sim, double settle_s, double timeout_s) {
  const double start = sim.time();
  std::uint64_t locked_run = 0;
  const auto needed = static_cast<std::uint64_t>(std::ceil(settle_s / sim.dt()));
  while (sim.time() - start < timeout_s) {
    const SimSample s = sim.step();
    locked_run = s.state == LockState::Locked ? locked_run + 1 : 0;
    if (locked_run > needed) return;
  }
  throw AnalysisError("lock not acquired within " + format_double(timeout_s) + " s");
}

namespace {

struct Demodulated {
  std::complex<double> response;
  bool ok;
};

Demodulated measure_point(LoopSimulator& sim, double f, std::uint64_t settle, std::uint64_t n,
                          double amplitude, double error_limit) {
  const double w = kTwoPi * f * sim.dt();
  std::complex<double> e_sum = 0.0, u_sum = 0.0;
  bool ok = true;
  for (std::uint64_t k = 0; k < settle + n; ++k) {
    const double phase = w * static_cast<double>(k);
    const double v = amplitude * std::sin(phase);
    const SimSample s = sim.step(v);
    if (s.state != LockState::Locked || std::abs(s.error) > error_limit) ok = false;
    if (k >= settle) {
      const std::complex<double> ref = std::polar(1.0, -w * static_cast<double>(k - settle));
      e_sum += s.error * ref;
      u_sum += v * ref;
    }
  }
  return {e_sum / u_sum, ok};
}

} // namespace

std::vector<BodePoint> bode_measure(LoopSimulator& sim, const std::vector<double>& f_points,
                                    double injection_amplitude, const BodeOptions& options) {
  require(std::isfinite(injection_amplitude) && injection_amplitude > 0.0,
          "bode: injection_amplitude must be > 0");
  require(sim.state() == LockState::Locked, "bode: system must be LOCKED before measuring");
  const double fs = 1.0 / sim.dt();
  const double error_limit = options.linear_fraction * sim.discriminator().peak_error();

  std::vector<BodePoint> out;
  for (double f : f_points) {
    require(std::isfinite(f) && f > 0.0 && f < 0.5 * fs, "bode: frequencies must be in (0, fs/2)");
    const double periods = std::max(1.0, std::ceil(options.measure_s * f));
    const auto n = static_cast<std::uint64_t>(std::llround(periods * fs / f));
    const double f_used = periods * fs / static_cast<double>(n);
    const double settle_periods = std::ceil(options.settle_s * f_used);
    const auto settle = static_cast<std::uint64_t>(std::llround(settle_periods * fs / f_used));

    BodePoint p;
    p.f_hz = f_used;
    const LoopSimulator snapshot = sim;
    Demodulated d = measure_point(sim, f_used, settle, n, injection_amplitude, error_limit);
    if (!d.ok) {
      sim = snapshot;
      p.retried = true;
      d = measure_point(sim, f_used, settle, n, 0.5 * injection_amplitude, error_limit);
      if (!d.ok) sim = snapshot;
    }
    p.valid = d.ok;
    p.response = d.response;
    p.gain_db = 20.0 * std::log10(std::abs(d.response));
    p.phase_deg = std::arg(d.response) * 180.0 / kPi;
    out.push_back(p);
  }
  return out;
}

std::vector<double> log_spaced(double f_lo, double f_hi, int count) {
  require(f_lo > 0.0 && f_hi > f_lo && count >= 2, "log_spaced: need 0 < f_lo < f_hi and count >= 2");
  std::vector<double> f(static_cast<std::size_t>(count));
  const double step = std::log(f_hi / f_lo) / (count - 1);
  for (int i = 0; i < count; ++i) f[static_cast<std::size_t>(i)] = f_lo * std::exp(step * i);
  f.back() = f_hi;
  return f;
}

ServoConfig servo_preset(const std::string& name) {
  ServoConfig c;
  if (name == "bare") return c;
  if (name == "diamond") {
    c.kp = 0.6;
    c.ki = 3e5;
    return c;
  }
  throw ValidationError("servo: unknown preset '" + name + "'");
}

std::vector<std::string> servo_preset_names() { return {"bare", "diamond"}; }

} // namespace cavlock
