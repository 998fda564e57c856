#pragma once

#include "cavlock/cavity.hpp"
#include "cavlock/pdh.hpp"
#include "cavlock/plant.hpp"
#include "cavlock/rng.hpp"
#include "cavlock/trace.hpp"
#include "cavlock/vibration.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cavlock {

struct ScanRampConfig {
  double amplitude = 60.0; // V, triangle from -amplitude to +amplitude
  double frequency = 5.0;  // Hz
};

struct ServoConfig {
  double sample_rate_fs = 1e6;
  double kp = 0.05;
  double ki = 5e4; // 1/s
  double kd = 0.0; // s
  std::array<double, 2> output_limits{-75.0, 75.0};
  double integrator_clamp = 75.0;
  double lock_engage_threshold = 0.5;
  double unlock_threshold = 0.2;
  ScanRampConfig scan_ramp;

  // Lock acquisition details.
  double lock_confirm_threshold = 0.8; // ENGAGE -> LOCKED once transmission reaches this
  double engage_settle_s = 1e-3;       // minimum time spent in ENGAGE
  double engage_timeout_s = 20e-3;     // ENGAGE -> scan again if never confirmed
  int unlock_debounce_samples = 100;
  double initial_length_offset = -92.125e-9; // m, cavity start position relative to resonance

  // Run bookkeeping.
  double record_rate_hz = 20e3;   // recorded traces are interval means at this rate
  double noise_rate_hz = 100e3;   // disturbance synthesis rate, interpolated to fs
  double residual_settle_s = 50e-3; // skipped after entering LOCKED before residual statistics
};

void validate(const ServoConfig& config);

enum class LockState { Scan, Engage, Locked, Relock };
std::string to_string(LockState state);

// Discrete PID acting on the error signal. The returned correction is
// -(kp e + ki sum(e) T + kd (e - e_prev) / T); the integral includes the
// current sample and is clamped to +-integrator_clamp.
class Pid {
public:
  Pid(double kp, double ki, double kd, double dt, double integrator_clamp);
  double update(double error);
  void reset();
  double integral() const { return integral_; }

private:
  double kp_, ki_, kd_, dt_, clamp_;
  double integral_ = 0.0;
  double previous_ = 0.0;
  bool first_ = true;
};

// Small-signal model of the locked loop. All responses are for the discrete
// system the simulator runs, evaluated at z = exp(i 2 pi f / fs).
class LoopModel {
public:
  LoopModel(const CavityConfig& cavity, const PdhConfig& pdh, const PlantConfig& plant, const ServoConfig& servo);

  double discriminator_slope() const { return slope_v_per_m_; } // V/m
  std::complex<double> controller(double f) const;              // V/V, sign excluded
  std::complex<double> actuator(double f) const;                // m/V incl. one-sample latency
  std::complex<double> loop_gain(double f) const;
  std::complex<double> sensitivity(double f) const; // residual / disturbance
  // Error volts per volt injected at the piezo drive summing node.
  std::complex<double> injection_response(double f) const;

private:
  Plant plant_;
  ServoConfig servo_;
  double slope_v_per_m_;
};

struct SimSample {
  double t = 0.0;
  double length_offset = 0.0; // m, wrapped to the nearest resonance
  double disturbance = 0.0;   // m
  double error = 0.0;         // V
  double control = 0.0;       // V, after clamping
  double transmission = 0.0;  // fraction of on-resonance transmission
  LockState state = LockState::Scan;
};

// Sample-by-sample closed-loop engine. Order within one sample: the cavity
// length is formed from the previous actuator output plus the disturbance,
// the detector produces error and transmission, the state machine and PID
// compute the drive, and the plant is advanced with that drive.
class LoopSimulator {
public:
  // `disturbance` is any-rate displacement noise, linearly interpolated and
  // repeated periodically; an empty trace means no disturbance.
  LoopSimulator(const CavityConfig& cavity, const PdhConfig& pdh, const PlantConfig& plant,
                const ServoConfig& servo, Trace disturbance, std::uint64_t seed);

  SimSample step(double injection_volts = 0.0);

  LockState state() const { return state_; }
  double time() const { return static_cast<double>(n_) * dt_; }
  std::uint64_t samples() const { return n_; }
  std::uint64_t locked_samples() const { return locked_samples_; }
  std::uint64_t saturation_events() const { return saturation_events_; }
  int relock_count() const { return relocks_; }
  std::optional<double> time_to_lock() const { return time_to_lock_; }
  double peak_transmission() const { return peak_transmission_; }
  const PdhDiscriminator& discriminator() const { return disc_; }
  const ServoConfig& servo() const { return servo_; }
  double dt() const { return dt_; }

private:
  double disturbance_at(double t) const;
  double scan_voltage() const;
  void resume_scan(double volts);

  PdhDiscriminator disc_;
  Plant plant_;
  ServoConfig servo_;
  Pid pid_;
  Trace disturbance_;
  Rng detector_rng_;
  double dt_;
  double hz_per_m_;
  double half_wavelength_;
  double peak_transmission_;

  std::uint64_t n_ = 0;
  double actuator_ = 0.0; // m, plant output from the previous sample
  LockState state_ = LockState::Scan;
  double scan_phase_ = 0.0; // cycles
  double bias_ = 0.0;
  bool armed_ = true;
  double engage_start_ = 0.0;
  int below_count_ = 0;
  bool was_clamped_ = false;

  std::uint64_t locked_samples_ = 0;
  std::uint64_t saturation_events_ = 0;
  int relocks_ = 0;
  std::optional<double> time_to_lock_;
};

struct LockReport {
  bool lock_acquired = false;
  double time_to_lock = 0.0; // s, 0 when never locked
  double locked_fraction = 0.0;
  Trace residual_error;        // V, longest locked stretch after settling
  Trace residual_displacement; // m, same samples
  double rms_displacement = 0.0;
  std::uint64_t saturation_events = 0;
  int relock_count = 0;
};

struct ClosedLoopRun {
  LockReport report;
  // Means over each 1 / record_rate_hz interval over the whole run.
  Trace length_offset;
  Trace disturbance;
  Trace error;
  Trace control;
  Trace transmission;
  Trace lock_state; // 0 scan, 1 engage, 2 locked, 3 relock
};

// The disturbance is `noise` without its floor (the floor is the
// interferometer's detection limit, not cavity motion), synthesized at
// servo.noise_rate_hz with seed derive_seed(seed, 1). Detector noise uses
// derive_seed(seed, 2).
ClosedLoopRun run_closed_loop(const CavityConfig& cavity, const PdhConfig& pdh, const NoiseSpec& noise,
                              const PlantConfig& plant, const ServoConfig& servo, double duration_s,
                              std::uint64_t seed);

Trace closed_loop_disturbance(const NoiseSpec& noise, const ServoConfig& servo, double duration_s,
                              std::uint64_t seed);

struct BodePoint {
  double f_hz = 0.0; // frequency actually used (integer periods in the window)
  double gain_db = 0.0;
  double phase_deg = 0.0;
  std::complex<double> response;
  bool valid = true;
  bool retried = false;
};

struct BodeOptions {
  double settle_s = 5e-3;
  double measure_s = 20e-3;
  // The error must stay within this fraction of the discriminator peak.
  double linear_fraction = 0.5;
};

// Injects a sinusoid into the piezo drive of a LOCKED simulator and
// demodulates error and injection with a single-bin DFT over whole periods.
// A point where lock is lost or the error leaves the linear range is retried
// once at half amplitude from the same starting state, then flagged invalid.
std::vector<BodePoint> bode_measure(LoopSimulator& sim, const std::vector<double>& f_points,
                                    double injection_amplitude, const BodeOptions& options = {});

// Steps the simulator until it has been LOCKED for `settle_s`, or throws
// AnalysisError after `timeout_s`.
void run_until_locked(LoopSimulator& sim, double settle_s, double timeout_s);

std::vector<double> log_spaced(double f_lo, double f_hi, int count);

ServoConfig servo_preset(const std::string& name);
std::vector<std::string> servo_preset_names();

} // namespace cavlock
