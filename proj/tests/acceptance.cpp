#include "cavlock/analysis/calibration.hpp"
#include "cavlock/analysis/fit.hpp"
#include "cavlock/analysis/loss_budget.hpp"
#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/cavity.hpp"
#include "cavlock/constants.hpp"
#include "cavlock/pdh.hpp"
#include "cavlock/rng.hpp"
#include "cavlock/scenario.hpp"
#include "cavlock/servo.hpp"
#include "cavlock/trace.hpp"
#include "cavlock/vibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace cavlock;
using namespace cavlock::analysis;

namespace {

// Collects the individual checks of one criterion; the first failure is kept
// for the summary line.
class Checks {
public:
  void within(const std::string& what, double value, double target, double rel_tol) {
    const bool ok = std::isfinite(value) && std::abs(value - target) <= rel_tol * std::abs(target);
    note(ok, what, value, "target " + num(target) + " +-" + num(100.0 * rel_tol) + "%");
  }
  void between(const std::string& what, double value, double lo, double hi) {
    note(std::isfinite(value) && value >= lo && value <= hi, what, value, "range [" + num(lo) + ", " + num(hi) + "]");
  }
  void at_least(const std::string& what, double value, double lo) {
    note(std::isfinite(value) && value >= lo, what, value, ">= " + num(lo));
  }
  void below(const std::string& what, double value, double hi) {
    note(std::isfinite(value) && value < hi, what, value, "< " + num(hi));
  }
  void truth(const std::string& what, bool ok, const std::string& detail = "") {
    ++count_;
    if (!ok && failure_.empty()) failure_ = what + (detail.empty() ? "" : " (" + detail + ")");
  }

  bool ok() const { return failure_.empty(); }
  int count() const { return count_; }
  const std::string& failure() const { return failure_; }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }

private:
  void note(bool ok, const std::string& what, double value, const std::string& limit) {
    truth(what, ok, num(value) + ", " + limit);
  }
  std::string failure_;
  int count_ = 0;
};

double db(double ratio) { return 10.0 * std::log10(ratio); }

// Mean PSD of `table` over bins in [lo, hi), optionally divided by a per-bin weight.
double band_mean_psd(const AsdTable& table, double lo, double hi,
                     const std::function<double(double)>& weight = nullptr) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < table.f.size(); ++i) {
    if (table.f[i] < lo || table.f[i] >= hi) continue;
    const double p = table.asd[i] * table.asd[i];
    sum += weight ? p / weight(table.f[i]) : p;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

// 1. Derived parameters of both presets.
void criterion_derived(Checks& c) {
  const DerivedCavity bare = derive(cavity_preset("bare"));
  c.within("bare FSR", bare.fsr, 4.6e9, 0.01);
  c.within("bare finesse", bare.finesse, 310.0, 0.05);
  c.within("bare linewidth", bare.linewidth_fwhm, 15e6, 0.10);
  c.within("bare Q", bare.quality_factor, 2.7e7, 0.10);
  c.within("bare w0", bare.beam_waist_w0, 140e-6, 0.02);
  c.within("bare mode volume", bare.mode_volume, 0.50e-9, 0.05);

  const DerivedCavity diamond = derive(cavity_preset("diamond"));
  c.within("diamond FSR", diamond.fsr, 5.5e9, 0.01);
  c.between("diamond finesse", diamond.finesse, 90.0 * 0.95, 93.0 * 1.05);
  c.within("diamond linewidth", diamond.linewidth_fwhm, 60e6, 0.10);
  c.within("diamond Q", diamond.quality_factor, 6.5e6, 0.10);
  c.within("diamond w0", diamond.beam_waist_w0, 135e-6, 0.02);
  c.within("diamond mode volume", diamond.mode_volume, 0.39e-9, 0.05);
}

// 2. Lockable finesse bound.
void criterion_bound(Checks& c) {
  const double lambda = cavity_preset("bare").wavelength_lambda;
  c.within("bound at 30 pm", max_lockable_finesse(30e-12, lambda), 1.2e4, 0.03);
  c.within("bound at 63 pm", max_lockable_finesse(63e-12, lambda), 5.8e3, 0.03);
}

// 3. Loss budget, forward and inverse.
void criterion_loss_budget(Checks& c) {
  CavityConfig cav = cavity_preset("diamond");
  cav.surface_roughness_Rq = 1.5e-9;
  cav.absorption_alpha = 0.15;
  cav.diamond_thickness_d = 0.5e-3;
  cav.coating_aperture_D = 3e-3;
  const LossBudget forward = loss_budget(cav);
  c.within("scattering round trip", forward.scattering_roundtrip, 0.0075, 0.10);
  c.between("absorption", forward.absorption, 0.032, 0.042);
  c.below("clipping", forward.clipping, 1e-50);
  c.within("implied finesse", forward.implied_finesse, 90.0, 0.15);

  const LossBudget inverse = loss_budget(cav, 90.0);
  c.truth("inverse alpha present", inverse.implied_alpha.has_value());
  c.between("inverse alpha (1/cm)", inverse.implied_alpha.value_or(NAN), 0.15, 0.19);
}

// 4. Synthesized noise against its model.
void criterion_noise(Checks& c) {
  const NoiseSpec spec = noise_preset("mk15-pt-on");
  const double fs = 20e3;
  const Trace x = synthesize(spec, 100.0, fs);
  c.within("0-100 Hz rms", analysis::band_rms(x, 0.0, 100.0), 5.6e-9, 0.10);

  const AsdTable table = compute_asd(x);
  double worst = 0.0;
  std::string worst_band;
  for (double lo = 0.5; lo * 2.0 <= fs / 2.0; lo *= 2.0) {
    const double hi = lo * 2.0;
    const double measured = band_mean_psd(table, lo, hi);
    double model = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < table.f.size(); ++i) {
      if (table.f[i] < lo || table.f[i] >= hi) continue;
      const double a = asd_model(spec, table.f[i]);
      model += a * a;
      ++n;
    }
    const double dev = db(measured / (model / n));
    if (std::abs(dev) > std::abs(worst)) {
      worst = dev;
      worst_band = Checks::num(lo) + "-" + Checks::num(hi) + " Hz";
    }
  }
  c.between("worst octave deviation (dB) in " + worst_band, worst, -3.0, 3.0);
  c.within("ASD floor 5-9.5 kHz", band_average_asd(table, 5e3, 9.5e3), 7e-12, 0.20);
}

struct LoopResults {
  ScenarioResult bare;
  ScenarioResult diamond;
};

// 5. Closed-loop behaviour of the tuned presets.
void criterion_closed_loop(Checks& c, const LoopResults& r) {
  const LockReport& rep = r.bare.run.report;
  c.truth("bare lock acquired", rep.lock_acquired);
  c.at_least("bare locked fraction over 60 s", rep.locked_fraction, 0.99);
  c.between("bare residual rms (pm)", rep.rms_displacement * 1e12, 20.0, 100.0);

  const SimConfig cfg = scenario_config(scenario("bare-mk15-pt-on"));
  const LoopModel model(cfg.cavity, cfg.pdh, cfg.plant, cfg.servo);
  const double measured_suppression =
      db(band_mean_psd(r.bare.disturbance_asd, 8.0, 12.0) / band_mean_psd(r.bare.residual_asd, 8.0, 12.0));
  c.at_least("measured suppression at 10 Hz (dB)", measured_suppression, 40.0);
  c.at_least("model suppression at 10 Hz (dB)", -r.bare.sensitivity_10hz_db, 40.0);

  const auto s2 = [&](double f) { return std::norm(model.sensitivity(f)); };
  double worst = 0.0;
  std::string worst_band;
  for (double lo = 1.0; lo < 1e3; lo *= 2.0) {
    const double hi = std::min(lo * 2.0, 1e3);
    const double dev =
        db(band_mean_psd(r.bare.residual_asd, lo, hi, s2) / band_mean_psd(r.bare.disturbance_asd, lo, hi));
    if (std::abs(dev) > std::abs(worst)) {
      worst = dev;
      worst_band = Checks::num(lo) + "-" + Checks::num(hi) + " Hz";
    }
  }
  c.between("residual/|S| vs input, worst octave (dB) in " + worst_band, worst, -3.0, 3.0);

  const PlantConfig diamond_plant = scenario_config(scenario("diamond-mk15-pt-on")).plant;
  const bool has_6k = std::any_of(diamond_plant.modes.begin(), diamond_plant.modes.end(),
                                  [](const PlantMode& m) { return std::abs(m.f0 - 6e3) < 1.0 && m.modal_weight > 0; });
  c.truth("diamond plant has the 6 kHz mode", has_6k);
  c.truth("diamond lock acquired", r.diamond.run.report.lock_acquired);
  c.truth("diamond residual exceeds bare",
          r.diamond.run.report.rms_displacement > rep.rms_displacement,
          Checks::num(r.diamond.run.report.rms_displacement) + " vs " + Checks::num(rep.rms_displacement));
}

ScanRamp fsr_ramp(const CavityConfig& cav) {
  const DerivedCavity d = derive(cav);
  ScanRamp ramp;
  ramp.start_detuning_hz = -0.25 * d.fsr;
  ramp.stop_detuning_hz = 1.25 * d.fsr;
  ramp.duration_s = 10e-3;
  ramp.sample_rate_hz = std::ceil(20.0 * 1.5 * d.fsr / d.linewidth_fwhm / ramp.duration_s);
  return ramp;
}

// 6. Analysis round trips.
void criterion_round_trips(Checks& c, const LoopResults& r) {
  for (const std::string name : {"bare", "diamond"}) {
    const CavityConfig cav = cavity_preset(name);
    const DerivedCavity d = derive(cav);
    const PdhConfig pdh;
    const ScanSpectrum scan = scan_spectrum(cav, pdh, fsr_ramp(cav), 11);
    const ScanFit fit = fit_scan(scan.transmission, pdh.modulation_frequency_Omega);
    c.within(name + " fitted finesse", fit.finesse, d.finesse, 0.02);
    c.within(name + " fitted FSR", fit.fsr, d.fsr, 0.01);
  }

  const ScenarioResult& bare = r.bare;
  c.within("err2len rms vs true residual rms", bare.error_displacement.rms, bare.run.report.rms_displacement, 0.10);

  const double lambda = cavity_preset("bare").wavelength_lambda;
  Rng rng(21);
  std::vector<double> fringe(4000);
  for (std::size_t i = 0; i < fringe.size(); ++i) {
    const double t = static_cast<double>(i) / 2000.0;
    fringe[i] = 0.2 + 0.75 * std::sin(kTwoPi * 13.0 * t + 0.4) + 1e-3 * rng.normal();
  }
  const FringeCalibration cal = interferometer_calibrate(Trace(2000.0, "V", fringe));
  NoiseSpec noise = without_floor(noise_preset("mk15-pt-on"));
  noise.seed = 5;
  const Trace x = synthesize(noise, 20.0, 2000.0);
  Trace y = x;
  for (double& v : y.values) v = 0.2 + 0.75 * std::sin(4.0 * kPi * v / lambda);
  const DisplacementResult back = interferometer_convert(y, cal, lambda);
  c.within("interferometer recovered rms", back.rms, rms(x), 0.02);

  Rng white_rng(8);
  std::vector<double> white(1 << 18);
  for (double& v : white) v = 2e-9 * white_rng.normal();
  c.within("Parseval ratio, white noise", compute_asd(Trace(20e3, "m", white)).parseval_ratio, 1.0, 0.01);
  std::vector<double> tones(1 << 18);
  for (std::size_t i = 0; i < tones.size(); ++i) {
    const double t = static_cast<double>(i) / 20e3;
    tones[i] = std::sin(kTwoPi * 37.3 * t) + 0.5 * std::sin(kTwoPi * 1234.5 * t + 1.0) +
               0.25 * std::sin(kTwoPi * 6170.0 * t + 2.0);
  }
  c.within("Parseval ratio, three tones", compute_asd(Trace(20e3, "V", tones)).parseval_ratio, 1.0, 0.01);
  c.within("Parseval ratio, bare residual", bare.residual_asd.parseval_ratio, 1.0, 0.01);
}

// 7. Bode measurement on the locked bare loop.
void criterion_bode(Checks& c) {
  const SimConfig cfg = scenario_config(scenario("bare-mk15-pt-on"));
  const LoopModel model(cfg.cavity, cfg.pdh, cfg.plant, cfg.servo);
  LoopSimulator sim(cfg.cavity, cfg.pdh, cfg.plant, cfg.servo, Trace{}, 0);
  run_until_locked(sim, 50e-3, 1.0);

  const auto near_mode = [&](double f) {
    return std::any_of(cfg.plant.modes.begin(), cfg.plant.modes.end(),
                       [&](const PlantMode& m) { return std::abs(f - m.f0) < 5.0 * m.f0 / m.quality_q; });
  };

  const std::vector<BodePoint> pts = bode_measure(sim, log_spaced(100.0, 40e3, 20), 0.01);
  double worst_gain = 0.0, worst_phase = 0.0;
  int compared = 0;
  for (const BodePoint& p : pts) {
    c.truth("Bode point valid at " + Checks::num(p.f_hz) + " Hz", p.valid);
    if (!p.valid || near_mode(p.f_hz)) continue;
    const std::complex<double> h = model.injection_response(p.f_hz);
    const double dg = 20.0 * std::log10(std::abs(p.response) / std::abs(h));
    const double dp = std::arg(p.response / h) * 180.0 / kPi;
    worst_gain = std::max(worst_gain, std::abs(dg));
    worst_phase = std::max(worst_phase, std::abs(dp));
    ++compared;
  }
  c.at_least("points compared away from resonances", compared, 14);
  c.below("worst gain deviation (dB)", worst_gain, 1.0);
  c.below("worst phase deviation (deg)", worst_phase, 5.0);

  // Each mode shows up as a bump relative to the same loop with that mode
  // folded into the quasi-static part of the actuator.
  for (const double f0 : {6e3, 18e3, 30e3}) {
    const auto mode = std::find_if(cfg.plant.modes.begin(), cfg.plant.modes.end(),
                                   [&](const PlantMode& m) { return std::abs(m.f0 - f0) < 1.0; });
    c.truth("bare plant has a mode at " + Checks::num(f0) + " Hz", mode != cfg.plant.modes.end());
    if (mode == cfg.plant.modes.end()) continue;
    PlantConfig smooth = cfg.plant;
    smooth.modes.erase(smooth.modes.begin() + (mode - cfg.plant.modes.begin()));
    const LoopModel reference(cfg.cavity, cfg.pdh, smooth, cfg.servo);

    // Quarter-linewidth steps over +-4 linewidths of the mode.
    std::vector<double> local;
    const double step = mode->f0 / (4.0 * mode->quality_q);
    for (int k = -16; k <= 16; ++k) local.push_back(mode->f0 + step * k);
    const std::vector<BodePoint> sweep = bode_measure(sim, local, 0.01);
    double gain_peak = 0.0, phase_peak = 0.0, peak_f = 0.0;
    for (const BodePoint& p : sweep) {
      if (!p.valid) continue;
      const std::complex<double> ratio = p.response / reference.injection_response(p.f_hz);
      const double dg = 20.0 * std::log10(std::abs(ratio));
      const double dp = std::arg(ratio) * 180.0 / kPi;
      if (std::abs(dg) > std::abs(gain_peak)) {
        gain_peak = dg;
        peak_f = p.f_hz;
      }
      phase_peak = std::max(phase_peak, std::abs(dp));
    }
    // The mode counts as visible when it moves the response further from the
    // mode-free loop than the 1 dB / 5 degree comparison tolerance.
    c.truth("feature near " + Checks::num(f0) + " Hz exceeds 1 dB or 5 deg",
            std::abs(gain_peak) >= 1.0 || std::abs(phase_peak) >= 5.0,
            Checks::num(gain_peak) + " dB, " + Checks::num(phase_peak) + " deg");
    c.below("feature offset from " + Checks::num(f0) + " Hz (fraction)", std::abs(peak_f / f0 - 1.0), 0.05);
  }
}

bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b, std::string& why) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  int count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++count_b;
  if (static_cast<int>(files.size()) != count_b || files.empty()) {
    why = "file count " + std::to_string(files.size()) + " vs " + std::to_string(count_b);
    return false;
  }
  for (const fs::path& rel : files) {
    if (!fs::exists(b / rel) || read_file(a / rel) != read_file(b / rel)) {
      why = rel.string() + " differs";
      return false;
    }
  }
  return true;
}

// 8. Byte-identical scenario outputs across repeated CLI invocations.
void criterion_determinism(Checks& c) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(CAVLOCK_WORK_DIR) / "acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  for (const std::string& name : scenario_names()) {
    for (const char* run : {"a", "b"}) {
      const fs::path dir = root / name / run;
      fs::create_directories(dir);
      const std::string cmd = std::string("\"") + CAVLOCK_CLI + "\" scenario --name " + name +
                              " --duration 2 --seed 7 --out \"" + (dir / "out").string() + "\" > \"" +
                              (dir / "stdout.json").string() + "\"";
      const int status = std::system(cmd.c_str());
      c.truth(name + " run " + run + " exit status", status == 0, "status " + std::to_string(status));
    }
    std::string why;
    c.truth(name + " outputs byte-identical", same_tree(root / name / "a", root / name / "b", why), why);
  }
  fs::remove_all(root);
}

} // namespace

int main() {
  int failed = 0;
  LoopResults loops;
  bool loops_ready = false;
  const auto need_loops = [&]() {
    if (loops_ready) return;
    loops.bare = run_scenario(scenario_config(scenario("bare-mk15-pt-on")), 60.0, 1);
    loops.diamond = run_scenario(scenario_config(scenario("diamond-mk15-pt-on")), 10.0, 1);
    loops_ready = true;
  };

  const std::vector<std::pair<std::string, std::function<void(Checks&)>>> criteria = {
      {"derived cavity parameters", criterion_derived},
      {"lockable finesse bound", criterion_bound},
      {"loss budget", criterion_loss_budget},
      {"noise fidelity", criterion_noise},
      {"closed loop", [&](Checks& c) { need_loops(); criterion_closed_loop(c, loops); }},
      {"analysis round trips", [&](Checks& c) { need_loops(); criterion_round_trips(c, loops); }},
      {"bode", criterion_bode},
      {"determinism", criterion_determinism},
  };

  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(checks);
    } catch (const std::exception& e) {
      checks.truth("exception", false, e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line << (checks.ok() ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
         << checks.count() << " checks, " << Checks::num(seconds) << " s";
    if (!checks.ok()) {
      line << ", first failure: " << checks.failure();
      ++failed;
    }
    std::cout << line.str() << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
