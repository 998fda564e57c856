#include "cavlock/analysis/calibration.hpp"
#include "cavlock/analysis/fit.hpp"
#include "cavlock/analysis/loss_budget.hpp"
#include "cavlock/analysis/spectrum.hpp"
#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/io.hpp"
#include "cavlock/scenario.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cavlock;

namespace {

constexpr const char* kTool = "cavlock";

struct Common {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

// Config source shared by the simulation subcommands.
struct ConfigSource {
  std::string path;
  std::string preset;

  SimConfig load() const {
    require(path.empty() || preset.empty(), "use either --config or --preset, not both");
    if (!path.empty()) return load_config(path);
    return scenario_config(scenario((preset.empty() ? std::string("bare") : preset) + "-mk15-pt-on"));
  }
};

void add_config_options(CLI::App* cmd, ConfigSource& src) {
  cmd->add_option("--config", src.path, "JSON config file");
  cmd->add_option("--preset", src.preset, "built-in configuration: bare or diamond")
      ->check(CLI::IsMember({"bare", "diamond"}));
}

void add_common(CLI::App* cmd, Common& common, const std::string& out_help) {
  cmd->add_option("--seed", common.seed, "random seed (default 0)")
      ->each([&common](const std::string&) { common.seed_given = true; });
  cmd->add_option("--out", common.out, out_help);
}

json provenance(const std::string& command, const std::string& hash, std::uint64_t seed) {
  return json{{"created_by", std::string(kTool) + " " + command}, {"config_hash", hash}, {"seed", seed}};
}

void stamp(Trace& t, const std::string& command, const std::string& hash, std::uint64_t seed) {
  t.metadata["created_by"] = std::string(kTool) + " " + command;
  t.metadata["config_hash"] = hash;
  t.metadata["seed"] = std::to_string(seed);
}

// Report goes to --out when given, otherwise to stdout.
void emit(const json& report, const std::string& out) {
  const std::string text = dump_json(report);
  if (out.empty())
    std::cout << text;
  else
    write_file_atomic(out, text);
}

fs::path out_dir(const std::string& out, const std::string& command) {
  require(!out.empty(), command + ": --out directory is required");
  fs::create_directories(out);
  return fs::path(out);
}

// Provenance of an analysis input: the producing config hash and seed when the
// file carries them, otherwise a hash of the file itself.
struct InputProvenance {
  std::string hash;
  std::uint64_t seed = 0;
};

InputProvenance input_provenance(const std::string& path, const std::map<std::string, std::string>& metadata,
                                 const Common& common) {
  InputProvenance p;
  auto h = metadata.find("config_hash");
  p.hash = h != metadata.end() ? h->second : fnv1a_hex(read_file(path));
  auto s = metadata.find("seed");
  if (common.seed_given || s == metadata.end()) {
    p.seed = common.seed;
  } else {
    try {
      p.seed = std::stoull(s->second);
    } catch (const std::logic_error&) {
      throw ValidationError(path + ": malformed seed '" + s->second + "'");
    }
  }
  return p;
}

double metadata_number(const std::string& path, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::logic_error&) {
    throw ValidationError(path + ": malformed header value '" + value + "'");
  }
}

json max_finesse_table(const std::vector<double>& delta_l, double lambda) {
  json rows = json::array();
  for (double d : delta_l)
    rows.push_back(json{{"delta_L_rms", d}, {"max_finesse", max_lockable_finesse(d, lambda)}});
  return rows;
}

AbsorptionModel absorption_model(const std::string& name) {
  if (name == "decadic") return AbsorptionModel::Decadic;
  if (name == "natural") return AbsorptionModel::Natural;
  throw ValidationError("unknown absorption model '" + name + "'");
}

json model_bode_point(const LoopModel& model, double f) {
  const auto h = model.injection_response(f);
  return json{{"gain_db", 20.0 * std::log10(std::abs(h))}, {"phase_deg", std::arg(h) * 180.0 / kPi}};
}

void write_traces(const fs::path& dir, const std::vector<std::pair<std::string, Trace*>>& traces,
                  const std::string& command, const std::string& hash, std::uint64_t seed) {
  for (const auto& [name, trace] : traces) {
    if (trace->empty()) continue;
    stamp(*trace, command, hash, seed);
    write_trace(dir / (name + ".csv"), *trace);
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fabry-Perot cavity PDH lock simulator and analysis toolkit", kTool};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // derive
  Common derive_c;
  ConfigSource derive_src;
  std::string derive_absorption = "decadic";
  std::vector<double> derive_delta_l{30e-12, 63e-12};
  auto* derive_cmd = app.add_subcommand("derive", "derived cavity parameters");
  add_config_options(derive_cmd, derive_src);
  add_common(derive_cmd, derive_c, "report JSON path (default stdout)");
  derive_cmd->add_option("--absorption", derive_absorption, "absorption model: decadic or natural");
  derive_cmd->add_option("--delta-l", derive_delta_l, "rms length fluctuations (m) for the lockable-finesse bound");

  // scan
  Common scan_c;
  ConfigSource scan_src;
  std::optional<double> scan_start, scan_stop, scan_rate;
  double scan_duration = 10e-3;
  auto* scan_cmd = app.add_subcommand("scan", "synthetic transmission and PDH error scan");
  add_config_options(scan_cmd, scan_src);
  add_common(scan_cmd, scan_c, "output directory");
  scan_cmd->add_option("--start-hz", scan_start, "start detuning (default -0.25 FSR)");
  scan_cmd->add_option("--stop-hz", scan_stop, "stop detuning (default 1.25 FSR)");
  scan_cmd->add_option("--duration", scan_duration, "ramp duration (s)");
  scan_cmd->add_option("--rate", scan_rate, "sample rate (Hz, default ~20 samples per linewidth)");

  // lock
  Common lock_c;
  ConfigSource lock_src;
  double lock_duration = 1.0;
  auto* lock_cmd = app.add_subcommand("lock", "closed-loop lock simulation");
  add_config_options(lock_cmd, lock_src);
  add_common(lock_cmd, lock_c, "output directory");
  lock_cmd->add_option("--duration", lock_duration, "simulated time (s)");

  // fit-scan
  Common fit_c;
  std::string fit_trace;
  double fit_omega = 150e6;
  std::optional<double> fit_fsr_hint, fit_sweep_rate;
  double fit_carrier_fraction = 0.3;
  auto* fit_cmd = app.add_subcommand("fit-scan", "Lorentzian triplet fit of a transmission scan");
  add_common(fit_cmd, fit_c, "fit JSON path (default stdout)");
  fit_cmd->add_option("--trace", fit_trace, "transmission trace CSV")->required();
  fit_cmd->add_option("--modulation-frequency", fit_omega, "sideband offset (Hz)");
  fit_cmd->add_option("--fsr-hint", fit_fsr_hint, "FSR (Hz) for single-carrier scans");
  fit_cmd->add_option("--sweep-rate", fit_sweep_rate, "nominal sweep rate (Hz/s) to compare against");
  fit_cmd->add_option("--carrier-fraction", fit_carrier_fraction, "carrier height threshold, fraction of tallest peak");

  // calibrate-error
  Common cal_c;
  std::string cal_error, cal_fit;
  auto* cal_cmd = app.add_subcommand("calibrate-error", "tanh fit of the PDH error slope");
  add_common(cal_cmd, cal_c, "calibration JSON path (default stdout)");
  cal_cmd->add_option("--error", cal_error, "error trace CSV from the same scan")->required();
  cal_cmd->add_option("--scan-fit", cal_fit, "fit-scan JSON")->required();

  // err2len
  Common e2l_c;
  std::string e2l_error, e2l_cal;
  double e2l_wavelength = 737e-9;
  std::optional<double> e2l_finesse;
  auto* e2l_cmd = app.add_subcommand("err2len", "convert a locked error trace to displacement");
  add_common(e2l_cmd, e2l_c, "displacement trace CSV path");
  e2l_cmd->add_option("--error", e2l_error, "error trace CSV")->required();
  e2l_cmd->add_option("--calibration", e2l_cal, "calibrate-error JSON")->required();
  e2l_cmd->add_option("--wavelength", e2l_wavelength, "laser wavelength (m)");
  e2l_cmd->add_option("--finesse", e2l_finesse, "finesse (default: from the calibration)");

  // ifm-calib
  Common ifm_c;
  std::string ifm_fringe, ifm_signal, ifm_signal_out;
  double ifm_wavelength = 737e-9;
  auto* ifm_cmd = app.add_subcommand("ifm-calib", "sine fit of an interferometer fringe, optional conversion");
  add_common(ifm_cmd, ifm_c, "calibration JSON path (default stdout)");
  ifm_cmd->add_option("--fringe", ifm_fringe, "fringe scan trace CSV")->required();
  ifm_cmd->add_option("--signal", ifm_signal, "trace to convert to displacement");
  ifm_cmd->add_option("--signal-out", ifm_signal_out, "displacement trace CSV path");
  ifm_cmd->add_option("--wavelength", ifm_wavelength, "laser wavelength (m)");

  // asd
  Common asd_c;
  std::string asd_trace;
  analysis::WelchOptions welch;
  auto* asd_cmd = app.add_subcommand("asd", "Welch amplitude spectral density");
  add_common(asd_cmd, asd_c, "ASD CSV path");
  asd_cmd->add_option("--trace", asd_trace, "input trace CSV")->required();
  asd_cmd->add_option("--window", welch.window, "hann, hamming, blackman or rectangular");
  asd_cmd->add_option("--segment-length", welch.segment_length, "samples per segment (0: from --segments)");
  asd_cmd->add_option("--overlap", welch.overlap, "segment overlap fraction");
  asd_cmd->add_option("--segments", welch.segments, "number of segments when --segment-length is 0");

  // rms
  Common rms_c;
  std::string rms_trace, rms_asd;
  std::optional<double> rms_lo, rms_hi;
  auto* rms_cmd = app.add_subcommand("rms", "rms of a trace or ASD, optionally in a band");
  add_common(rms_cmd, rms_c, "report JSON path (default stdout)");
  rms_cmd->add_option("--trace", rms_trace, "input trace CSV");
  rms_cmd->add_option("--asd", rms_asd, "input ASD CSV");
  rms_cmd->add_option("--f-lo", rms_lo, "band start (Hz)");
  rms_cmd->add_option("--f-hi", rms_hi, "band end (Hz)");

  // bode
  Common bode_c;
  ConfigSource bode_src;
  double bode_lo = 100.0, bode_hi = 40e3, bode_amplitude = 0.01;
  int bode_points = 20;
  bool bode_noise = false;
  auto* bode_cmd = app.add_subcommand("bode", "in-loop transfer function by sine injection");
  add_config_options(bode_cmd, bode_src);
  add_common(bode_cmd, bode_c, "report path; a .csv path writes f_hz,gain_db,phase_deg (default JSON to stdout)");
  bode_cmd->add_option("--f-lo", bode_lo, "lowest frequency (Hz)");
  bode_cmd->add_option("--f-hi", bode_hi, "highest frequency (Hz)");
  bode_cmd->add_option("--points", bode_points, "log-spaced points");
  bode_cmd->add_option("--amplitude", bode_amplitude, "injection amplitude (V)");
  bode_cmd->add_flag("--with-noise", bode_noise, "keep the vibration disturbance during the measurement");

  // loss-budget
  Common loss_c;
  ConfigSource loss_src;
  std::optional<double> loss_finesse;
  std::string loss_absorption = "decadic";
  auto* loss_cmd = app.add_subcommand("loss-budget", "round-trip loss budget, forward or inverse");
  add_config_options(loss_cmd, loss_src);
  add_common(loss_cmd, loss_c, "report JSON path (default stdout)");
  loss_cmd->add_option("--measured-finesse", loss_finesse, "infer absorption from this finesse");
  loss_cmd->add_option("--absorption", loss_absorption, "absorption model: decadic or natural");

  // synth-noise
  Common syn_c;
  ConfigSource syn_src;
  std::string syn_noise;
  double syn_duration = 10.0, syn_rate = 10e3;
  auto* syn_cmd = app.add_subcommand("synth-noise", "synthesize displacement noise from an ASD model");
  add_config_options(syn_cmd, syn_src);
  add_common(syn_cmd, syn_c, "trace CSV path");
  syn_cmd->add_option("--noise", syn_noise, "noise preset name (overrides the config's noise section)");
  syn_cmd->add_option("--duration", syn_duration, "duration (s)");
  syn_cmd->add_option("--rate", syn_rate, "sample rate (Hz)");

  // scenario
  Common scen_c;
  std::string scen_name;
  double scen_duration = 10.0;
  bool scen_list = false;
  auto* scen_cmd = app.add_subcommand("scenario", "scan, calibrate, lock and analyse one measured condition");
  add_common(scen_cmd, scen_c, "output directory (default: report to stdout only)");
  scen_cmd->add_option("--name", scen_name, "scenario name, e.g. bare-mk15-pt-on");
  scen_cmd->add_option("--duration", scen_duration, "simulated lock time (s)");
  scen_cmd->add_flag("--list", scen_list, "list scenario names");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw ValidationError(e.what());
    }

    if (*derive_cmd) {
      const SimConfig cfg = derive_src.load();
      const std::string hash = config_hash(cfg);
      const DerivedCavity d = derive(cfg.cavity, absorption_model(derive_absorption));
      json report = provenance("derive", hash, derive_c.seed);
      report["cavity"] = to_json(cfg.cavity);
      report["absorption_model"] = derive_absorption;
      report["derived"] = to_json(d);
      report["max_lockable_finesse"] = max_finesse_table(derive_delta_l, cfg.cavity.wavelength_lambda);
      emit(report, derive_c.out);
    } else if (*scan_cmd) {
      const SimConfig cfg = scan_src.load();
      const std::string hash = config_hash(cfg);
      const fs::path dir = out_dir(scan_c.out, "scan");
      const DerivedCavity d = derive(cfg.cavity);
      ScanRamp ramp;
      ramp.start_detuning_hz = scan_start.value_or(-0.25 * d.fsr);
      ramp.stop_detuning_hz = scan_stop.value_or(1.25 * d.fsr);
      ramp.duration_s = scan_duration;
      ramp.sample_rate_hz = scan_rate.value_or(std::ceil(
          20.0 * std::abs(ramp.stop_detuning_hz - ramp.start_detuning_hz) / d.linewidth_fwhm / scan_duration));
      ScanSpectrum s = scan_spectrum(cfg.cavity, cfg.pdh, ramp, scan_c.seed);
      write_traces(dir, {{"transmission", &s.transmission}, {"error", &s.error}}, "scan", hash, scan_c.seed);
      json report = provenance("scan", hash, scan_c.seed);
      report["ramp"] = json{{"start_detuning_hz", ramp.start_detuning_hz},
                            {"stop_detuning_hz", ramp.stop_detuning_hz},
                            {"duration_s", ramp.duration_s},
                            {"sample_rate_hz", ramp.sample_rate_hz},
                            {"sweep_rate_hz_per_s", ramp.sweep_rate_hz_per_s()}};
      report["modulation_frequency"] = cfg.pdh.modulation_frequency_Omega;
      report["fsr"] = d.fsr;
      report["carriers_crossed"] = s.carriers_crossed;
      report["covers_triplet"] = s.covers_triplet;
      write_file_atomic(dir / "scan.json", dump_json(report));
      std::cout << dump_json(report);
    } else if (*lock_cmd) {
      const SimConfig cfg = lock_src.load();
      const std::string hash = config_hash(cfg);
      const fs::path dir = out_dir(lock_c.out, "lock");
      ClosedLoopRun run =
          run_closed_loop(cfg.cavity, cfg.pdh, cfg.noise, cfg.plant, cfg.servo, lock_duration, lock_c.seed);
      write_traces(dir,
                   {{"length_offset", &run.length_offset},
                    {"disturbance", &run.disturbance},
                    {"error", &run.error},
                    {"control", &run.control},
                    {"transmission", &run.transmission},
                    {"lock_state", &run.lock_state},
                    {"residual_error", &run.report.residual_error},
                    {"residual_displacement", &run.report.residual_displacement}},
                   "lock", hash, lock_c.seed);
      json report = provenance("lock", hash, lock_c.seed);
      report["duration_s"] = lock_duration;
      report["lock"] = to_json(run.report);
      write_file_atomic(dir / "report.json", dump_json(report));
      std::cout << dump_json(report);
    } else if (*fit_cmd) {
      const Trace t = read_trace(fit_trace);
      const InputProvenance p = input_provenance(fit_trace, t.metadata, fit_c);
      analysis::ScanFitOptions o;
      o.fsr_hint_hz = fit_fsr_hint;
      o.carrier_fraction = fit_carrier_fraction;
      o.nominal_sweep_rate_hz_per_s = fit_sweep_rate;
      if (!o.nominal_sweep_rate_hz_per_s) {
        auto it = t.metadata.find("sweep_rate_hz_per_s");
        if (it != t.metadata.end()) o.nominal_sweep_rate_hz_per_s = metadata_number(fit_trace, it->second);
      }
      const analysis::ScanFit fit = analysis::fit_scan(t, fit_omega, o);
      json report = provenance("fit-scan", p.hash, p.seed);
      report.update(to_json(fit));
      emit(report, fit_c.out);
    } else if (*cal_cmd) {
      const Trace e = read_trace(cal_error);
      const InputProvenance p = input_provenance(cal_error, e.metadata, cal_c);
      const analysis::ScanFit fit = scan_fit_from_json(load_json(cal_fit));
      const analysis::ErrorCalibration cal = analysis::calibrate_error_slope(e, fit);
      json report = provenance("calibrate-error", p.hash, p.seed);
      report.update(to_json(cal));
      emit(report, cal_c.out);
    } else if (*e2l_cmd) {
      require(!e2l_c.out.empty(), "err2len: --out trace path is required");
      const Trace e = read_trace(e2l_error);
      const InputProvenance p = input_provenance(e2l_error, e.metadata, e2l_c);
      const analysis::ErrorCalibration cal = error_calibration_from_json(load_json(e2l_cal));
      const double finesse = e2l_finesse.value_or(cal.finesse);
      analysis::DisplacementResult r = analysis::error_to_displacement(e, cal, finesse, e2l_wavelength);
      stamp(r.displacement, "err2len", p.hash, p.seed);
      r.displacement.metadata["clipped_samples"] = std::to_string(r.clipped);
      write_trace(e2l_c.out, r.displacement);
      json report = provenance("err2len", p.hash, p.seed);
      report["samples"] = r.displacement.size();
      report["clipped_samples"] = r.clipped;
      report["length_scale"] = r.length_scale;
      report["linewidth_in_length"] = analysis::linewidth_in_length(finesse, e2l_wavelength);
      report["rms_displacement"] = r.rms;
      std::cout << dump_json(report);
    } else if (*ifm_cmd) {
      const Trace fringe = read_trace(ifm_fringe);
      const InputProvenance p = input_provenance(ifm_fringe, fringe.metadata, ifm_c);
      const analysis::FringeCalibration cal = analysis::interferometer_calibrate(fringe);
      json report = provenance("ifm-calib", p.hash, p.seed);
      report.update(to_json(cal));
      if (!ifm_signal.empty()) {
        require(!ifm_signal_out.empty(), "ifm-calib: --signal needs --signal-out");
        const Trace signal = read_trace(ifm_signal);
        analysis::DisplacementResult r = analysis::interferometer_convert(signal, cal, ifm_wavelength);
        stamp(r.displacement, "ifm-calib", p.hash, p.seed);
        r.displacement.metadata["clipped_samples"] = std::to_string(r.clipped);
        write_trace(ifm_signal_out, r.displacement);
        report["conversion"] = json{{"samples", r.displacement.size()},
                                    {"clipped_samples", r.clipped},
                                    {"rms_displacement", r.rms}};
      }
      emit(report, ifm_c.out);
    } else if (*asd_cmd) {
      require(!asd_c.out.empty(), "asd: --out CSV path is required");
      const Trace t = read_trace(asd_trace);
      const InputProvenance p = input_provenance(asd_trace, t.metadata, asd_c);
      analysis::AsdTable table = analysis::compute_asd(t, welch);
      table.metadata.clear();
      table.metadata["created_by"] = std::string(kTool) + " asd";
      table.metadata["config_hash"] = p.hash;
      table.metadata["seed"] = std::to_string(p.seed);
      analysis::write_asd_csv(asd_c.out, table);
      json report = provenance("asd", p.hash, p.seed);
      report["bins"] = table.f.size();
      report["resolution_hz"] = table.resolution_hz;
      report["window"] = table.window;
      report["segment_length"] = table.segment_length;
      report["overlap"] = table.overlap;
      report["segments_used"] = table.segments_used;
      report["parseval_ratio"] = table.parseval_ratio;
      std::cout << dump_json(report);
    } else if (*rms_cmd) {
      require(rms_trace.empty() != rms_asd.empty(), "rms: give exactly one of --trace or --asd");
      json report;
      if (!rms_trace.empty()) {
        const Trace t = read_trace(rms_trace);
        const InputProvenance p = input_provenance(rms_trace, t.metadata, rms_c);
        report = provenance("rms", p.hash, p.seed);
        report["units"] = t.units;
        report["rms"] = rms(t);
        if (rms_lo || rms_hi) {
          const double lo = rms_lo.value_or(0.0), hi = rms_hi.value_or(0.5 * t.sample_rate_hz);
          report["band"] = json{{"f_lo", lo}, {"f_hi", hi}, {"rms", analysis::band_rms(t, lo, hi)}};
        }
      } else {
        const analysis::AsdTable a = analysis::parse_asd_csv(read_file(rms_asd));
        const InputProvenance p = input_provenance(rms_asd, a.metadata, rms_c);
        report = provenance("rms", p.hash, p.seed);
        report["units"] = a.units;
        const double lo = rms_lo.value_or(0.0), hi = rms_hi.value_or(a.f.back());
        report["band"] = json{{"f_lo", lo}, {"f_hi", hi}, {"rms", analysis::band_rms(a, lo, hi)}};
      }
      emit(report, rms_c.out);
    } else if (*bode_cmd) {
      const SimConfig cfg = bode_src.load();
      const std::string hash = config_hash(cfg);
      require(bode_points >= 1 && bode_lo > 0.0 && bode_hi >= bode_lo, "bode: need points >= 1 and 0 < f_lo <= f_hi");
      require(bode_amplitude > 0.0, "bode: amplitude must be > 0");
      const Trace disturbance =
          bode_noise ? closed_loop_disturbance(cfg.noise, cfg.servo, 1.0, bode_c.seed) : Trace{};
      LoopSimulator sim(cfg.cavity, cfg.pdh, cfg.plant, cfg.servo, disturbance, bode_c.seed);
      run_until_locked(sim, 50e-3, 1.0);
      const std::vector<double> fpts = log_spaced(bode_lo, bode_hi, bode_points);
      const std::vector<BodePoint> pts = bode_measure(sim, fpts, bode_amplitude);
      const LoopModel model(cfg.cavity, cfg.pdh, cfg.plant, cfg.servo);
      json rows = json::array();
      for (const BodePoint& b : pts) {
        rows.push_back(json{{"f_hz", b.f_hz},
                            {"gain_db", b.gain_db},
                            {"phase_deg", b.phase_deg},
                            {"valid", b.valid},
                            {"retried", b.retried},
                            {"model", model_bode_point(model, b.f_hz)}});
      }
      json report = provenance("bode", hash, bode_c.seed);
      report["injection_amplitude"] = bode_amplitude;
      report["with_noise"] = bode_noise;
      report["response"] = "error volts per injected piezo volt";
      report["points"] = rows;
      if (fs::path(bode_c.out).extension() == ".csv") {
        std::ostringstream csv;
        csv << "# created_by=cavlock bode\n# config_hash=" << hash << "\n# seed=" << bode_c.seed
            << "\n# injection_amplitude=" << format_double(bode_amplitude)
            << "\n# with_noise=" << (bode_noise ? "true" : "false") << "\nf_hz,gain_db,phase_deg\n";
        int skipped = 0;
        for (const BodePoint& b : pts) {
          if (!b.valid) {
            ++skipped;
            continue;
          }
          csv << format_double(b.f_hz) << ',' << format_double(b.gain_db) << ',' << format_double(b.phase_deg) << '\n';
        }
        if (skipped > 0) std::cerr << "bode: " << skipped << " invalid points omitted from " << bode_c.out << '\n';
        write_file_atomic(bode_c.out, csv.str());
      } else {
        emit(report, bode_c.out);
      }
    } else if (*loss_cmd) {
      const SimConfig cfg = loss_src.load();
      const std::string hash = config_hash(cfg);
      const analysis::LossBudget b =
          analysis::loss_budget(cfg.cavity, loss_finesse, absorption_model(loss_absorption));
      json report = provenance("loss-budget", hash, loss_c.seed);
      report["absorption_model"] = loss_absorption;
      report.update(to_json(b));
      emit(report, loss_c.out);
    } else if (*syn_cmd) {
      require(!syn_c.out.empty(), "synth-noise: --out trace path is required");
      SimConfig cfg = syn_src.load();
      if (!syn_noise.empty()) cfg.noise = noise_preset(syn_noise);
      if (syn_c.seed_given) cfg.noise.seed = syn_c.seed;
      const std::string hash = config_hash(cfg);
      Trace t = synthesize(cfg.noise, syn_duration, syn_rate);
      stamp(t, "synth-noise", hash, cfg.noise.seed);
      write_trace(syn_c.out, t);
      json report = provenance("synth-noise", hash, cfg.noise.seed);
      report["samples"] = t.size();
      report["rms"] = rms(t);
      report["model_rms_0_100hz"] = band_rms(cfg.noise, 0.0, 100.0);
      report["rms_0_100hz"] = analysis::band_rms(t, 0.0, 100.0);
      std::cout << dump_json(report);
    } else if (*scen_cmd) {
      if (scen_list) {
        for (const std::string& n : scenario_names()) std::cout << n << '\n';
        return 0;
      }
      require(!scen_name.empty(), "scenario: --name is required");
      const Scenario s = scenario(scen_name);
      const SimConfig cfg = scenario_config(s);
      const std::string hash = config_hash(cfg);
      ScenarioResult r = run_scenario(cfg, scen_duration, scen_c.seed);
      const LockReport& rep = r.run.report;

      json report = provenance("scenario", hash, scen_c.seed);
      report["scenario"] = json{{"name", s.name},
                                {"cavity_preset", s.cavity_preset},
                                {"noise_preset", s.noise_preset},
                                {"plant_preset", s.plant_preset},
                                {"servo_preset", s.servo_preset},
                                {"reference_rms_m", s.reference_rms_m}};
      report["duration_s"] = scen_duration;
      report["derived"] = to_json(r.derived);
      report["scan_fit"] = to_json(r.scan_fit);
      report["error_calibration"] = to_json(r.error_calibration);
      report["lock"] = to_json(rep);
      report["error_derived_rms_displacement"] = r.error_displacement.rms;
      report["error_derived_clipped_samples"] = r.error_displacement.clipped;
      report["sensitivity_10hz_db"] = r.sensitivity_10hz_db;
      report["max_lockable_finesse"] =
          rep.rms_displacement > 0.0 ? json(max_lockable_finesse(rep.rms_displacement, cfg.cavity.wavelength_lambda))
                                     : json(nullptr);
      if (!scen_c.out.empty()) {
        const fs::path dir = out_dir(scen_c.out, "scenario");
        LockReport& mrep = r.run.report;
        write_traces(dir,
                     {{"residual_error", &mrep.residual_error},
                      {"residual_displacement", &mrep.residual_displacement},
                      {"error_displacement", &r.error_displacement.displacement}},
                     "scenario", hash, scen_c.seed);
        if (!r.residual_asd.f.empty()) {
          r.residual_asd.metadata = {{"created_by", std::string(kTool) + " scenario"},
                                     {"config_hash", hash},
                                     {"seed", std::to_string(scen_c.seed)}};
          analysis::write_asd_csv((dir / "residual_asd.csv").string(), r.residual_asd);
        }
        write_file_atomic(dir / "config.json", dump_json(to_json(cfg)));
        write_file_atomic(dir / "report.json", dump_json(report));
      }
      std::cout << dump_json(report);
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error kind=validation msg=" << json(std::string(e.what())).dump() << '\n';
    return 1;
  } catch (const AnalysisError& e) {
    std::cerr << "error kind=analysis msg=" << json(std::string(e.what())).dump() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error kind=validation msg=" << json(std::string(e.what())).dump() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error kind=validation msg=" << json(std::string(e.what())).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal msg=" << json(std::string(e.what())).dump() << '\n';
    return 2;
  }
}
