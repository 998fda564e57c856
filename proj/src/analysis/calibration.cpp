#include "cavlock/analysis/calibration.hpp"

#include "cavlock/analysis/least_squares.hpp"
#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/fft.hpp"

#include <algorithm>
#include <cmath>

namespace cavlock::analysis {

ErrorCalibration calibrate_error_slope(const Trace& error, const ScanFit& scan) {
  validate(error);
  require(scan.linewidth > 0.0 && scan.axis_calibration > 0.0, "calibrate_error: scan fit has no calibration");
  const ScanPeak* carrier = nullptr;
  for (const ScanPeak& p : scan.peaks)
    if (p.kind == "carrier") {
      carrier = &p;
      break;
    }
  require(carrier != nullptr, "calibrate_error: scan fit has no carrier");

  // Detuning axis in Hz relative to the carrier.
  const std::size_t n = error.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (error.time(i) - carrier->center_s) * scan.axis_calibration;

  // Error extrema within one linewidth of the carrier.
  const double reach = scan.linewidth;
  std::size_t imax = n, imin = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(x[i]) > reach) continue;
    if (imax == n || error.values[i] > error.values[imax]) imax = i;
    if (imin == n || error.values[i] < error.values[imin]) imin = i;
  }
  if (imax == n || imin == n || imax == imin)
    throw AnalysisError("calibrate_error: error trace does not cover the carrier");
  const std::size_t lo = std::min(imax, imin), hi = std::max(imax, imin);
  if (hi - lo < 8) throw AnalysisError("calibrate_error: fewer than 8 samples between the error extrema");

  const double direction = error.values[hi] > error.values[lo] ? 1.0 : -1.0;
  std::size_t against = 0;
  for (std::size_t i = lo; i < hi; ++i)
    if ((error.values[i + 1] - error.values[i]) * direction < 0.0) ++against;
  if (static_cast<double>(against) > 0.2 * static_cast<double>(hi - lo))
    throw ValidationError("calibrate_error: slope region is not monotone (" + std::to_string(against) + " of " +
                          std::to_string(hi - lo) + " steps reverse)");

  const auto m = static_cast<Eigen::Index>(hi - lo + 1);
  // Fit in units of one linewidth for conditioning.
  const double unit = scan.linewidth;
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::size_t j = lo + static_cast<std::size_t>(i);
      r[i] = p[0] * std::tanh((x[j] / unit - p[2]) / p[1]) + p[3] - error.values[j];
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::size_t j = lo + static_cast<std::size_t>(i);
      const double u = (x[j] / unit - p[2]) / p[1];
      const double t = std::tanh(u);
      const double sech2 = 1.0 - t * t;
      J(i, 0) = t;
      J(i, 1) = -p[0] * sech2 * u / p[1];
      J(i, 2) = -p[0] * sech2 / p[1];
      J(i, 3) = 1.0;
    }
    return J;
  };

  // Zero crossing of the mid-level for x0.
  const double ymid = 0.5 * (error.values[lo] + error.values[hi]);
  double x0 = 0.5 * (x[lo] + x[hi]);
  for (std::size_t i = lo; i < hi; ++i) {
    const double a = error.values[i] - ymid, b = error.values[i + 1] - ymid;
    if (a == 0.0 || a * b < 0.0) {
      x0 = a == 0.0 ? x[i] : x[i] + (x[i + 1] - x[i]) * a / (a - b);
      break;
    }
  }
  Eigen::VectorXd p0(4);
  const double half_span = 0.5 * (error.values[hi] - error.values[lo]);
  const double slope_sign = (x[hi] > x[lo]) ? 1.0 : -1.0;
  p0 << half_span * slope_sign, 0.25 * std::abs(x[hi] - x[lo]) / unit, x0 / unit, ymid;
  // A straight segment drives the width to infinity; accept any fit whose rms
  // misfit is below 1e-8 of the signal span.
  LeastSquaresOptions options;
  options.absolute_tolerance = static_cast<double>(m) * std::pow(1e-8 * 2.0 * std::abs(half_span), 2);
  const LeastSquaresResult res = levenberg_marquardt(residuals, p0, options, jacobian);
  if (!res.converged)
    throw AnalysisError("calibrate_error: tanh fit did not converge, residual norm " + format_double(res.residual_norm));

  ErrorCalibration cal;
  // Keep the width positive; the sign lives in the amplitude.
  const double sign = res.params[1] < 0.0 ? -1.0 : 1.0;
  cal.amplitude = sign * res.params[0];
  cal.width_hz = std::abs(res.params[1]) * unit;
  cal.x0_hz = res.params[2] * unit;
  cal.offset = res.params[3];
  cal.linewidth_hz = scan.linewidth;
  cal.finesse = scan.finesse;
  cal.width_over_linewidth = cal.width_hz / scan.linewidth;
  cal.slope_v_per_hz = cal.amplitude / cal.width_hz;
  cal.region_lo_hz = std::min(x[lo], x[hi]);
  cal.region_hi_hz = std::max(x[lo], x[hi]);
  cal.region_samples = static_cast<std::size_t>(m);
  cal.residual_norm = res.residual_norm;
  cal.iterations = res.iterations;
  return cal;
}

double linewidth_in_length(double finesse, double wavelength_m) {
  require(finesse > 0.0 && wavelength_m > 0.0, "linewidth_in_length: finesse and wavelength must be > 0");
  return wavelength_m / (2.0 * finesse);
}

namespace {

// rms about the mean; with `exclude_clipped`, flagged samples are left out.
void finish(DisplacementResult& out, bool exclude_clipped) {
  const std::vector<double>& x = out.displacement.values;
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (exclude_clipped && out.clipped_mask[i]) continue;
    sum += x[i];
    ++count;
  }
  if (count == 0) return;
  const double m = sum / static_cast<double>(count);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!exclude_clipped || !out.clipped_mask[i]) sum2 += (x[i] - m) * (x[i] - m);
  out.rms = std::sqrt(sum2 / static_cast<double>(count));
}

} // namespace

DisplacementResult error_to_displacement(const Trace& error, const ErrorCalibration& cal, double finesse,
                                         double wavelength_m) {
  validate(error);
  require(cal.amplitude != 0.0 && cal.width_hz > 0.0 && cal.linewidth_hz > 0.0,
          "err2len: calibration must have nonzero amplitude and positive widths");
  DisplacementResult out;
  out.length_scale = (cal.width_hz / cal.linewidth_hz) * linewidth_in_length(finesse, wavelength_m);
  out.displacement = Trace(error.sample_rate_hz, "m", std::vector<double>(error.size()), error.t0_s);
  out.displacement.metadata = error.metadata;
  out.clipped_mask.assign(error.size(), false);
  constexpr double kEdge = 1.0 - 1e-6;
  for (std::size_t i = 0; i < error.size(); ++i) {
    double u = (error.values[i] - cal.offset) / cal.amplitude;
    if (!(std::abs(u) < 1.0)) {
      ++out.clipped;
      out.clipped_mask[i] = true;
      u = u > 0.0 ? kEdge : -kEdge;
    }
    out.displacement.values[i] = out.length_scale * std::atanh(u);
  }
  finish(out, true);
  return out;
}

FringeCalibration interferometer_calibrate(const Trace& fringe) {
  validate(fringe);
  const std::size_t n = fringe.size();
  require(n >= 8, "ifm-calib: fringe trace too short");
  const double m = mean(fringe.values);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = fringe.values[i] - m;
  const auto X = rfft(centered);
  std::size_t k = 1;
  for (std::size_t j = 1; j < X.size(); ++j)
    if (std::abs(X[j]) > std::abs(X[k])) k = j;
  // Parabolic interpolation of the magnitude peak.
  double kf = static_cast<double>(k);
  if (k > 1 && k + 1 < X.size()) {
    const double a = std::abs(X[k - 1]), b = std::abs(X[k]), c = std::abs(X[k + 1]);
    const double d = a - 2.0 * b + c;
    if (d != 0.0) kf += 0.5 * (a - c) / d;
  }
  const double duration = static_cast<double>(n) / fringe.sample_rate_hz;
  const double f0 = kf / duration;
  if (f0 * duration < 1.0) throw AnalysisError("ifm-calib: fringe trace spans less than one full fringe");

  // Linear least squares for amplitude/phase/offset at f0, then LM on all four.
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = fringe.time(i) - fringe.t0_s;
    A(static_cast<Eigen::Index>(i), 0) = std::sin(kTwoPi * f0 * t);
    A(static_cast<Eigen::Index>(i), 1) = std::cos(kTwoPi * f0 * t);
    A(static_cast<Eigen::Index>(i), 2) = 1.0;
    yv[static_cast<Eigen::Index>(i)] = fringe.values[i];
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(yv);
  Eigen::VectorXd p0(4);
  p0 << std::hypot(c[0], c[1]), f0 * duration, std::atan2(c[1], c[0]), c[2];

  // Frequency is fitted in cycles per record for conditioning.
  const auto mrows = static_cast<Eigen::Index>(n);
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(mrows);
    for (Eigen::Index i = 0; i < mrows; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(n);
      r[i] = p[0] * std::sin(kTwoPi * p[1] * u + p[2]) + p[3] - fringe.values[static_cast<std::size_t>(i)];
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J(mrows, 4);
    for (Eigen::Index i = 0; i < mrows; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(n);
      const double arg = kTwoPi * p[1] * u + p[2];
      J(i, 0) = std::sin(arg);
      J(i, 1) = p[0] * std::cos(arg) * kTwoPi * u;
      J(i, 2) = p[0] * std::cos(arg);
      J(i, 3) = 1.0;
    }
    return J;
  };
  const LeastSquaresResult res = levenberg_marquardt(residuals, p0, {}, jacobian);
  if (!res.converged)
    throw AnalysisError("ifm-calib: sine fit did not converge, residual norm " + format_double(res.residual_norm));
  if (std::abs(res.params[1]) < 1.0)
    throw AnalysisError("ifm-calib: fringe trace spans less than one full fringe (" +
                        format_double(std::abs(res.params[1])) + " fitted)");

  FringeCalibration cal;
  cal.amplitude = res.params[0];
  cal.phase = res.params[2];
  if (cal.amplitude < 0.0) {
    cal.amplitude = -cal.amplitude;
    cal.phase += kPi;
  }
  cal.phase = std::remainder(cal.phase, kTwoPi);
  cal.frequency = res.params[1] / duration;
  cal.offset = res.params[3];
  cal.residual_norm = res.residual_norm;
  cal.amplitude_error = res.standard_error(0);
  cal.offset_error = res.standard_error(3);
  cal.iterations = res.iterations;
  return cal;
}

DisplacementResult interferometer_convert(const Trace& signal, const FringeCalibration& cal, double wavelength_m) {
  validate(signal);
  require(cal.amplitude > 0.0, "ifm-convert: calibration amplitude must be > 0");
  require(wavelength_m > 0.0, "ifm-convert: wavelength must be > 0");
  DisplacementResult out;
  out.length_scale = wavelength_m / (4.0 * kPi);
  out.displacement = Trace(signal.sample_rate_hz, "m", std::vector<double>(signal.size()), signal.t0_s);
  out.displacement.metadata = signal.metadata;
  out.clipped_mask.assign(signal.size(), false);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    double u = (signal.values[i] - cal.offset) / cal.amplitude;
    if (u > 1.0 || u < -1.0) {
      ++out.clipped;
      out.clipped_mask[i] = true;
      u = std::clamp(u, -1.0, 1.0);
    }
    out.displacement.values[i] = std::asin(u) * out.length_scale;
  }
  finish(out, false);
  return out;
}

} // namespace cavlock::analysis
