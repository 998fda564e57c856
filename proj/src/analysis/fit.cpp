#include "cavlock/analysis/fit.hpp"

#include "cavlock/analysis/least_squares.hpp"
#include "cavlock/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cavlock::analysis {

std::vector<Peak> find_peaks(const std::vector<double>& y, double min_prominence) {
  std::vector<Peak> out;
  const std::size_t n = y.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i] > y[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    if (j + 1 >= n || y[j + 1] > y[i]) {
      i = j;
      continue;
    }
    double left_min = y[i];
    for (std::size_t k = i; k-- > 0;) {
      if (y[k] > y[i]) break;
      left_min = std::min(left_min, y[k]);
    }
    double right_min = y[i];
    for (std::size_t k = j + 1; k < n; ++k) {
      if (y[k] > y[i]) break;
      right_min = std::min(right_min, y[k]);
    }
    const double prominence = y[i] - std::max(left_min, right_min);
    if (prominence >= min_prominence) out.push_back({i, y[i], prominence});
    i = j;
  }
  std::stable_sort(out.begin(), out.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
  return out;
}

double lorentzian(double x, double center, double fwhm, double height) {
  const double u = 2.0 * (x - center) / fwhm;
  return height / (1.0 + u * u);
}

namespace {

constexpr std::size_t kMaxCarriers = 8;
constexpr std::size_t kMaxSidebandCandidates = 200;

// Value and partial derivatives of height / (1 + u^2), u = 2 (x - c) / w,
// with respect to c and w, per unit height.
struct Shape {
  double value, d_center, d_width;
};

Shape shape(double x, double c, double w) {
  const double u = 2.0 * (x - c) / w;
  const double q = 1.0 / (1.0 + u * u);
  const double k = 2.0 * u * q * q;
  return {q, k * 2.0 / w, k * u / w};
}

// Full width at half maximum around index `i`, above `base`, in x units.
double half_width(const std::vector<double>& x, const std::vector<double>& y, std::size_t i, double base) {
  const double half = base + 0.5 * (y[i] - base);
  auto crossing = [&](std::size_t a, std::size_t b) {
    const double t = (half - y[a]) / (y[b] - y[a]);
    return x[a] + t * (x[b] - x[a]);
  };
  std::size_t l = i;
  while (l > 0 && y[l] > half) --l;
  std::size_t r = i;
  while (r + 1 < y.size() && y[r] > half) ++r;
  const double xl = (l < i && y[l] <= half) ? crossing(l, l + 1) : x[l];
  const double xr = (r > i && y[r] <= half) ? crossing(r, r - 1) : x[r];
  return std::max(xr - xl, std::abs(x[1] - x[0]));
}

struct Axis {
  std::vector<double> x; // normalized time
  double t_mid, scale;
};

Axis normalized_axis(const Trace& t) {
  Axis a;
  a.t_mid = t.time(0) + 0.5 * (t.duration() - t.dt());
  a.scale = t.duration();
  a.x.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) a.x[i] = (t.time(i) - a.t_mid) / a.scale;
  return a;
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size() - 1)));
  return v[k];
}

} // namespace

LorentzianFit fit_lorentzians(const Trace& trace, int count) {
  validate(trace);
  require(count >= 1, "fit_lorentzians: count must be >= 1");
  require(trace.size() >= static_cast<std::size_t>(3 * count + 2), "fit_lorentzians: trace too short");
  const Axis ax = normalized_axis(trace);
  const std::vector<double>& y = trace.values;
  const double base = percentile(y, 0.05);
  const double top = *std::max_element(y.begin(), y.end());
  std::vector<Peak> peaks = find_peaks(y, 1e-6 * std::max(top - base, 1e-300));
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.prominence > b.prominence; });
  if (peaks.size() < static_cast<std::size_t>(count))
    throw AnalysisError("fit_lorentzians: found " + std::to_string(peaks.size()) + " peaks, need " +
                        std::to_string(count));
  peaks.resize(static_cast<std::size_t>(count));

  Eigen::VectorXd p0(1 + 3 * count);
  p0[0] = base;
  for (int k = 0; k < count; ++k) {
    const Peak& pk = peaks[static_cast<std::size_t>(k)];
    p0[1 + 3 * k] = ax.x[pk.index];
    p0[2 + 3 * k] = half_width(ax.x, y, pk.index, base);
    p0[3 + 3 * k] = pk.height - base;
  }
  const auto m = static_cast<Eigen::Index>(y.size());
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double v = p[0];
      for (int k = 0; k < count; ++k) v += lorentzian(ax.x[i], p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
      r[i] = v - y[static_cast<std::size_t>(i)];
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J(m, p.size());
    for (Eigen::Index i = 0; i < m; ++i) {
      J(i, 0) = 1.0;
      for (int k = 0; k < count; ++k) {
        const Shape s = shape(ax.x[i], p[1 + 3 * k], p[2 + 3 * k]);
        J(i, 1 + 3 * k) = p[3 + 3 * k] * s.d_center;
        J(i, 2 + 3 * k) = p[3 + 3 * k] * s.d_width;
        J(i, 3 + 3 * k) = s.value;
      }
    }
    return J;
  };
  const LeastSquaresResult res = levenberg_marquardt(residuals, p0, {}, jacobian);

  LorentzianFit out;
  out.offset = res.params[0];
  out.residual_norm = res.residual_norm;
  out.iterations = res.iterations;
  out.converged = res.converged;
  for (int k = 0; k < count; ++k) {
    LorentzianPeak lp;
    lp.center = ax.t_mid + ax.scale * res.params[1 + 3 * k];
    lp.fwhm = ax.scale * std::abs(res.params[2 + 3 * k]);
    lp.height = res.params[3 + 3 * k];
    lp.center_error = ax.scale * res.standard_error(1 + 3 * k);
    lp.fwhm_error = ax.scale * res.standard_error(2 + 3 * k);
    lp.height_error = res.standard_error(3 + 3 * k);
    out.peaks.push_back(lp);
  }
  std::sort(out.peaks.begin(), out.peaks.end(),
            [](const LorentzianPeak& a, const LorentzianPeak& b) { return a.center < b.center; });
  if (!out.converged)
    throw AnalysisError("fit_lorentzians: did not converge, residual norm " + format_double(out.residual_norm));
  return out;
}

ScanFit fit_scan(const Trace& transmission, double omega, const ScanFitOptions& options) {
  validate(transmission);
  require(std::isfinite(omega) && omega > 0.0, "fit_scan: modulation frequency must be > 0");
  require(transmission.size() >= 16, "fit_scan: trace too short");
  const Axis ax = normalized_axis(transmission);
  const std::vector<double>& x = ax.x;
  const std::vector<double>& y = transmission.values;
  const double base = percentile(y, 0.05);
  const double top = *std::max_element(y.begin(), y.end());
  require(top > base, "fit_scan: transmission trace is flat");

  const std::vector<Peak> peaks = find_peaks(y, 1e-5 * (top - base));
  std::vector<Peak> carriers, others;
  const double carrier_level = options.carrier_fraction * (top - base);
  for (const Peak& p : peaks) {
    if (p.height - base >= carrier_level && p.prominence >= carrier_level) carriers.push_back(p);
    else others.push_back(p);
  }
  if (carriers.empty()) throw AnalysisError("fit_scan: no carrier peak found");
  if (carriers.size() > kMaxCarriers)
    throw AnalysisError("fit_scan: " + std::to_string(carriers.size()) +
                        " carrier candidates; the trace does not look like a cavity scan");
  // Sideband candidates: the most prominent remaining peaks.
  std::stable_sort(others.begin(), others.end(), [](const Peak& a, const Peak& b) { return a.prominence > b.prominence; });
  if (others.size() > kMaxSidebandCandidates) others.resize(kMaxSidebandCandidates);
  std::sort(carriers.begin(), carriers.end(), [](const Peak& a, const Peak& b) { return a.index < b.index; });
  const std::size_t nc = carriers.size();

  const double w0 = half_width(x, y, carriers[0].index, base);

  // Sideband spacing from symmetric peak pairs around each carrier.
  std::vector<double> spacings;
  std::vector<double> sideband_heights(nc, 0.0);
  for (std::size_t k = 0; k < nc; ++k) {
    const double c = x[carriers[k].index];
    const double reach_lo = k > 0 ? 0.5 * (c - x[carriers[k - 1].index]) : std::numeric_limits<double>::infinity();
    const double reach_hi = k + 1 < nc ? 0.5 * (x[carriers[k + 1].index] - c) : std::numeric_limits<double>::infinity();
    double best_score = -1.0, best_spacing = 0.0;
    for (const Peak& l : others) {
      const double d1 = c - x[l.index];
      if (d1 <= 0.5 * w0 || d1 >= reach_lo) continue;
      for (const Peak& r : others) {
        const double d2 = x[r.index] - c;
        if (d2 <= 0.5 * w0 || d2 >= reach_hi) continue;
        if (std::abs(d1 - d2) > 0.1 * std::max(d1, d2)) continue;
        const double score = std::min(l.height, r.height) - base;
        if (score > best_score) {
          best_score = score;
          best_spacing = 0.5 * (d1 + d2);
        }
      }
    }
    if (best_score > 0.0) {
      spacings.push_back(best_spacing);
      sideband_heights[k] = best_score;
    }
  }

  const auto m = static_cast<Eigen::Index>(y.size());
  auto model_columns = [&](double s, double w, std::size_t k, Eigen::Index i) {
    const double c = x[carriers[k].index];
    return std::pair{lorentzian(x[i], c, w, 1.0), lorentzian(x[i], c - s, w, 1.0) + lorentzian(x[i], c + s, w, 1.0)};
  };

  double s0 = 0.0;
  if (!spacings.empty()) {
    std::sort(spacings.begin(), spacings.end());
    s0 = spacings[spacings.size() / 2];
  } else {
    // Sidebands hidden in the carrier wings: scan the spacing and solve the
    // remaining amplitudes by linear least squares.
    double s_max = 0.5 * (x.back() - x.front());
    if (nc > 1) s_max = std::min(s_max, 0.5 * (x[carriers[1].index] - x[carriers[0].index]));
    const double s_min = 0.75 * w0;
    if (!(s_max > s_min)) throw AnalysisError("fit_scan: no room for sidebands around the carrier");
    double best = std::numeric_limits<double>::infinity();
    const int grid = 400;
    for (int g = 0; g < grid; ++g) {
      const double s = s_min * std::pow(s_max / s_min, static_cast<double>(g) / (grid - 1));
      Eigen::MatrixXd A(m, 1 + 2 * static_cast<Eigen::Index>(nc));
      for (Eigen::Index i = 0; i < m; ++i) {
        A(i, 0) = 1.0;
        for (std::size_t k = 0; k < nc; ++k) {
          const auto [cv, sv] = model_columns(s, w0, k, i);
          A(i, 1 + 2 * static_cast<Eigen::Index>(k)) = cv;
          A(i, 2 + 2 * static_cast<Eigen::Index>(k)) = sv;
        }
      }
      const Eigen::Map<const Eigen::VectorXd> yv(y.data(), m);
      const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(yv);
      bool positive = true;
      for (std::size_t k = 0; k < nc; ++k) positive = positive && coef[2 + 2 * static_cast<Eigen::Index>(k)] > 0.0;
      const double sse = (A * coef - yv).squaredNorm();
      if (positive && sse < best) {
        best = sse;
        s0 = s;
        for (std::size_t k = 0; k < nc; ++k) sideband_heights[k] = coef[2 + 2 * static_cast<Eigen::Index>(k)];
      }
    }
    if (s0 == 0.0) throw AnalysisError("fit_scan: sidebands not found");
  }

  // Parameters: offset, fwhm, spacing, then (center, carrier height,
  // sideband height) per carrier.
  const Eigen::Index np = 3 + 3 * static_cast<Eigen::Index>(nc);
  Eigen::VectorXd p0(np);
  p0[0] = base;
  p0[1] = w0;
  p0[2] = s0;
  for (std::size_t k = 0; k < nc; ++k) {
    const Eigen::Index o = 3 + 3 * static_cast<Eigen::Index>(k);
    p0[o] = x[carriers[k].index];
    p0[o + 1] = carriers[k].height - base;
    p0[o + 2] = std::max(sideband_heights[k], 1e-6 * (top - base));
  }
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double v = p[0];
      for (std::size_t k = 0; k < nc; ++k) {
        const Eigen::Index o = 3 + 3 * static_cast<Eigen::Index>(k);
        v += lorentzian(x[i], p[o], p[1], p[o + 1]);
        v += lorentzian(x[i], p[o] - p[2], p[1], p[o + 2]) + lorentzian(x[i], p[o] + p[2], p[1], p[o + 2]);
      }
      r[i] = v - y[static_cast<std::size_t>(i)];
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, np);
    for (Eigen::Index i = 0; i < m; ++i) {
      J(i, 0) = 1.0;
      for (std::size_t k = 0; k < nc; ++k) {
        const Eigen::Index o = 3 + 3 * static_cast<Eigen::Index>(k);
        const Shape c = shape(x[i], p[o], p[1]);
        const Shape lo = shape(x[i], p[o] - p[2], p[1]);
        const Shape hi = shape(x[i], p[o] + p[2], p[1]);
        J(i, 1) += p[o + 1] * c.d_width + p[o + 2] * (lo.d_width + hi.d_width);
        J(i, 2) += p[o + 2] * (hi.d_center - lo.d_center);
        J(i, o) = p[o + 1] * c.d_center + p[o + 2] * (lo.d_center + hi.d_center);
        J(i, o + 1) = c.value;
        J(i, o + 2) = lo.value + hi.value;
      }
    }
    return J;
  };
  const LeastSquaresResult res = levenberg_marquardt(residuals, p0, {}, jacobian);
  if (!res.converged)
    throw AnalysisError("fit_scan: fit did not converge, residual norm " + format_double(res.residual_norm));

  const double w = std::abs(res.params[1]);
  const double s = std::abs(res.params[2]);
  for (std::size_t k = 0; k < nc; ++k)
    if (!(res.params[3 + 3 * static_cast<Eigen::Index>(k) + 2] > 0.0))
      throw AnalysisError("fit_scan: sidebands not resolved, residual norm " + format_double(res.residual_norm));

  ScanFit out;
  out.modulation_frequency = omega;
  out.carriers = static_cast<int>(nc);
  const double hz_per_x = omega / s;
  out.axis_calibration = hz_per_x / ax.scale;
  out.sideband_spacing_s = s * ax.scale;
  out.linewidth = w * hz_per_x;
  const double var_w = res.covariance(1, 1), var_s = res.covariance(2, 2), cov_ws = res.covariance(1, 2);
  const double dlw_dw = omega / s, dlw_ds = -omega * w / (s * s);
  out.linewidth_error = std::sqrt(std::max(0.0, dlw_dw * dlw_dw * var_w + dlw_ds * dlw_ds * var_s + 2.0 * dlw_dw * dlw_ds * cov_ws));
  out.calibration_error = omega / (s * s) * std::sqrt(std::max(0.0, var_s)) / ax.scale;

  if (nc >= 2) {
    const double first = res.params[3];
    const double last = res.params[3 + 3 * static_cast<Eigen::Index>(nc - 1)];
    out.fsr = std::abs(last - first) / static_cast<double>(nc - 1) * hz_per_x;
    out.fsr_source = "carrier_spacing";
  } else if (options.fsr_hint_hz) {
    require(*options.fsr_hint_hz > 0.0, "fit_scan: FSR hint must be > 0");
    out.fsr = *options.fsr_hint_hz;
    out.fsr_source = "hint";
  } else {
    throw AnalysisError("fit_scan: single carrier in the trace and no FSR hint given");
  }
  out.finesse = out.fsr / out.linewidth;
  out.offset = res.params[0];
  out.residual_norm = res.residual_norm;
  out.iterations = res.iterations;
  out.converged = res.converged;
  if (options.nominal_sweep_rate_hz_per_s && *options.nominal_sweep_rate_hz_per_s != 0.0)
    out.sweep_rate_deviation =
        (out.axis_calibration - std::abs(*options.nominal_sweep_rate_hz_per_s)) / std::abs(*options.nominal_sweep_rate_hz_per_s);

  const double first_center = res.params[3];
  for (std::size_t k = 0; k < nc; ++k) {
    const Eigen::Index o = 3 + 3 * static_cast<Eigen::Index>(k);
    const double c = res.params[o];
    auto add = [&](const char* kind, double center, double height) {
      ScanPeak pk;
      pk.kind = kind;
      pk.center_s = ax.t_mid + ax.scale * center;
      pk.center_hz = (center - first_center) * hz_per_x;
      pk.fwhm_hz = out.linewidth;
      pk.height = height;
      out.peaks.push_back(pk);
    };
    add("lower_sideband", c - s, res.params[o + 2]);
    add("carrier", c, res.params[o + 1]);
    add("upper_sideband", c + s, res.params[o + 2]);
  }
  return out;
}

} // namespace cavlock::analysis
