#include "cavlock/analysis/spectrum.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/fft.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cavlock::analysis {

std::vector<double> make_window(const std::string& name, std::size_t n) {
  require(n >= 2, "window: length must be >= 2");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n); // periodic windows
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kTwoPi * static_cast<double>(i) / denom;
    if (name == "hann") w[i] = 0.5 - 0.5 * std::cos(x);
    else if (name == "hamming") w[i] = 0.54 - 0.46 * std::cos(x);
    else if (name == "blackman") w[i] = 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
    else if (name == "rectangular") w[i] = 1.0;
    else throw ValidationError("window: unknown window '" + name + "'");
  }
  return w;
}

AsdTable compute_asd(const Trace& trace, const WelchOptions& options) {
  validate(trace);
  const std::size_t n = trace.size();
  require(options.overlap >= 0.0 && options.overlap < 1.0, "asd: overlap must be in [0, 1)");
  std::size_t len = options.segment_length;
  if (len == 0) {
    require(options.segments >= 1, "asd: segments must be >= 1");
    const double k = static_cast<double>(options.segments);
    len = static_cast<std::size_t>(std::floor(static_cast<double>(n) / (1.0 + (k - 1.0) * (1.0 - options.overlap))));
  }
  require(len >= 2, "asd: segment length must be >= 2");
  require(n >= len, "asd: trace shorter than the segment length");
  const auto hop =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(len) * (1.0 - options.overlap))));
  const std::vector<double> w = make_window(options.window, len);
  double w2 = 0.0;
  for (double v : w) w2 += v * v;

  const std::size_t bins = len / 2 + 1;
  std::vector<double> psd(bins, 0.0);
  std::vector<double> seg(len);
  int count = 0;
  for (std::size_t start = 0; start + len <= n; start += hop) {
    double m = 0.0;
    for (std::size_t i = 0; i < len; ++i) m += trace.values[start + i];
    m /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) seg[i] = (trace.values[start + i] - m) * w[i];
    const auto X = rfft(seg);
    for (std::size_t k = 0; k < bins; ++k) psd[k] += std::norm(X[k]);
    ++count;
  }

  const double fs = trace.sample_rate_hz;
  AsdTable out;
  out.units = trace.units.empty() ? "" : trace.units + "/sqrt(Hz)";
  out.resolution_hz = fs / static_cast<double>(len);
  out.window = options.window;
  out.segment_length = len;
  out.overlap = options.overlap;
  out.segments_used = count;
  out.metadata = trace.metadata;
  out.f.resize(bins);
  out.asd.resize(bins);
  double power = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    double p = psd[k] / (static_cast<double>(count) * fs * w2);
    const bool nyquist = (len % 2 == 0) && k == len / 2;
    if (k != 0 && !nyquist) p *= 2.0;
    out.f[k] = static_cast<double>(k) * out.resolution_hz;
    out.asd[k] = std::sqrt(p);
    power += p * out.resolution_hz;
  }
  const double sd = rms(trace);
  out.parseval_ratio = sd > 0.0 ? power / (sd * sd) : 1.0;
  return out;
}

double band_rms(const AsdTable& t, double f_lo, double f_hi) {
  require(f_lo <= f_hi, "band_rms: f_lo must be <= f_hi");
  double p = 0.0;
  for (std::size_t k = 0; k < t.f.size(); ++k)
    if (t.f[k] >= f_lo && t.f[k] <= f_hi) p += t.asd[k] * t.asd[k] * t.resolution_hz;
  return std::sqrt(p);
}

double band_rms(const Trace& trace, double f_lo, double f_hi) {
  validate(trace);
  require(f_lo <= f_hi, "band_rms: f_lo must be <= f_hi");
  const std::size_t n = trace.size();
  const double m = mean(trace.values);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = trace.values[i] - m;
  const auto X = rfft(x);
  const double df = trace.sample_rate_hz / static_cast<double>(n);
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  double p = 0.0;
  for (std::size_t k = 1; k < X.size(); ++k) {
    const double f = static_cast<double>(k) * df;
    if (f < f_lo || f > f_hi) continue;
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    p += (nyquist ? 1.0 : 2.0) * std::norm(X[k]) / nn;
  }
  return std::sqrt(p);
}

double band_average_asd(const AsdTable& t, double f_lo, double f_hi) {
  double p = 0.0;
  int count = 0;
  for (std::size_t k = 0; k < t.f.size(); ++k) {
    if (t.f[k] >= f_lo && t.f[k] < f_hi) {
      p += t.asd[k] * t.asd[k];
      ++count;
    }
  }
  if (count == 0) throw AnalysisError("band_average_asd: no bins in [" + format_double(f_lo) + ", " +
                                      format_double(f_hi) + ")");
  return std::sqrt(p / count);
}

void write_asd_csv(const std::string& path, const AsdTable& t) {
  std::ostringstream os;
  os << "# units=" << t.units << "\n";
  os << "# resolution_hz=" << format_double(t.resolution_hz) << "\n";
  os << "# window=" << t.window << "\n";
  os << "# segment_length=" << t.segment_length << "\n";
  os << "# overlap=" << format_double(t.overlap) << "\n";
  os << "# segments_used=" << t.segments_used << "\n";
  os << "# parseval_ratio=" << format_double(t.parseval_ratio) << "\n";
  for (const auto& [key, value] : t.metadata) os << "# " << key << "=" << value << "\n";
  os << "f_hz,asd\n";
  for (std::size_t k = 0; k < t.f.size(); ++k) os << format_double(t.f[k]) << ',' << format_double(t.asd[k]) << '\n';
  write_file_atomic(path, os.str());
}

AsdTable parse_asd_csv(const std::string& text) try {
  AsdTable t;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      if (key == "units") t.units = value;
      else if (key == "resolution_hz") t.resolution_hz = std::stod(value);
      else if (key == "window") t.window = value;
      else if (key == "segment_length") t.segment_length = std::stoul(value);
      else if (key == "overlap") t.overlap = std::stod(value);
      else if (key == "segments_used") t.segments_used = std::stoi(value);
      else if (key == "parseval_ratio") t.parseval_ratio = std::stod(value);
      else t.metadata[key] = value;
      continue;
    }
    if (line.rfind("f_hz", 0) == 0) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "asd csv: expected 'f,asd' rows");
    t.f.push_back(std::stod(line.substr(0, comma)));
    t.asd.push_back(std::stod(line.substr(comma + 1)));
  }
  require(!t.f.empty(), "asd csv: no rows");
  if (t.resolution_hz == 0.0 && t.f.size() > 1) t.resolution_hz = t.f[1] - t.f[0];
  return t;
} catch (const std::logic_error& e) {
  throw ValidationError(std::string("asd csv: malformed number (") + e.what() + ")");
}

} // namespace cavlock::analysis
