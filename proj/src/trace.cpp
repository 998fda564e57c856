#include "cavlock/trace.hpp"

#include "cavlock/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

namespace cavlock {

Trace::Trace(double rate_hz, std::string unit, std::vector<double> samples, double start_s)
    : sample_rate_hz(rate_hz), t0_s(start_s), units(std::move(unit)), values(std::move(samples)) {}

Trace Trace::decimated(std::size_t factor, std::size_t offset) const {
  require(factor >= 1, "trace: decimation factor must be >= 1");
  Trace out;
  out.sample_rate_hz = sample_rate_hz / static_cast<double>(factor);
  out.t0_s = time(offset);
  out.units = units;
  out.metadata = metadata;
  for (std::size_t i = offset; i < values.size(); i += factor) out.values.push_back(values[i]);
  return out;
}

Trace Trace::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= values.size(), "trace: slice out of range");
  Trace out;
  out.sample_rate_hz = sample_rate_hz;
  out.t0_s = time(begin);
  out.units = units;
  out.metadata = metadata;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin),
                    values.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

void validate(const Trace& trace) {
  require(std::isfinite(trace.sample_rate_hz) && trace.sample_rate_hz > 0.0,
          "trace: sample_rate_hz must be positive and finite");
  require(std::isfinite(trace.t0_s), "trace: t0 must be finite");
  for (double v : trace.values) require(std::isfinite(v), "trace: non-finite sample value");
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

double rms(const Trace& trace) { return rms(trace.samples()); }

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string to_csv(const Trace& trace) {
  std::string out;
  out.reserve(trace.values.size() * 48 + 256);
  out += "# sample_rate_hz=" + format_double(trace.sample_rate_hz) + "\n";
  out += "# units=" + trace.units + "\n";
  if (trace.t0_s != 0.0) out += "# t0_s=" + format_double(trace.t0_s) + "\n";
  for (const auto& [key, value] : trace.metadata) {
    if (key == "sample_rate_hz" || key == "units" || key == "t0_s") continue;
    out += "# " + key + "=" + value + "\n";
  }
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    out += format_double(trace.time(i));
    out += ',';
    out += format_double(trace.values[i]);
    out += '\n';
  }
  return out;
}

namespace {

double parse_number(std::string_view s, std::size_t line_no) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("trace: malformed number '" + std::string(s) + "' on line " +
                          std::to_string(line_no));
  }
  return v;
}

} // namespace

Trace parse_trace_csv(const std::string& text) {
  Trace trace;
  std::vector<double> times;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_rate = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string value = body.substr(eq + 1);
      if (key == "sample_rate_hz") {
        trace.sample_rate_hz = parse_number(value, line_no);
        have_rate = true;
      } else if (key == "units") {
        trace.units = value;
      } else if (key != "t0_s") {
        trace.metadata[key] = value;
      }
      continue;
    }
    if (line == "t,value") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("trace: expected 't,value' on line " + std::to_string(line_no));
    }
    times.push_back(parse_number(std::string_view(line).substr(0, comma), line_no));
    trace.values.push_back(parse_number(std::string_view(line).substr(comma + 1), line_no));
  }
  if (times.empty()) throw ValidationError("trace: no samples");
  if (!have_rate) {
    if (times.size() < 2) throw ValidationError("trace: cannot infer sample rate from one sample");
    trace.sample_rate_hz = static_cast<double>(times.size() - 1) / (times.back() - times.front());
  }
  trace.t0_s = times.front();
  validate(trace);
  const double dt = 1.0 / trace.sample_rate_hz;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    const double rounding = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(times[i]);
    if (std::abs(step - dt) > 1e-6 * dt + rounding) {
      throw ValidationError("trace: non-uniform sampling at line index " + std::to_string(i) +
                            " (declared sample rate inconsistent with t spacing)");
    }
  }
  return trace;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path() && !path.parent_path().empty()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  write_file_atomic(path, to_csv(trace));
}

Trace read_trace(const std::filesystem::path& path) { return parse_trace_csv(read_file(path)); }

} // namespace cavlock
