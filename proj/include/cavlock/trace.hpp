#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cavlock {

// Uniformly sampled time series. Sample i sits at t0_s + i / sample_rate_hz.
struct Trace {
  double sample_rate_hz = 1.0;
  double t0_s = 0.0;
  std::string units;
  std::vector<double> values;
  // Free-form provenance (seed, created_by, config_hash, ...). Written as
  // `# key=value` header lines.
  std::map<std::string, std::string> metadata;

  Trace() = default;
  Trace(double rate_hz, std::string unit, std::vector<double> samples, double start_s = 0.0);

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double dt() const { return 1.0 / sample_rate_hz; }
  double time(std::size_t i) const { return t0_s + static_cast<double>(i) / sample_rate_hz; }
  double duration() const { return static_cast<double>(values.size()) / sample_rate_hz; }
  std::span<const double> samples() const { return values; }

  // Every `factor`-th sample, starting at `offset`.
  Trace decimated(std::size_t factor, std::size_t offset = 0) const;
  Trace slice(std::size_t begin, std::size_t end) const;
};

void validate(const Trace& trace);

double mean(std::span<const double> x);
// Root-mean-square about the mean.
double rms(std::span<const double> x);
double rms(const Trace& trace);

// CSV text form: `# key=value` header lines (sample_rate_hz, units, then
// metadata), followed by `t,value` rows with 17 significant digits.
std::string to_csv(const Trace& trace);
Trace parse_trace_csv(const std::string& text);

void write_trace(const std::filesystem::path& path, const Trace& trace);
Trace read_trace(const std::filesystem::path& path);

// Writes `content` to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string format_double(double value);

} // namespace cavlock
