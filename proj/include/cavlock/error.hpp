#pragma once

#include <stdexcept>
#include <string>

namespace cavlock {

// Bad input: malformed files, violated invariants, out-of-range parameters.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input was well formed but an analysis step could not produce a result
// (fit divergence, missing peaks, ...).
class AnalysisError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

} // namespace cavlock
