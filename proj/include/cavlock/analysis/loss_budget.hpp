#pragma once

#include "cavlock/cavity.hpp"

#include <optional>

namespace cavlock::analysis {

// Round-trip loss fractions. total = mirror + scattering + clipping +
// absorption + AR residual; implied_finesse = 2 pi / total.
struct LossBudget {
  double mirror_loss = 0.0;
  double scattering_single_pass = 0.0;
  double scattering_roundtrip = 0.0;
  double clipping = 0.0;
  double absorption = 0.0;
  double ar_residual = 0.0;
  double total = 0.0;
  double implied_finesse = 0.0;

  // Filled in when a measured finesse is supplied.
  std::optional<double> measured_finesse;
  std::optional<double> residual;      // loss left for absorption
  std::optional<double> implied_alpha; // cm^-1, omitted when over-explained
  bool over_explained = false;
};

// Forward budget from the configuration. With `measured_finesse`, the
// absorption left over after the other terms is converted to alpha.
LossBudget loss_budget(const CavityConfig& cavity, std::optional<double> measured_finesse = std::nullopt,
                       AbsorptionModel model = AbsorptionModel::Decadic);

} // namespace cavlock::analysis
