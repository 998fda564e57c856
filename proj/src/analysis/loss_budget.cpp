#include "cavlock/analysis/loss_budget.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"
#include "cavlock/losses.hpp"

namespace cavlock::analysis {

LossBudget loss_budget(const CavityConfig& cavity, std::optional<double> measured_finesse, AbsorptionModel model) {
  validate(cavity);
  const IntracavityLosses ic = intracavity_losses(cavity, model);
  LossBudget b;
  b.mirror_loss = (1.0 - cavity.mirror_reflectivity_R1) + (1.0 - cavity.mirror_reflectivity_R2);
  b.scattering_single_pass =
      scattering_loss(cavity.surface_roughness_Rq, cavity.wavelength_lambda, cavity.refractive_index_n);
  b.scattering_roundtrip = ic.scattering_roundtrip;
  b.clipping = ic.clipping;
  b.absorption = ic.absorption;
  b.ar_residual = ic.ar_residual;
  b.total = b.mirror_loss + b.scattering_roundtrip + b.clipping + b.absorption + b.ar_residual;
  b.implied_finesse = kTwoPi / b.total;

  if (measured_finesse) {
    require(*measured_finesse > 0.0, "loss-budget: measured finesse must be > 0");
    b.measured_finesse = measured_finesse;
    const double residual = kTwoPi / *measured_finesse - b.mirror_loss - b.scattering_roundtrip - b.clipping - b.ar_residual;
    b.residual = residual;
    if (residual < 0.0) {
      b.over_explained = true;
    } else if (cavity.diamond_thickness_d > 0.0 && residual < 1.0) {
      b.implied_alpha = absorption_coefficient(residual, cavity.diamond_thickness_d, model);
    }
  }
  return b;
}

} // namespace cavlock::analysis
