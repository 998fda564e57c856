#include "cavlock/losses.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"

#include <cmath>

namespace cavlock {

double scattering_loss(double roughness_m, double wavelength_m, double refractive_index) {
  require(roughness_m >= 0.0, "scattering: roughness must be >= 0");
  require(wavelength_m > 0.0, "scattering: wavelength must be > 0");
  require(refractive_index >= 1.0, "scattering: refractive index must be >= 1");
  const double x = 4.0 * kPi * roughness_m / (wavelength_m / refractive_index);
  return x * x;
}

double absorption_loss(double alpha_per_cm, double thickness_m, AbsorptionModel model) {
  require(alpha_per_cm >= 0.0, "absorption: alpha must be >= 0");
  require(thickness_m >= 0.0, "absorption: thickness must be >= 0");
  const double two_d_alpha = 2.0 * (thickness_m * 100.0) * alpha_per_cm;
  if (model == AbsorptionModel::Decadic) return -std::expm1(-two_d_alpha * std::log(10.0));
  return -std::expm1(-two_d_alpha);
}

double absorption_coefficient(double roundtrip_loss, double thickness_m, AbsorptionModel model) {
  require(thickness_m > 0.0, "absorption: thickness must be > 0 to infer alpha");
  require(roundtrip_loss >= 0.0 && roundtrip_loss < 1.0, "absorption: loss must be in [0, 1)");
  const double two_d_cm = 2.0 * thickness_m * 100.0;
  const double optical_depth = -std::log1p(-roundtrip_loss);
  if (model == AbsorptionModel::Decadic) return optical_depth / std::log(10.0) / two_d_cm;
  return optical_depth / two_d_cm;
}

double clipping_loss(double aperture_diameter_m, double waist_m) {
  require(aperture_diameter_m >= 0.0, "clipping: aperture must be >= 0");
  require(waist_m > 0.0, "clipping: waist must be > 0");
  const double ratio = aperture_diameter_m / (2.0 * waist_m);
  return std::exp(-2.0 * ratio * ratio);
}

} // namespace cavlock
