#include "cavlock/cavity.hpp"

#include "cavlock/constants.hpp"
#include "cavlock/error.hpp"

#include <cmath>
#include <sstream>

namespace cavlock {

void validate(const CavityConfig& c) {
  auto finite = [](double v) { return std::isfinite(v); };
  require(finite(c.wavelength_lambda) && c.wavelength_lambda > 0.0, "cavity: wavelength_lambda must be > 0");
  require(finite(c.air_gap_length) && c.air_gap_length > 0.0, "cavity: air_gap_length must be > 0");
  require(finite(c.diamond_thickness_d) && c.diamond_thickness_d >= 0.0,
          "cavity: diamond_thickness_d must be >= 0");
  require(finite(c.refractive_index_n) && c.refractive_index_n >= 1.0, "cavity: refractive_index_n must be >= 1");
  require(finite(c.mirror_reflectivity_R1) && c.mirror_reflectivity_R1 > 0.0 && c.mirror_reflectivity_R1 < 1.0,
          "cavity: mirror_reflectivity_R1 must be in (0,1)");
  require(finite(c.mirror_reflectivity_R2) && c.mirror_reflectivity_R2 > 0.0 && c.mirror_reflectivity_R2 < 1.0,
          "cavity: mirror_reflectivity_R2 must be in (0,1)");
  require(finite(c.roc_top_mirror) && c.roc_top_mirror > 0.0, "cavity: roc_top_mirror must be > 0");
  require(finite(c.coating_aperture_D) && c.coating_aperture_D > 0.0, "cavity: coating_aperture_D must be > 0");
  require(finite(c.surface_roughness_Rq) && c.surface_roughness_Rq >= 0.0,
          "cavity: surface_roughness_Rq must be >= 0");
  require(finite(c.absorption_alpha) && c.absorption_alpha >= 0.0, "cavity: absorption_alpha must be >= 0");
  require(finite(c.ar_residual_reflectivity) && c.ar_residual_reflectivity >= 0.0 &&
              c.ar_residual_reflectivity < 0.5,
          "cavity: ar_residual_reflectivity must be in [0, 0.5)");
  const double g = 1.0 - c.geometric_length() / c.roc_top_mirror;
  if (!(g > 0.0 && g <= 1.0)) {
    std::ostringstream msg;
    msg << "cavity: unstable geometry, L_geom=" << c.geometric_length() << " m >= roc=" << c.roc_top_mirror
        << " m (g=" << g << ")";
    throw ValidationError(msg.str());
  }
}

double beam_waist(const CavityConfig& c) {
  // Waist on the flat mirror; refraction inside the slab is ignored here.
  const double L = c.geometric_length();
  const double w0_sq = (c.wavelength_lambda / kPi) * std::sqrt(L * (c.roc_top_mirror - L));
  return std::sqrt(w0_sq);
}

IntracavityLosses intracavity_losses(const CavityConfig& c, AbsorptionModel model) {
  IntracavityLosses l;
  l.scattering_roundtrip = 2.0 * scattering_loss(c.surface_roughness_Rq, c.wavelength_lambda, c.refractive_index_n);
  l.absorption = absorption_loss(c.absorption_alpha, c.diamond_thickness_d, model);
  l.clipping = clipping_loss(c.coating_aperture_D, beam_waist(c));
  l.ar_residual = 2.0 * c.ar_residual_reflectivity;
  return l;
}

double airy_finesse(double a) {
  require(a > 0.0 && a < 1.0, "finesse: round-trip amplitude factor must be in (0,1)");
  return kPi * std::sqrt(a) / (1.0 - a);
}

DerivedCavity derive(const CavityConfig& c, AbsorptionModel model) {
  validate(c);
  DerivedCavity d;
  d.optical_length = c.optical_length();
  d.geometric_length = c.geometric_length();
  d.fsr = kSpeedOfLight / (2.0 * d.optical_length);

  d.mirror_loss = (1.0 - c.mirror_reflectivity_R1) + (1.0 - c.mirror_reflectivity_R2);
  d.intracavity_loss = intracavity_losses(c, model).total();
  require(d.intracavity_loss < 1.0, "cavity: intracavity loss must be < 1");
  d.round_trip_loss_total = d.mirror_loss + d.intracavity_loss;

  const double g = std::sqrt(1.0 - d.intracavity_loss);
  const double a = std::sqrt(c.mirror_reflectivity_R1 * c.mirror_reflectivity_R2) * g;
  d.finesse = airy_finesse(a);
  d.finesse_small_loss = kTwoPi / d.round_trip_loss_total;
  d.linewidth_fwhm = d.fsr / d.finesse;
  d.quality_factor = (kSpeedOfLight / c.wavelength_lambda) / d.linewidth_fwhm;

  d.beam_waist_w0 = beam_waist(c);
  d.mode_volume = kPi * d.beam_waist_w0 * d.beam_waist_w0 * d.geometric_length / 4.0;
  d.linewidth_in_length_DeltaL = c.wavelength_lambda / (2.0 * d.finesse);
  return d;
}

double max_lockable_finesse(double delta_L_rms, double lambda) {
  require(std::isfinite(delta_L_rms) && delta_L_rms > 0.0, "max_lockable_finesse: delta_L_rms must be > 0");
  require(std::isfinite(lambda) && lambda > 0.0, "max_lockable_finesse: lambda must be > 0");
  return lambda / (2.0 * delta_L_rms);
}

CavityResponse::CavityResponse(const CavityConfig& config, AbsorptionModel model)
    : derived_(derive(config, model)), wavelength_(config.wavelength_lambda) {
  r1_ = std::sqrt(config.mirror_reflectivity_R1);
  r2_ = std::sqrt(config.mirror_reflectivity_R2);
  g_ = std::sqrt(1.0 - derived_.intracavity_loss);
  t1t2_sqrt_g_ = std::sqrt((1.0 - config.mirror_reflectivity_R1) * (1.0 - config.mirror_reflectivity_R2) * g_);
  phase_per_hz_ = kTwoPi / derived_.fsr;
  // One FSR of detuning corresponds to lambda / 2 of length.
  hz_per_m_ = 2.0 * derived_.fsr / wavelength_;
}

std::complex<double> CavityResponse::reflection_at(std::complex<double> e) const {
  const double r2g = r2_ * g_;
  return (-r1_ + r2g * e) / (1.0 - r1_ * r2g * e);
}

double CavityResponse::transmitted_power_at(std::complex<double> e) const {
  return t1t2_sqrt_g_ * t1t2_sqrt_g_ / std::norm(1.0 - r1_ * r2_ * g_ * e);
}

std::complex<double> CavityResponse::reflection(double detuning_hz) const {
  return reflection_at(phasor(detuning_hz));
}

std::complex<double> CavityResponse::transmission(double detuning_hz) const {
  const double phi = phase_per_hz_ * detuning_hz;
  const std::complex<double> e = std::polar(1.0, phi);
  return t1t2_sqrt_g_ * std::polar(1.0, 0.5 * phi) / (1.0 - r1_ * r2_ * g_ * e);
}

double CavityResponse::transmitted_power(double detuning_hz) const {
  return transmitted_power_at(phasor(detuning_hz));
}

std::complex<double> reflection_coefficient(const CavityConfig& config, double detuning_hz) {
  return CavityResponse(config).reflection(detuning_hz);
}

CavityConfig cavity_preset(const std::string& name) {
  CavityConfig c;
  if (name == "bare") return c;
  if (name == "diamond") {
    // 0.5 mm slab at n = 2.4; the air gap is chosen so that the optical
    // length (air gap + n d) is 27.3 mm.
    c.diamond_thickness_d = 0.5e-3;
    c.refractive_index_n = 2.4;
    c.air_gap_length = 27.3e-3 - c.refractive_index_n * c.diamond_thickness_d;
    c.coating_aperture_D = 3e-3;
    c.surface_roughness_Rq = 1.5e-9;
    c.absorption_alpha = 0.15;
    c.ar_residual_reflectivity = 0.0025;
    return c;
  }
  throw ValidationError("cavity: unknown preset '" + name + "'");
}

std::vector<std::string> cavity_preset_names() { return {"bare", "diamond"}; }

} // namespace cavlock
