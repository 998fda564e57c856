#pragma once

#include "cavlock/losses.hpp"

#include <complex>
#include <string>
#include <vector>

namespace cavlock {

// Plano-concave Fabry-Perot cavity, optionally with a slab (diamond) whose
// HR-coated back face is the flat mirror. SI units except absorption_alpha,
// which is a decadic attenuation coefficient in cm^-1.
struct CavityConfig {
  double wavelength_lambda = 737e-9;
  double air_gap_length = 32.5e-3;
  double diamond_thickness_d = 0.0;
  double refractive_index_n = 1.0;
  double mirror_reflectivity_R1 = 0.99;
  double mirror_reflectivity_R2 = 0.99;
  double roc_top_mirror = 0.25;
  double coating_aperture_D = 10e-3;
  double surface_roughness_Rq = 0.0;
  double absorption_alpha = 0.0;
  double ar_residual_reflectivity = 0.0;

  double geometric_length() const { return air_gap_length + diamond_thickness_d; }
  double optical_length() const { return air_gap_length + refractive_index_n * diamond_thickness_d; }
};

struct IntracavityLosses {
  double scattering_roundtrip = 0.0; // two passes off the coated slab surface
  double absorption = 0.0;
  double clipping = 0.0;
  double ar_residual = 0.0; // AR face reflection, lost twice per round trip
  double total() const { return scattering_roundtrip + absorption + clipping + ar_residual; }
};

struct DerivedCavity {
  double optical_length = 0.0;
  double geometric_length = 0.0;
  double fsr = 0.0;
  double finesse = 0.0;
  double finesse_small_loss = 0.0; // 2 pi / round_trip_loss_total
  double linewidth_fwhm = 0.0;
  double quality_factor = 0.0;
  double beam_waist_w0 = 0.0;
  double mode_volume = 0.0;
  double mirror_loss = 0.0;
  double intracavity_loss = 0.0;
  double round_trip_loss_total = 0.0;
  double linewidth_in_length_DeltaL = 0.0;
};

// Throws ValidationError on violated invariants, including unstable geometry.
void validate(const CavityConfig& config);

double beam_waist(const CavityConfig& config);
IntracavityLosses intracavity_losses(const CavityConfig& config,
                                     AbsorptionModel model = AbsorptionModel::Decadic);

// Finesse from the exact Airy relation for round-trip amplitude factor a.
double airy_finesse(double roundtrip_amplitude);

DerivedCavity derive(const CavityConfig& config, AbsorptionModel model = AbsorptionModel::Decadic);

// Largest finesse whose half-linewidth in length, lambda / (2 F), still
// exceeds the given rms length fluctuation.
double max_lockable_finesse(double delta_L_rms, double lambda);

// Steady-state field response around a longitudinal resonance. Detuning is the
// laser-minus-resonance frequency offset in Hz; the response is FSR periodic.
class CavityResponse {
public:
  explicit CavityResponse(const CavityConfig& config,
                          AbsorptionModel model = AbsorptionModel::Decadic);

  std::complex<double> reflection(double detuning_hz) const;
  std::complex<double> transmission(double detuning_hz) const;
  double transmitted_power(double detuning_hz) const;

  // Same responses for a precomputed round-trip phasor exp(i phi), with
  // phi = 2 pi detuning / FSR. Lets callers reuse one phasor for several
  // quantities at the same detuning.
  std::complex<double> phasor(double detuning_hz) const { return std::polar(1.0, phase_per_hz_ * detuning_hz); }
  std::complex<double> reflection_at(std::complex<double> phasor) const;
  double transmitted_power_at(std::complex<double> phasor) const;

  // Maps a cavity length change to the equivalent frequency detuning.
  double detuning_from_length(double delta_length_m) const { return hz_per_m_ * delta_length_m; }
  double length_from_detuning(double detuning_hz) const { return detuning_hz / hz_per_m_; }

  const DerivedCavity& derived() const { return derived_; }
  double wavelength() const { return wavelength_; }
  double r1() const { return r1_; }
  double r2() const { return r2_; }
  double roundtrip_gain() const { return g_; }

private:
  DerivedCavity derived_;
  double wavelength_;
  double r1_, r2_, g_;
  double t1t2_sqrt_g_;
  double phase_per_hz_;
  double hz_per_m_;
};

std::complex<double> reflection_coefficient(const CavityConfig& config, double detuning_hz);

CavityConfig cavity_preset(const std::string& name);
std::vector<std::string> cavity_preset_names();

} // namespace cavlock
