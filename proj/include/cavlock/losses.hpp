#pragma once

namespace cavlock {

enum class AbsorptionModel {
  Decadic, // 1 - 10^(-2 d alpha)
  Natural, // 1 - exp(-2 d alpha)
};

// Total integrated scattering of one pass off a surface with rms roughness
// `roughness_m`, evaluated at the wavelength inside a medium of index n.
double scattering_loss(double roughness_m, double wavelength_m, double refractive_index);

// Round trip through a slab of thickness `thickness_m`; alpha in cm^-1.
double absorption_loss(double alpha_per_cm, double thickness_m,
                       AbsorptionModel model = AbsorptionModel::Decadic);

// Inverse of absorption_loss: alpha (cm^-1) giving the round-trip loss.
double absorption_coefficient(double roundtrip_loss, double thickness_m,
                              AbsorptionModel model = AbsorptionModel::Decadic);

// Power outside a circular aperture of diameter D for a Gaussian of waist w0.
double clipping_loss(double aperture_diameter_m, double waist_m);

} // namespace cavlock
