#pragma once

#include <vector>

#include "eraki/tensor.hpp"

namespace eraki {

struct EspiritParams {
  std::size_t kernel = 6;  // calibration window per calibration axis
  double tau = 0.01;       // keep singular values >= tau * sigma_max
  double gamma = 0.9;      // zero maps where the leading eigenvalue is below
};

struct SensitivityMaps {
  CTensor maps;    // [coil, spatial...], spatial axes in input order
  CTensor eigval;  // [spatial...], real
  EspiritParams params;
};

// Hybrid ESPIRiT. The ACS is inverse transformed along the readout (the one
// spatial axis not in `cal_axes`, if any); each readout position is then
// calibrated on kernel x kernel windows over `cal_axes`. Any other axis (echo,
// t) is pooled into the calibration rows and absent from the output.
//
// `out` sets output extents per spatial axis; missing entries keep the ACS
// extent. Larger extents give full-resolution maps.
SensitivityMaps espirit_maps(const CTensor& acs, const std::vector<Axis>& cal_axes,
                             const EspiritParams& params = {}, const ExtentMap& out = {});

// m(r) = sum_c conj(C_c(r)) x_c(r). `images` may carry axes the maps lack
// (echo, t); the combine broadcasts over them.
CTensor coil_combine(const CTensor& images, const CTensor& maps);

// Coil-combined k-space of the ACS: zero-pad to the map grid, combine in image
// space, transform back and crop to the ACS extents. With maps on the ACS grid
// no padding happens.
CTensor make_combo_target(const CTensor& acs, const CTensor& maps);

// Spatial axes (kx, ky, kz) of x, in order.
std::vector<Axis> spatial_axes(const CTensor& x);

}  // namespace eraki
