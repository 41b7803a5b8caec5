#pragma once

#include <vector>

#include "eraki/tensor.hpp"

namespace eraki {

inline constexpr double kMinDecayMs = 0.1;
inline constexpr double kMaxDecayMs = 10000.0;

// Real-valued maps over the non-echo axes of the input (imaginary parts zero).
struct FitResult {
  CTensor t2;     // ms, 0 on invalid voxels
  CTensor s0;
  CTensor r2;     // coefficient of determination
  CTensor valid;  // 1 where every echo exceeds the threshold
};

// Log-linear fit of ln S = ln S0 - TE / T per voxel. `echo_images` carries an
// echo axis; magnitudes are used. Echoes are fitted in ascending TE order, so
// permuting echoes together with `te_ms` gives bit-identical maps. Flat or
// rising signals clamp T to kMaxDecayMs; a zero-variance fit has r2 = 1.
FitResult fit_decay(const CTensor& echo_images, const std::vector<double>& te_ms, double threshold = 0.0);

}  // namespace eraki
