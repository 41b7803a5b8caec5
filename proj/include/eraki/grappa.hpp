#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "eraki/sampling.hpp"
#include "eraki/tensor.hpp"

namespace eraki {

// Source footprint: acquired lattice blocks along each pattern axis times
// contiguous readout taps. Axes with unit extent collapse to one block.
struct GrappaGeometry {
  std::size_t blocks0 = 4;
  std::size_t blocks1 = 4;
  std::size_t read_taps = 5;
};

inline constexpr double kGrappaLambda = 1e-9;

struct GrappaKernel {
  std::array<Axis, 2> axes{Axis::ky, Axis::kz};
  Pattern pattern;  // origin is ignored: kernels are shift invariant
  std::size_t coils = 0;
  GrappaGeometry geometry;
  double lambda = kGrappaLambda;
  // Offsets (p0, p1, read) of the sources relative to a lattice node.
  std::vector<std::array<long, 3>> sources;
  // Missing offsets (dy, dz) inside a lattice cell, (0, 0) excluded.
  std::vector<std::array<long, 2>> targets;
  // One [coils * sources.size(), coils] matrix per target; row index is
  // source * coils + coil.
  std::vector<Eigen::MatrixXcd> weights;
  std::size_t windows = 0;
};

// Fits one weight matrix per missing offset by Tikhonov-regularized least
// squares over every ACS position where the whole footprint fits:
//   (A^H A + lambda * mean(diag(A^H A)) I) W = A^H B.
// `acs` holds coil, read and the two pattern axes (no echo axis, or a unit one).
GrappaKernel grappa_calibrate(const CTensor& acs, const std::array<Axis, 2>& axes, const Pattern& pattern,
                              GrappaGeometry geometry = {}, double lambda = kGrappaLambda);
GrappaKernel grappa_calibrate(const CTensor& acs, const SamplingMask& mask, GrappaGeometry geometry = {},
                              double lambda = kGrappaLambda);

// Fills every unsampled, acquirable position; sampled entries pass through
// untouched and never-acquired corners stay zero. Sources outside the grid
// wrap around (discrete k-space is periodic); unsampled ones read as zero.
CTensor grappa_apply(const CTensor& kspace_masked, const SamplingMask& mask, const GrappaKernel& kernel);

// Calibrate on the mask's ACS (optionally restricted to a centered readout
// window of `read_acs` samples) and apply. Echo axes are reconstructed one
// echo at a time.
CTensor grappa_recon(const CTensor& kspace_masked, const SamplingMask& mask, GrappaGeometry geometry = {},
                     double lambda = kGrappaLambda, std::size_t read_acs = 0);

// kx-ky-t GRAPPA on [coil, kx, ky, t] data with a ky-t mask: the same engine
// with t as the row axis.
CTensor grappa_kyt(const CTensor& kspace_masked, const SamplingMask& mask, GrappaGeometry geometry = {},
                   double lambda = kGrappaLambda, std::size_t read_acs = 0);

}  // namespace eraki
