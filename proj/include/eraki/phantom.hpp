#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "eraki/tensor.hpp"

namespace eraki {

struct Ellipsoid {
  std::array<double, 3> center{};     // voxels
  std::array<double, 3> semi_axes{};  // voxels
  cplx amplitude{1.0, 0.0};
  double t2_ms = 80.0;
  double t2star_ms = 40.0;
};

enum class EchoType { spin, gradient };
enum class CoilModel { smooth, compact };

struct CoilParams {
  CoilModel model = CoilModel::smooth;
  // smooth model: lobe centers on a circle of this radius (fraction of FOV),
  // Gaussian width (fraction of FOV), and peak linear-phase excursion (rad).
  double radius = 0.55;
  double width = 0.45;
  double phase_ramp = 1.0;
  // compact model: k-space support per axis (odd).
  std::size_t support = 3;
};

struct PhantomSpec {
  std::array<std::size_t, 3> extents{32, 32, 8};  // (kx, ky, kz)
  std::vector<Ellipsoid> ellipsoids;
  std::size_t coils = 8;
  CoilParams coil;
  std::vector<double> te_ms{0.0};
  EchoType echo_type = EchoType::spin;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  CTensor kspace;       // [coil, echo, kx, ky, kz]
  CTensor images;       // [coil, echo, kx, ky, kz]
  CTensor sens_true;    // [coil, kx, ky, kz], sum_c |C_c|^2 = 1
  CTensor combined;     // [echo, kx, ky, kz], coil-combined truth
  CTensor t2_true;      // [kx, ky, kz] (ms, real), 0 outside objects
  CTensor t2star_true;  // [kx, ky, kz] (ms, real)
  CTensor support;      // [kx, ky, kz] 1 inside any ellipsoid, else 0
};

// A nested head-like arrangement sized to the grid: an outer shell plus three
// inner regions with T2 of 30, 50 and 80 ms.
std::vector<Ellipsoid> default_ellipsoids(const std::array<std::size_t, 3>& extents);

void validate(const PhantomSpec& spec);

// Voxel-center rasterization, later ellipsoids overwrite earlier ones.
Phantom make_phantom(const PhantomSpec& spec);

// Coil maps whose k-space is random complex noise on a centered `support`
// window (1 along unit axes). Returns [coil, kx, ky, kz], not normalized.
CTensor make_compact_coils(const std::array<std::size_t, 3>& extents, std::size_t coils,
                           std::size_t support, std::uint64_t seed);

// Smooth Gaussian-lobe maps, normalized to unit root-sum-of-squares.
CTensor make_smooth_coils(const std::array<std::size_t, 3>& extents, std::size_t coils,
                          const CoilParams& params, std::uint64_t seed);

}  // namespace eraki
