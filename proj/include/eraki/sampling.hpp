#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "eraki/tensor.hpp"

namespace eraki {

// Box over the two pattern axes, in mask axis order.
struct AcsBox {
  std::array<std::size_t, 2> start{0, 0};
  std::array<std::size_t, 2> length{0, 0};
  bool empty() const { return length[0] == 0 || length[1] == 0; }
  bool contains(std::size_t i, std::size_t j) const {
    return i >= start[0] && i < start[0] + length[0] && j >= start[1] && j < start[1] + length[1];
  }
};

// Centered ACS box of the given lengths (same placement as crop_center).
AcsBox centered_acs(const std::array<std::size_t, 2>& extents, const std::array<std::size_t, 2>& length);

// Lattice: (i - origin0) % r1 == 0 and
//          (j - origin1 - shift * floor((i - origin0) / r1)) % r2 == 0.
struct Pattern {
  std::size_t r1 = 1;
  std::size_t r2 = 1;
  std::size_t shift = 0;
  std::array<std::size_t, 2> origin{0, 0};
  bool elliptical = false;

  bool on_lattice(std::size_t i, std::size_t j) const;
  std::size_t cell_size() const { return r1 * r2; }
};

// Boolean grid over two phase-encode (or ky-t) axes. Row axis is axes[0]; the
// CAIPI shift moves the column axis (axes[1]) per block of r1 rows.
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(std::array<Axis, 2> axes, std::array<std::size_t, 2> extents, Pattern pattern, AcsBox acs);

  const std::array<Axis, 2>& axes() const { return axes_; }
  const std::array<std::size_t, 2>& extents() const { return extents_; }
  const Pattern& pattern() const { return pattern_; }
  const AcsBox& acs() const { return acs_; }

  bool sampled(std::size_t i, std::size_t j) const { return sampled_[i * extents_[1] + j] != 0; }
  // False for the never-acquired corners of an elliptical pattern.
  bool acquirable(std::size_t i, std::size_t j) const { return acquirable_[i * extents_[1] + j] != 0; }

  std::size_t total() const { return extents_[0] * extents_[1]; }
  std::size_t sampled_count() const;
  std::size_t acquirable_count() const;
  // Sampled positions inside the ACS box that are not on the lattice.
  std::size_t acs_extra_count() const;

  // 0/1 tensor over axes().
  CTensor to_tensor() const;
  nlohmann::json descriptor() const;
  // Rebuilds from a descriptor; if `payload` is given it must agree exactly.
  static SamplingMask from_descriptor(const nlohmann::json& d, const CTensor* payload = nullptr);

  // Same pattern with the lattice origin moved by `delta` (used for the
  // per-echo shifted patterns of joint reconstruction).
  SamplingMask with_origin(std::array<std::size_t, 2> origin) const;

  bool operator==(const SamplingMask& o) const {
    return axes_ == o.axes_ && extents_ == o.extents_ && sampled_ == o.sampled_ && acquirable_ == o.acquirable_;
  }

 private:
  std::array<Axis, 2> axes_{Axis::ky, Axis::kz};
  std::array<std::size_t, 2> extents_{0, 0};
  Pattern pattern_;
  AcsBox acs_;
  std::vector<std::uint8_t> sampled_;
  std::vector<std::uint8_t> acquirable_;
};

SamplingMask make_uniform_mask(std::array<std::size_t, 2> extents, std::size_t r1, std::size_t r2,
                               std::size_t shift, AcsBox acs = {},
                               std::array<Axis, 2> axes = {Axis::ky, Axis::kz});

// Uniform lattice intersected with the inscribed ellipse (center and semi-axes
// (n-1)/2). Positions outside are never acquired.
SamplingMask make_elliptical_mask(std::array<std::size_t, 2> extents, std::size_t r1, std::size_t r2,
                                  std::size_t shift, AcsBox acs = {},
                                  std::array<Axis, 2> axes = {Axis::ky, Axis::kz});

// ky-t CAIPI: at time t the sampled ky are (ky - shift * t) % r == 0. The mask
// axes are (t, ky); `acs` is given in that order.
SamplingMask make_kyt_mask(std::size_t ny, std::size_t nt, std::size_t r, std::size_t shift, AcsBox acs = {});

// Per-echo patterns for joint reconstruction: echo e moves the lattice origin
// by e along the column axis (row axis when r2 == 1).
std::vector<SamplingMask> echo_shifted_masks(const SamplingMask& base, std::size_t echoes);

// Zeroes unsampled entries, broadcasting over all non-pattern axes.
CTensor apply_mask(const CTensor& kspace, const SamplingMask& mask);
// Crops the pattern axes to the ACS box; other axes are kept whole.
CTensor extract_acs(const CTensor& kspace, const SamplingMask& mask);

// Circularly shifts the column axis by -shift * floor(row / r1) so a CAIPI
// lattice becomes rectangular. Requires the column extent to be a multiple of
// r2 whenever shift != 0.
CTensor deshear(const CTensor& x, std::array<Axis, 2> axes, std::size_t r1, std::size_t r2, std::size_t shift);
CTensor reshear(const CTensor& x, std::array<Axis, 2> axes, std::size_t r1, std::size_t r2, std::size_t shift);
SamplingMask deshear(const SamplingMask& m);

// total / (sampled - ACS extras).
double net_acceleration(const SamplingMask& m);
// Full grid size over the inscribed-ellipse count.
double elliptical_factor(std::array<std::size_t, 2> extents);
bool inside_ellipse(std::array<std::size_t, 2> extents, std::size_t i, std::size_t j);

}  // namespace eraki
