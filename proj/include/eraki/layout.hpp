#pragma once

#include <array>

#include "eraki/sampling.hpp"
#include "eraki/tensor.hpp"

namespace eraki {

// Canonical working order for reconstruction: [coil, echo, read, p0, p1],
// where (p0, p1) are the mask's pattern axes and `read` is the single
// remaining, fully sampled axis.
struct CanonicalLayout {
  AxisList original;
  Axis read = Axis::kx;
  bool had_echo = false;
  bool had_read = true;
};

CTensor to_canonical(const CTensor& x, const std::array<Axis, 2>& pattern_axes, CanonicalLayout* layout);
CTensor from_canonical(const CTensor& x, const CanonicalLayout& layout);

// Integer lattice of a sampling pattern. Node (a, b) sits at
// (r1*a + o0, r2*b + shift*a + o1); every grid point belongs to exactly one
// node's cell, at offset (dy, dz) in [0, r1) x [0, r2).
struct Lattice {
  long r1 = 1, r2 = 1, shift = 0, o0 = 0, o1 = 0;

  static Lattice of(const Pattern& p);

  std::array<long, 2> position(long a, long b) const { return {r1 * a + o0, r2 * b + shift * a + o1}; }
  // Grid offset of the point one node step (da, db) away.
  std::array<long, 2> step(long da, long db) const { return {r1 * da, r2 * db + shift * da}; }

  struct Cell {
    long a, b, dy, dz;
  };
  Cell cell_of(long i, long j) const;
  long offset_index(long dy, long dz) const { return dy * r2 + dz; }
  long cell_size() const { return r1 * r2; }

  // Node index ranges [lo, hi] whose cells cover the grid [0,n0) x [0,n1).
  struct Range {
    long a_lo, a_hi, b_lo, b_hi;
  };
  Range covering(long n0, long n1) const;
};

long floor_div(long a, long b);

}  // namespace eraki
