#include "eraki/layout.hpp"

#include <algorithm>

namespace eraki {

long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

CTensor to_canonical(const CTensor& x, const std::array<Axis, 2>& pattern_axes, CanonicalLayout* layout) {
  CanonicalLayout lay;
  lay.original = x.axes();
  if (!x.has_axis(Axis::coil)) throw DataError("k-space needs a coil axis");
  for (Axis a : pattern_axes)
    if (!x.has_axis(a)) throw DataError("k-space lacks pattern axis '" + std::string(axis_name(a)) + "'");
  std::vector<Axis> rest;
  for (Axis a : x.axes())
    if (a != Axis::coil && a != Axis::echo && a != pattern_axes[0] && a != pattern_axes[1]) rest.push_back(a);
  if (rest.size() > 1) throw DataError("k-space has more than one non-pattern spatial axis");

  CTensor y = x;
  lay.had_echo = x.has_axis(Axis::echo);
  if (!lay.had_echo) y = insert_axis(y, Axis::echo, 0);
  if (rest.empty()) {
    lay.had_read = false;
    for (Axis cand : {Axis::kx, Axis::ky, Axis::kz, Axis::t})
      if (!y.has_axis(cand)) {
        lay.read = cand;
        break;
      }
    y = insert_axis(y, lay.read, 0);
  } else {
    lay.read = rest.front();
  }
  if (layout) *layout = lay;
  return permute(y, {Axis::coil, Axis::echo, lay.read, pattern_axes[0], pattern_axes[1]});
}

CTensor from_canonical(const CTensor& x, const CanonicalLayout& layout) {
  CTensor y = x;
  if (!layout.had_echo) {
    if (y.extent(Axis::echo) != 1) throw DataError("cannot drop a non-unit echo axis");
    y = squeeze_axis(y, Axis::echo);
  }
  if (!layout.had_read) y = squeeze_axis(y, layout.read);
  return permute(y, layout.original);
}

Lattice Lattice::of(const Pattern& p) {
  Lattice l;
  l.r1 = static_cast<long>(p.r1);
  l.r2 = static_cast<long>(p.r2);
  l.shift = static_cast<long>(p.shift);
  l.o0 = static_cast<long>(p.origin[0]);
  l.o1 = static_cast<long>(p.origin[1]);
  return l;
}

Lattice::Cell Lattice::cell_of(long i, long j) const {
  Cell c;
  c.a = floor_div(i - o0, r1);
  c.dy = i - o0 - r1 * c.a;
  const long jj = j - o1 - shift * c.a;
  c.b = floor_div(jj, r2);
  c.dz = jj - r2 * c.b;
  return c;
}

Lattice::Range Lattice::covering(long n0, long n1) const {
  Range r;
  r.a_lo = floor_div(0 - o0, r1);
  r.a_hi = floor_div(n0 - 1 - o0, r1);
  r.b_lo = std::numeric_limits<long>::max();
  r.b_hi = std::numeric_limits<long>::min();
  for (long a = r.a_lo; a <= r.a_hi; ++a) {
    r.b_lo = std::min(r.b_lo, floor_div(0 - o1 - shift * a, r2));
    r.b_hi = std::max(r.b_hi, floor_div(n1 - 1 - o1 - shift * a, r2));
  }
  return r;
}

}  // namespace eraki
