#include "eraki/sampling.hpp"

#include "eraki/layout.hpp"

#include <numeric>

namespace eraki {

using nlohmann::json;

namespace {

long floor_mod(long a, long b) { return a - b * floor_div(a, b); }

void check_pattern(const std::array<std::size_t, 2>& extents, std::size_t r1, std::size_t r2, std::size_t shift,
                   const AcsBox& acs) {
  if (extents[0] == 0 || extents[1] == 0) throw DataError("mask extents must be positive");
  if (r1 < 1 || r2 < 1) throw DataError("acceleration factors must be >= 1");
  if (shift >= r2 && !(shift == 0 && r2 == 1))
    throw DataError("CAIPI shift " + std::to_string(shift) + " must be below R2=" + std::to_string(r2));
  if (!acs.empty())
    for (int d = 0; d < 2; ++d)
      if (acs.start[d] + acs.length[d] > extents[d])
        throw DataError("ACS box exceeds mask extent on pattern axis " + std::to_string(d));
}

// Expands a 2-D predicate over the pattern axes of `x`, calling fn(flat, i, j).
template <class Fn>
void for_each_pattern_index(const CTensor& x, const std::array<Axis, 2>& axes, Fn&& fn) {
  const std::size_t a0 = x.axis_index(axes[0]);
  const std::size_t a1 = x.axis_index(axes[1]);
  const Shape& shape = x.shape();
  const std::size_t r = x.rank();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    fn(n, idx[a0], idx[a1]);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
}

void check_axes_match(const CTensor& x, const SamplingMask& m) {
  for (int d = 0; d < 2; ++d) {
    if (!x.has_axis(m.axes()[d]))
      throw DataError("k-space lacks mask axis '" + std::string(axis_name(m.axes()[d])) + "'");
    if (x.extent(m.axes()[d]) != m.extents()[d])
      throw DataError("k-space extent on axis '" + std::string(axis_name(m.axes()[d])) + "' is " +
                      std::to_string(x.extent(m.axes()[d])) + ", mask has " + std::to_string(m.extents()[d]));
  }
}

CTensor shear(const CTensor& x, std::array<Axis, 2> axes, std::size_t r1, std::size_t r2, std::size_t shift,
              int direction) {
  const std::size_t ncol = x.extent(axes[1]);
  if (shift != 0 && ncol % r2 != 0)
    throw DataError("deshear needs the column extent (" + std::to_string(ncol) + ") to be a multiple of R2=" +
                    std::to_string(r2));
  const std::size_t a1 = x.axis_index(axes[1]);
  const std::size_t col_stride = x.strides()[a1];
  CTensor y(x.axes(), x.shape());
  for_each_pattern_index(x, axes, [&](std::size_t n, std::size_t i, std::size_t j) {
    const long move = static_cast<long>(shift * (i / r1)) * direction;
    const std::size_t dst = static_cast<std::size_t>(floor_mod(static_cast<long>(j) - move, static_cast<long>(ncol)));
    y[n - j * col_stride + dst * col_stride] = x[n];
  });
  return y;
}

}  // namespace

AcsBox centered_acs(const std::array<std::size_t, 2>& extents, const std::array<std::size_t, 2>& length) {
  AcsBox b;
  for (int d = 0; d < 2; ++d) {
    if (length[d] > extents[d]) throw DataError("ACS length exceeds extent");
    b.start[d] = center_window_start(extents[d], length[d]);
    b.length[d] = length[d];
  }
  return b;
}

bool Pattern::on_lattice(std::size_t i, std::size_t j) const {
  const long di = static_cast<long>(i) - static_cast<long>(origin[0]);
  if (floor_mod(di, static_cast<long>(r1)) != 0) return false;
  const long a = floor_div(di, static_cast<long>(r1));
  const long dj = static_cast<long>(j) - static_cast<long>(origin[1]) - static_cast<long>(shift) * a;
  return floor_mod(dj, static_cast<long>(r2)) == 0;
}

SamplingMask::SamplingMask(std::array<Axis, 2> axes, std::array<std::size_t, 2> extents, Pattern pattern,
                           AcsBox acs)
    : axes_(axes), extents_(extents), pattern_(pattern), acs_(acs) {
  check_pattern(extents, pattern.r1, pattern.r2, pattern.shift, acs);
  if (axes[0] == axes[1]) throw DataError("mask axes must differ");
  sampled_.assign(total(), 0);
  acquirable_.assign(total(), 1);
  for (std::size_t i = 0; i < extents[0]; ++i)
    for (std::size_t j = 0; j < extents[1]; ++j) {
      const std::size_t n = i * extents[1] + j;
      if (pattern.elliptical && !inside_ellipse(extents, i, j)) acquirable_[n] = 0;
      if (acquirable_[n] && pattern.on_lattice(i, j)) sampled_[n] = 1;
      if (acs.contains(i, j)) {
        sampled_[n] = 1;
        acquirable_[n] = 1;
      }
    }
}

std::size_t SamplingMask::sampled_count() const {
  return static_cast<std::size_t>(std::accumulate(sampled_.begin(), sampled_.end(), 0L));
}

std::size_t SamplingMask::acquirable_count() const {
  return static_cast<std::size_t>(std::accumulate(acquirable_.begin(), acquirable_.end(), 0L));
}

std::size_t SamplingMask::acs_extra_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < extents_[0]; ++i)
    for (std::size_t j = 0; j < extents_[1]; ++j)
      if (acs_.contains(i, j) && !pattern_.on_lattice(i, j)) ++n;
  return n;
}

CTensor SamplingMask::to_tensor() const {
  CTensor t({axes_[0], axes_[1]}, {extents_[0], extents_[1]});
  for (std::size_t n = 0; n < total(); ++n) t[n] = sampled_[n] ? 1.0 : 0.0;
  return t;
}

json SamplingMask::descriptor() const {
  return json{{"axes", {std::string(axis_name(axes_[0])), std::string(axis_name(axes_[1]))}},
              {"extents", extents_},
              {"R1", pattern_.r1},
              {"R2", pattern_.r2},
              {"caipi_shift", pattern_.shift},
              {"origin", pattern_.origin},
              {"elliptical", pattern_.elliptical},
              {"acs_box", {{"start", acs_.start}, {"length", acs_.length}}},
              {"sampled", sampled_count()},
              {"net_acceleration", net_acceleration(*this)}};
}

SamplingMask SamplingMask::from_descriptor(const json& d, const CTensor* payload) {
  SamplingMask m;
  try {
    const auto axes = d.at("axes").get<std::vector<std::string>>();
    if (axes.size() != 2) throw DataError("mask descriptor needs two axes");
    Pattern p;
    p.r1 = d.at("R1").get<std::size_t>();
    p.r2 = d.at("R2").get<std::size_t>();
    p.shift = d.at("caipi_shift").get<std::size_t>();
    p.origin = d.value("origin", std::array<std::size_t, 2>{0, 0});
    p.elliptical = d.at("elliptical").get<bool>();
    AcsBox acs;
    acs.start = d.at("acs_box").at("start").get<std::array<std::size_t, 2>>();
    acs.length = d.at("acs_box").at("length").get<std::array<std::size_t, 2>>();
    m = SamplingMask({parse_axis(axes[0]), parse_axis(axes[1])},
                     d.at("extents").get<std::array<std::size_t, 2>>(), p, acs);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed mask descriptor: ") + e.what());
  }
  if (payload) {
    if (payload->shape() != Shape{m.extents_[0], m.extents_[1]})
      throw DataError("mask payload shape disagrees with its descriptor");
    for (std::size_t n = 0; n < m.total(); ++n)
      if ((payload->data()[n].real() != 0) != (m.sampled_[n] != 0))
        throw DataError("mask payload disagrees with its descriptor");
  }
  return m;
}

SamplingMask SamplingMask::with_origin(std::array<std::size_t, 2> origin) const {
  Pattern p = pattern_;
  p.origin = origin;
  return SamplingMask(axes_, extents_, p, acs_);
}

SamplingMask make_uniform_mask(std::array<std::size_t, 2> extents, std::size_t r1, std::size_t r2,
                               std::size_t shift, AcsBox acs, std::array<Axis, 2> axes) {
  Pattern p;
  p.r1 = r1;
  p.r2 = r2;
  p.shift = shift;
  return SamplingMask(axes, extents, p, acs);
}

SamplingMask make_elliptical_mask(std::array<std::size_t, 2> extents, std::size_t r1, std::size_t r2,
                                  std::size_t shift, AcsBox acs, std::array<Axis, 2> axes) {
  Pattern p;
  p.r1 = r1;
  p.r2 = r2;
  p.shift = shift;
  p.elliptical = true;
  return SamplingMask(axes, extents, p, acs);
}

SamplingMask make_kyt_mask(std::size_t ny, std::size_t nt, std::size_t r, std::size_t shift, AcsBox acs) {
  if (r < 1) throw DataError("ky-t acceleration must be >= 1");
  Pattern p;
  p.r1 = 1;
  p.r2 = r;
  p.shift = r > 1 ? shift % r : 0;
  return SamplingMask({Axis::t, Axis::ky}, {nt, ny}, p, acs);
}

std::vector<SamplingMask> echo_shifted_masks(const SamplingMask& base, std::size_t echoes) {
  std::vector<SamplingMask> out;
  const Pattern& p = base.pattern();
  for (std::size_t e = 0; e < echoes; ++e) {
    auto origin = p.origin;
    if (p.r2 > 1)
      origin[1] = (origin[1] + e) % p.r2;
    else
      origin[0] = (origin[0] + e) % p.r1;
    out.push_back(base.with_origin(origin));
  }
  return out;
}

CTensor apply_mask(const CTensor& kspace, const SamplingMask& mask) {
  check_axes_match(kspace, mask);
  CTensor y = kspace;
  for_each_pattern_index(kspace, mask.axes(), [&](std::size_t n, std::size_t i, std::size_t j) {
    if (!mask.sampled(i, j)) y[n] = 0.0;
  });
  return y;
}

CTensor extract_acs(const CTensor& kspace, const SamplingMask& mask) {
  check_axes_match(kspace, mask);
  const AcsBox& box = mask.acs();
  if (box.empty()) throw DataError("mask has no ACS box");
  const std::size_t a0 = kspace.axis_index(mask.axes()[0]);
  const std::size_t a1 = kspace.axis_index(mask.axes()[1]);
  Shape shape = kspace.shape();
  shape[a0] = box.length[0];
  shape[a1] = box.length[1];
  CTensor out(kspace.axes(), shape);
  const Shape ks = kspace.strides();
  const std::size_t r = kspace.rank();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t n = 0; n < out.size(); ++n) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < r; ++d) {
      std::size_t v = idx[d];
      if (d == a0) v += box.start[0];
      if (d == a1) v += box.start[1];
      src += v * ks[d];
    }
    out[n] = kspace[src];
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

CTensor deshear(const CTensor& x, std::array<Axis, 2> axes, std::size_t r1, std::size_t r2, std::size_t shift) {
  return shear(x, axes, r1, r2, shift, +1);
}

CTensor reshear(const CTensor& x, std::array<Axis, 2> axes, std::size_t r1, std::size_t r2, std::size_t shift) {
  return shear(x, axes, r1, r2, shift, -1);
}

SamplingMask deshear(const SamplingMask& m) {
  const Pattern& p = m.pattern();
  if (p.shift != 0 && m.extents()[1] % p.r2 != 0)
    throw DataError("deshear needs the column extent to be a multiple of R2");
  if (p.origin != std::array<std::size_t, 2>{0, 0} || !m.acs().empty())
    throw DataError("mask deshear is defined for origin-anchored patterns without ACS");
  Pattern q = p;
  q.shift = 0;
  return SamplingMask(m.axes(), m.extents(), q, m.acs());
}

double net_acceleration(const SamplingMask& m) {
  const std::size_t acquired = m.sampled_count() - m.acs_extra_count();
  if (acquired == 0) return 0.0;
  return static_cast<double>(m.total()) / static_cast<double>(acquired);
}

bool inside_ellipse(std::array<std::size_t, 2> extents, std::size_t i, std::size_t j) {
  double r = 0;
  const std::array<std::size_t, 2> idx{i, j};
  for (int d = 0; d < 2; ++d) {
    const double half = (static_cast<double>(extents[d]) - 1.0) / 2.0;
    if (half <= 0) continue;
    const double u = (static_cast<double>(idx[d]) - half) / half;
    r += u * u;
  }
  return r <= 1.0;
}

double elliptical_factor(std::array<std::size_t, 2> extents) {
  std::size_t inside = 0;
  for (std::size_t i = 0; i < extents[0]; ++i)
    for (std::size_t j = 0; j < extents[1]; ++j) inside += inside_ellipse(extents, i, j) ? 1 : 0;
  return static_cast<double>(extents[0] * extents[1]) / static_cast<double>(inside);
}

}  // namespace eraki
