#include "eraki/recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace eraki {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string ext_str(const Ext3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

// Canonical [coil, echo, read, p0, p1] view with plain index arithmetic.
struct Grid {
  CTensor t;
  CanonicalLayout layout;
  std::size_t coils, echoes, read, n0, n1;

  Grid(const CTensor& x, const std::array<Axis, 2>& axes) {
    t = to_canonical(x, axes, &layout);
    const Shape& s = t.shape();
    coils = s[0], echoes = s[1], read = s[2], n0 = s[3], n1 = s[4];
  }
  std::size_t index(std::size_t c, std::size_t e, std::size_t x, std::size_t i, std::size_t j) const {
    return (((c * echoes + e) * read + x) * n0 + i) * n1 + j;
  }
};

CTensor with_coil(const CTensor& x) {
  if (x.has_axis(Axis::coil)) throw DataError("expected a tensor without a coil axis");
  return insert_axis(x, Axis::coil, 0);
}

// Lattice restricted to node ranges covering a region, shared by all groups.
struct NodeRange {
  long a_lo, a_hi, b_lo, b_hi;
  long na() const { return a_hi - a_lo + 1; }
  long nb() const { return b_hi - b_lo + 1; }
};

NodeRange cover(const Lattice& lat, const std::vector<std::array<long, 2>>& shifts, long n0, long n1) {
  NodeRange r{std::numeric_limits<long>::max(), std::numeric_limits<long>::min(), std::numeric_limits<long>::max(),
              std::numeric_limits<long>::min()};
  for (auto& s : shifts) {
    Lattice l = lat;
    l.o0 += s[0];
    l.o1 += s[1];
    const auto c = l.covering(n0, n1);
    r.a_lo = std::min(r.a_lo, c.a_lo), r.a_hi = std::max(r.a_hi, c.a_hi);
    r.b_lo = std::min(r.b_lo, c.b_lo), r.b_hi = std::max(r.b_hi, c.b_hi);
  }
  return r;
}

Ext3 half(const Ext3& rf) { return {(rf[0] - 1) / 2, (rf[1] - 1) / 2, (rf[2] - 1) / 2}; }

}  // namespace

std::string_view mode_name(ReconMode m) {
  switch (m) {
    case ReconMode::raki_percoil:
      return "raki_percoil";
    case ReconMode::eraki:
      return "eraki";
    case ReconMode::eraki_joint:
      return "eraki_joint";
    case ReconMode::eraki_kyt:
      return "eraki_kyt";
  }
  return "?";
}

ReconMode parse_mode(std::string_view s) {
  for (ReconMode m : {ReconMode::raki_percoil, ReconMode::eraki, ReconMode::eraki_joint, ReconMode::eraki_kyt})
    if (mode_name(m) == s) return m;
  throw ConfigError("unknown reconstruction mode \"" + std::string(s) + "\"");
}

OffsetGeometry OffsetGeometry::of(const SamplingMask& mask, std::size_t echoes) {
  OffsetGeometry g;
  g.lattice = Lattice::of(mask.pattern());
  for (long dy = 0; dy < g.lattice.r1; ++dy)
    for (long dz = 0; dz < g.lattice.r2; ++dz) g.offsets.push_back({dy, dz});
  const auto masks = echo_shifted_masks(mask, echoes);
  for (auto& m : masks)
    g.echo_offsets.push_back({static_cast<long>(m.pattern().origin[0]) - g.lattice.o0,
                              static_cast<long>(m.pattern().origin[1]) - g.lattice.o1});
  return g;
}

void ReconProblem::validate() const {
  train.validate();
  const auto& axes = mask.axes();
  if (mode == ReconMode::eraki_kyt && axes != std::array<Axis, 2>{Axis::t, Axis::ky})
    throw DataError("eraki_kyt needs a (t, ky) sampling mask");
  const Grid g(kspace, axes);
  if (g.n0 != mask.extents()[0] || g.n1 != mask.extents()[1])
    throw DataError("k-space pattern extents " + std::to_string(g.n0) + "x" + std::to_string(g.n1) +
                    " differ from the mask " + std::to_string(mask.extents()[0]) + "x" +
                    std::to_string(mask.extents()[1]));
  const auto masks = mode == ReconMode::eraki_joint ? echo_shifted_masks(mask, g.echoes)
                                                    : std::vector<SamplingMask>(g.echoes, mask);
  auto d = g.t.data();
  for (std::size_t c = 0; c < g.coils; ++c)
    for (std::size_t e = 0; e < g.echoes; ++e)
      for (std::size_t x = 0; x < g.read; ++x)
        for (std::size_t i = 0; i < g.n0; ++i)
          for (std::size_t j = 0; j < g.n1; ++j)
            if (!masks[e].sampled(i, j) && d[g.index(c, e, x, i, j)] != cplx{})
              throw DataError("k-space holds data at an unsampled position (echo " + std::to_string(e) + ", " +
                              std::to_string(i) + ", " + std::to_string(j) + ")");
}

OffsetTargetSet build_targets(const CTensor& acs, const CTensor& target, const SamplingMask& mask,
                              Ext3 rf, double scale) {
  const Grid in(acs, mask.axes());
  const Grid tg(with_coil(target), mask.axes());
  const AcsBox& box = mask.acs();
  if (box.empty()) throw DataError("mask has no ACS region");
  if (in.n0 != box.length[0] || in.n1 != box.length[1] || tg.n0 != box.length[0] || tg.n1 != box.length[1] ||
      tg.read != in.read)
    throw DataError("ACS and target extents must match the mask's ACS box");

  OffsetTargetSet set;
  set.geometry = OffsetGeometry::of(mask, in.echoes);
  set.scale = scale;
  const long r = static_cast<long>(set.geometry.cell());
  set.in_channels = 2 * in.coils * in.echoes;
  set.out_channels = 2 * static_cast<std::size_t>(r) * tg.echoes;
  const Ext3 c = half(rf);
  const auto& eoff = set.geometry.echo_offsets;
  const long A0 = static_cast<long>(in.n0), A1 = static_cast<long>(in.n1);
  auto usable = [&](long i, long j) {
    return i >= 0 && j >= 0 && i < A0 && j < A1 &&
           mask.acquirable(box.start[0] + static_cast<std::size_t>(i), box.start[1] + static_cast<std::size_t>(j));
  };
  auto din = in.t.data();
  auto dtg = tg.t.data();

  for (long u0 = 0; u0 < set.geometry.lattice.r1; ++u0)
    for (long u1 = 0; u1 < set.geometry.lattice.r2; ++u1) {
      Lattice lat = set.geometry.lattice;
      lat.o0 = u0;
      lat.o1 = u1;
      const NodeRange nr = cover(lat, eoff, A0, A1);
      const Ext3 ie{static_cast<std::size_t>(nr.na()), static_cast<std::size_t>(nr.nb()), in.read};
      if (ie[0] < rf[0] || ie[1] < rf[1] || ie[2] < rf[2]) continue;
      Sample s;
      s.input = Volume(set.in_channels, ie);
      std::vector<char> node_ok(ie[0] * ie[1], 1);
      for (long a = nr.a_lo; a <= nr.a_hi; ++a)
        for (long b = nr.b_lo; b <= nr.b_hi; ++b) {
          const std::size_t ia = static_cast<std::size_t>(a - nr.a_lo), ib = static_cast<std::size_t>(b - nr.b_lo);
          const auto p = lat.position(a, b);
          for (std::size_t e = 0; e < in.echoes; ++e) {
            const long pi = p[0] + eoff[e][0], pj = p[1] + eoff[e][1];
            if (!usable(pi, pj)) {
              node_ok[ia * ie[1] + ib] = 0;
              continue;
            }
            for (std::size_t x = 0; x < in.read; ++x) {
              const auto col = static_cast<Eigen::Index>(s.input.pos(ia, ib, x));
              for (std::size_t ch = 0; ch < in.coils; ++ch) {
                const cplx v = din[in.index(ch, e, x, static_cast<std::size_t>(pi), static_cast<std::size_t>(pj))] * scale;
                s.input.v(static_cast<Eigen::Index>(input_channel(e, ch, in.coils, 0)), col) = v.real();
                s.input.v(static_cast<Eigen::Index>(input_channel(e, ch, in.coils, 1)), col) = v.imag();
              }
            }
          }
        }
      const Ext3 oe{ie[0] - rf[0] + 1, ie[1] - rf[1] + 1, ie[2] - rf[2] + 1};
      s.target = Volume(set.out_channels, oe);
      s.mask = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(set.out_channels),
                                     static_cast<Eigen::Index>(s.target.positions()));
      bool any = false;
      for (std::size_t i = 0; i < oe[0]; ++i)
        for (std::size_t j = 0; j < oe[1]; ++j) {
          bool win = true;
          for (std::size_t a = i; a < i + rf[0] && win; ++a)
            for (std::size_t b = j; b < j + rf[1] && win; ++b) win = node_ok[a * ie[1] + b] != 0;
          if (!win) continue;
          const auto p = lat.position(nr.a_lo + static_cast<long>(i + c[0]), nr.b_lo + static_cast<long>(j + c[1]));
          for (long q = 0; q < r; ++q) {
            const long ti = p[0] + set.geometry.offsets[static_cast<std::size_t>(q)][0];
            const long tj = p[1] + set.geometry.offsets[static_cast<std::size_t>(q)][1];
            if (!usable(ti, tj)) continue;
            any = true;
            for (std::size_t e = 0; e < tg.echoes; ++e)
              for (std::size_t x = 0; x < oe[2]; ++x) {
                const auto col = static_cast<Eigen::Index>(s.target.pos(i, j, x));
                const cplx v =
                    dtg[tg.index(0, e, x + c[2], static_cast<std::size_t>(ti), static_cast<std::size_t>(tj))] * scale;
                const auto re = static_cast<Eigen::Index>(output_channel(e, static_cast<std::size_t>(q),
                                                                         static_cast<std::size_t>(r), 0));
                s.target.v(re, col) = v.real();
                s.target.v(re + 1, col) = v.imag();
                s.mask(re, col) = 1.0;
                s.mask(re + 1, col) = 1.0;
              }
          }
        }
      if (any) set.samples.push_back(std::move(s));
    }
  if (set.samples.empty())
    throw DataError("ACS " + std::to_string(in.n0) + "x" + std::to_string(in.n1) + "x" + std::to_string(in.read) +
                    " is too small for receptive field " + ext_str(rf) + " at R=" +
                    std::to_string(set.geometry.lattice.r1) + "x" + std::to_string(set.geometry.lattice.r2));
  return set;
}

Volume gather_cells(const CTensor& combined, const SamplingMask& mask) {
  const Grid g(with_coil(combined), mask.axes());
  const OffsetGeometry geo = OffsetGeometry::of(mask, g.echoes);
  const auto nr = geo.lattice.covering(static_cast<long>(g.n0), static_cast<long>(g.n1));
  const std::size_t r = geo.cell();
  Volume v(2 * r * g.echoes, {static_cast<std::size_t>(nr.a_hi - nr.a_lo + 1),
                              static_cast<std::size_t>(nr.b_hi - nr.b_lo + 1), g.read});
  auto d = g.t.data();
  for (long a = nr.a_lo; a <= nr.a_hi; ++a)
    for (long b = nr.b_lo; b <= nr.b_hi; ++b) {
      const auto p = geo.lattice.position(a, b);
      for (std::size_t q = 0; q < r; ++q) {
        const long i = p[0] + geo.offsets[q][0], j = p[1] + geo.offsets[q][1];
        if (i < 0 || j < 0 || i >= static_cast<long>(g.n0) || j >= static_cast<long>(g.n1)) continue;
        for (std::size_t e = 0; e < g.echoes; ++e)
          for (std::size_t x = 0; x < g.read; ++x) {
            const cplx val = d[g.index(0, e, x, static_cast<std::size_t>(i), static_cast<std::size_t>(j))];
            const auto col = static_cast<Eigen::Index>(
                v.pos(static_cast<std::size_t>(a - nr.a_lo), static_cast<std::size_t>(b - nr.b_lo), x));
            v.v(static_cast<Eigen::Index>(output_channel(e, q, r, 0)), col) = val.real();
            v.v(static_cast<Eigen::Index>(output_channel(e, q, r, 1)), col) = val.imag();
          }
      }
    }
  return v;
}

CTensor scatter_cells(const Volume& cells, const CTensor& like, const SamplingMask& mask) {
  Grid g(with_coil(like), mask.axes());
  const OffsetGeometry geo = OffsetGeometry::of(mask, g.echoes);
  const auto nr = geo.lattice.covering(static_cast<long>(g.n0), static_cast<long>(g.n1));
  const std::size_t r = geo.cell();
  const Ext3 want{static_cast<std::size_t>(nr.a_hi - nr.a_lo + 1), static_cast<std::size_t>(nr.b_hi - nr.b_lo + 1),
                  g.read};
  if (cells.ext != want || cells.channels != 2 * r * g.echoes)
    throw DataError("cell volume " + ext_str(cells.ext) + " does not match the lattice cover " + ext_str(want));
  CTensor out(g.t.axes(), g.t.shape());
  auto d = out.data();
  for (long a = nr.a_lo; a <= nr.a_hi; ++a)
    for (long b = nr.b_lo; b <= nr.b_hi; ++b) {
      const auto p = geo.lattice.position(a, b);
      for (std::size_t q = 0; q < r; ++q) {
        const long i = p[0] + geo.offsets[q][0], j = p[1] + geo.offsets[q][1];
        if (i < 0 || j < 0 || i >= static_cast<long>(g.n0) || j >= static_cast<long>(g.n1)) continue;
        if (!mask.acquirable(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
        for (std::size_t e = 0; e < g.echoes; ++e)
          for (std::size_t x = 0; x < g.read; ++x) {
            const auto col = static_cast<Eigen::Index>(
                cells.pos(static_cast<std::size_t>(a - nr.a_lo), static_cast<std::size_t>(b - nr.b_lo), x));
            d[g.index(0, e, x, static_cast<std::size_t>(i), static_cast<std::size_t>(j))] =
                cplx(cells.v(static_cast<Eigen::Index>(output_channel(e, q, r, 0)), col),
                     cells.v(static_cast<Eigen::Index>(output_channel(e, q, r, 1)), col));
          }
      }
    }
  return squeeze_axis(from_canonical(out, g.layout), Axis::coil);
}

CTensor infer_grid(const ModelWeights& model, const CTensor& kspace, const SamplingMask& mask, double scale) {
  const Grid g(kspace, mask.axes());
  if (g.n0 != mask.extents()[0] || g.n1 != mask.extents()[1]) throw DataError("mask extents differ from the data");
  const OffsetGeometry geo = OffsetGeometry::of(mask, g.echoes);
  const std::size_t r = geo.cell();
  if (model.in_channels() != 2 * g.coils * g.echoes)
    throw DataError("model expects " + std::to_string(model.in_channels()) + " input channels, data give " +
                    std::to_string(2 * g.coils * g.echoes));
  if (model.out_channels() % (2 * r) != 0) throw DataError("model output channels do not match R");
  const std::size_t groups = model.out_channels() / (2 * r);
  const auto masks = echo_shifted_masks(mask, g.echoes);
  const Ext3 rf = model.receptive_field();
  const Ext3 c = half(rf);
  const auto nr = geo.lattice.covering(static_cast<long>(g.n0), static_cast<long>(g.n1));
  const Ext3 ie{static_cast<std::size_t>(nr.a_hi - nr.a_lo + 1) + rf[0] - 1,
                static_cast<std::size_t>(nr.b_hi - nr.b_lo + 1) + rf[1] - 1, g.read + rf[2] - 1};
  Volume x(model.in_channels(), ie);
  auto d = g.t.data();
  for (std::size_t ia = 0; ia < ie[0]; ++ia)
    for (std::size_t ib = 0; ib < ie[1]; ++ib) {
      const auto p = geo.lattice.position(nr.a_lo - static_cast<long>(c[0]) + static_cast<long>(ia),
                                          nr.b_lo - static_cast<long>(c[1]) + static_cast<long>(ib));
      for (std::size_t e = 0; e < g.echoes; ++e) {
        const long i = p[0] + geo.echo_offsets[e][0], j = p[1] + geo.echo_offsets[e][1];
        if (i < 0 || j < 0 || i >= static_cast<long>(g.n0) || j >= static_cast<long>(g.n1)) continue;
        if (!masks[e].sampled(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
        for (std::size_t xr = 0; xr < g.read; ++xr) {
          const auto col = static_cast<Eigen::Index>(x.pos(ia, ib, xr + c[2]));
          for (std::size_t ch = 0; ch < g.coils; ++ch) {
            const cplx v = d[g.index(ch, e, xr, static_cast<std::size_t>(i), static_cast<std::size_t>(j))] * scale;
            x.v(static_cast<Eigen::Index>(input_channel(e, ch, g.coils, 0)), col) = v.real();
            x.v(static_cast<Eigen::Index>(input_channel(e, ch, g.coils, 1)), col) = v.imag();
          }
        }
      }
    }
  Volume y = forward(model, x);
  y.v /= scale;
  CTensor like = slice(g.t, Axis::coil, 0);
  if (groups != g.echoes) {
    Shape s = like.shape();
    s[like.axis_index(Axis::echo)] = groups;
    like = CTensor(like.axes(), s);
  }
  CTensor out = scatter_cells(y, like, mask);
  // Back to the caller's axis order (minus coil).
  AxisList order;
  for (Axis a : g.layout.original)
    if (a != Axis::coil) order.push_back(a);
  if (!g.layout.had_echo) {
    if (groups != 1) throw DataError("multi-group output needs an echo axis");
    out = squeeze_axis(out, Axis::echo);
  }
  if (!g.layout.had_read) out = squeeze_axis(out, g.layout.read);
  return permute(out, order);
}

CTensor rss(const CTensor& images) {
  const std::size_t ci = images.axis_index(Axis::coil);
  const CTensor x = permute(images, [&] {
    AxisList o{Axis::coil};
    for (Axis a : images.axes())
      if (a != Axis::coil) o.push_back(a);
    return o;
  }());
  const std::size_t nc = images.shape()[ci];
  const std::size_t rest = x.size() / nc;
  CTensor out(AxisList(x.axes().begin() + 1, x.axes().end()), Shape(x.shape().begin() + 1, x.shape().end()));
  for (std::size_t v = 0; v < rest; ++v) {
    double s = 0;
    for (std::size_t c = 0; c < nc; ++c) s += std::norm(x[c * rest + v]);
    out[v] = std::sqrt(s);
  }
  AxisList back;
  for (Axis a : images.axes())
    if (a != Axis::coil) back.push_back(a);
  return permute(out, back);
}

CTensor combine_images(const CTensor& images, const CTensor& maps) {
  if (maps.empty()) return rss(images);
  for (Axis a : spatial_axes(images))
    if (!maps.has_axis(a) || maps.extent(a) != images.extent(a)) return rss(images);
  return coil_combine(images, maps);
}

CTensor zero_filled_image(const CTensor& kspace, const CTensor& maps) {
  const std::vector<Axis> sp = spatial_axes(kspace);
  return combine_images(ifftc(kspace, std::span<const Axis>(sp)), maps);
}

SensitivityMaps problem_maps(const ReconProblem& p, bool full_res) {
  const CTensor acs = extract_acs(p.kspace, p.mask);
  std::vector<Axis> cal;
  for (Axis a : p.mask.axes())
    if (a == Axis::kx || a == Axis::ky || a == Axis::kz) cal.push_back(a);
  ExtentMap out;
  if (full_res)
    for (Axis a : spatial_axes(p.kspace)) out[a] = p.kspace.extent(a);
  return espirit_maps(acs, cal, p.espirit, out);
}

namespace {

double max_abs(const CTensor& x) {
  double m = 0;
  for (auto& v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

TrainedModel fit(const OffsetTargetSet& set, const TrainConfig& cfg) {
  ModelWeights m0 = init_model(set.in_channels, eraki_architecture(set.out_channels, cfg.widths), cfg.seed);
  TrainResult r = train(std::move(m0), set.samples, cfg);
  return {std::move(r.model), std::move(r.history), r.seconds};
}

Ext3 default_rf(const TrainConfig& cfg) { return init_model(1, eraki_architecture(1, cfg.widths), 0).receptive_field(); }

CTensor echo_slice(const CTensor& x, std::size_t e) {
  if (!x.has_axis(Axis::echo)) return x;
  return insert_axis(slice(x, Axis::echo, e), Axis::echo, x.axis_index(Axis::echo));
}

CTensor concat_echoes(const std::vector<CTensor>& parts) {
  if (parts.size() == 1 || !parts[0].has_axis(Axis::echo)) return parts[0];
  std::vector<CTensor> sq;
  for (auto& p : parts) sq.push_back(squeeze_axis(p, Axis::echo));
  return stack(sq, Axis::echo, parts[0].axis_index(Axis::echo));
}

}  // namespace

ReconResult reconstruct(const ReconProblem& p) {
  p.validate();
  ReconResult res;
  const Ext3 rf = default_rf(p.train);
  const std::vector<Axis> sp = spatial_axes(p.kspace);

  auto t0 = Clock::now();
  if (p.maps) {
    res.maps = *p.maps;
  } else {
    // RAKI needs full-resolution maps for its image; eRAKI only for the target.
    res.maps = problem_maps(p, p.full_res_maps || p.mode == ReconMode::raki_percoil).maps;
  }
  res.maps_seconds = since(t0);

  auto train_and_infer = [&](const CTensor& k, const CTensor& target, const CTensor& acs) {
    const double m = max_abs(acs);
    if (!(m > 0)) throw DataError("ACS is all zero");
    const double scale = 1.0 / m;
    const OffsetTargetSet set = build_targets(acs, target, p.mask, rf, scale);
    TrainedModel tm = fit(set, p.train);
    res.train_seconds += tm.seconds;
    const auto ti = Clock::now();
    CTensor out = infer_grid(tm.weights, k, p.mask, scale);
    res.infer_seconds += since(ti);
    res.models.push_back(std::move(tm));
    return out;
  };

  const std::size_t ne = p.echoes();
  if (p.mode == ReconMode::eraki_joint) {
    const CTensor acs = extract_acs(p.kspace, p.mask);
    res.kspace = train_and_infer(p.kspace, make_combo_target(acs, res.maps), acs);
  } else if (p.mode == ReconMode::raki_percoil) {
    std::vector<CTensor> echoes;
    for (std::size_t e = 0; e < ne; ++e) {
      const CTensor k = echo_slice(p.kspace, e);
      const CTensor acs = extract_acs(k, p.mask);
      std::vector<CTensor> coils;
      for (std::size_t c = 0; c < k.extent(Axis::coil); ++c)
        coils.push_back(train_and_infer(k, slice(acs, Axis::coil, c), acs));
      CTensor full = stack(coils, Axis::coil, k.axis_index(Axis::coil));
      // Hard data consistency on the acquired samples.
      const CTensor acquired = apply_mask(k, p.mask);
      const CTensor predicted_only = full - apply_mask(full, p.mask);
      echoes.push_back(predicted_only + acquired);
    }
    res.kspace = concat_echoes(echoes);
  } else {
    std::vector<CTensor> echoes;
    for (std::size_t e = 0; e < ne; ++e) {
      const CTensor k = echo_slice(p.kspace, e);
      const CTensor acs = extract_acs(k, p.mask);
      echoes.push_back(train_and_infer(k, make_combo_target(acs, res.maps), acs));
    }
    res.kspace = concat_echoes(echoes);
  }

  if (p.mode == ReconMode::raki_percoil) {
    res.image = combine_images(ifftc(res.kspace, std::span<const Axis>(sp)), res.maps);
  } else {
    res.image = ifftc(res.kspace, std::span<const Axis>(sp));
  }

  json models = json::array();
  json model_seconds = json::array();
  for (auto& m : res.models) {
    models.push_back({{"first_loss", m.history.empty() ? 0.0 : m.history.front()},
                      {"final_loss", m.history.empty() ? 0.0 : m.history.back()},
                      {"parameters", m.weights.parameter_count()}});
    model_seconds.push_back(m.seconds);
  }
  const std::size_t coils = p.kspace.extent(Axis::coil);
  res.report = {{"mode", mode_name(p.mode)},
                {"models", res.models.size()},
                {"split_models", p.mode == ReconMode::raki_percoil ? 2 * coils * ne : res.models.size()},
                {"train", to_json(p.train)},
                {"model_details", models},
                {"timing",
                 {{"maps_seconds", res.maps_seconds},
                  {"train_seconds", res.train_seconds},
                  {"infer_seconds", res.infer_seconds},
                  {"model_seconds", model_seconds}}}};
  return res;
}

}  // namespace eraki
