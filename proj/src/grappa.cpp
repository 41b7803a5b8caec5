#include "eraki/grappa.hpp"

#include <algorithm>

#include "eraki/layout.hpp"
#include "eraki/parallel.hpp"

namespace eraki {

namespace {

constexpr std::size_t kChunkRows = 2048;

struct Grid {
  std::size_t coils, read, n0, n1;
  std::size_t index(std::size_t c, std::size_t x, std::size_t i, std::size_t j) const {
    return ((c * read + x) * n0 + i) * n1 + j;
  }
};

Grid grid_of(const CTensor& canon) {
  if (canon.extent(Axis::echo) != 1) throw DataError("GRAPPA expects a single echo per call");
  const Shape& s = canon.shape();
  return {s[0], s[2], s[3], s[4]};
}

long wrap(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  return ((i % m) + m) % m;
}

long span_lo(std::size_t n) { return -static_cast<long>((n - 1) / 2); }

Eigen::MatrixXcd solve_regularized(Eigen::MatrixXcd gram, const Eigen::MatrixXcd& rhs, double lambda) {
  const double mean_diag = gram.diagonal().real().mean();
  gram.diagonal().array() += lambda * mean_diag;
  Eigen::LLT<Eigen::MatrixXcd> llt(gram);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  // Eigenvalue-floored fallback for a numerically indefinite system.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  Eigen::VectorXd ev = eig.eigenvalues();
  const double floor = std::max(1e-14 * ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (Eigen::Index k = 0; k < ev.size(); ++k) ev(k) = std::max(ev(k), floor);
  const Eigen::MatrixXcd& v = eig.eigenvectors();
  return v * (ev.cwiseInverse().asDiagonal() * (v.adjoint() * rhs));
}

}  // namespace

GrappaKernel grappa_calibrate(const CTensor& acs, const std::array<Axis, 2>& axes, const Pattern& pattern,
                              GrappaGeometry geometry, double lambda) {
  if (!(lambda >= 0)) throw DataError("GRAPPA lambda must be non-negative");
  const CTensor canon = to_canonical(acs, axes, nullptr);
  const Grid g = grid_of(canon);
  if (g.n0 == 1) geometry.blocks0 = 1;
  if (g.n1 == 1) geometry.blocks1 = 1;
  if (g.read == 1) geometry.read_taps = 1;
  if (geometry.blocks0 == 0 || geometry.blocks1 == 0 || geometry.read_taps == 0)
    throw DataError("GRAPPA geometry extents must be positive");

  GrappaKernel k;
  k.axes = axes;
  k.pattern = pattern;
  k.pattern.origin = {0, 0};
  k.coils = g.coils;
  k.geometry = geometry;
  k.lambda = lambda;
  const Lattice lat = Lattice::of(k.pattern);

  for (long u = span_lo(geometry.blocks0); u < span_lo(geometry.blocks0) + static_cast<long>(geometry.blocks0); ++u)
    for (long v = span_lo(geometry.blocks1); v < span_lo(geometry.blocks1) + static_cast<long>(geometry.blocks1); ++v)
      for (long w = span_lo(geometry.read_taps); w < span_lo(geometry.read_taps) + static_cast<long>(geometry.read_taps);
           ++w) {
        const auto off = lat.step(u, v);
        k.sources.push_back({off[0], off[1], w});
      }
  for (long dy = 0; dy < lat.r1; ++dy)
    for (long dz = 0; dz < lat.r2; ++dz)
      if (dy != 0 || dz != 0) k.targets.push_back({dy, dz});
  if (k.targets.empty()) return k;

  // Footprint bounding box relative to the node.
  std::array<long, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (auto& s : k.sources)
    for (int d = 0; d < 3; ++d) lo[d] = std::min(lo[d], s[d]), hi[d] = std::max(hi[d], s[d]);
  for (auto& t : k.targets)
    for (int d = 0; d < 2; ++d) lo[d] = std::min(lo[d], t[d]), hi[d] = std::max(hi[d], t[d]);

  const std::array<long, 3> ext{static_cast<long>(g.n0), static_cast<long>(g.n1), static_cast<long>(g.read)};
  std::array<long, 3> count{};
  for (int d = 0; d < 3; ++d) count[d] = std::max(0L, ext[d] - (hi[d] - lo[d]));
  const std::size_t windows = static_cast<std::size_t>(count[0] * count[1] * count[2]);
  const std::size_t nsrc = k.sources.size() * g.coils;
  const std::size_t required = std::max<std::size_t>(64, nsrc);
  if (windows < required)
    throw DataError("insufficient ACS windows for GRAPPA calibration: need " + std::to_string(required) +
                    ", have " + std::to_string(windows));
  k.windows = windows;

  const std::size_t ntgt = k.targets.size() * g.coils;
  Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nsrc), static_cast<Eigen::Index>(nsrc));
  Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nsrc), static_cast<Eigen::Index>(ntgt));
  Eigen::MatrixXcd a(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(nsrc));
  Eigen::MatrixXcd b(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(ntgt));
  auto data = canon.data();

  std::size_t filled = 0;
  auto flush = [&] {
    if (filled == 0) return;
    const auto rows = static_cast<Eigen::Index>(filled);
    gram.noalias() += a.topRows(rows).adjoint() * a.topRows(rows);
    rhs.noalias() += a.topRows(rows).adjoint() * b.topRows(rows);
    filled = 0;
  };
  for (long y = -lo[0]; y < -lo[0] + count[0]; ++y)
    for (long z = -lo[1]; z < -lo[1] + count[1]; ++z)
      for (long x = -lo[2]; x < -lo[2] + count[2]; ++x) {
        const auto row = static_cast<Eigen::Index>(filled);
        for (std::size_t s = 0; s < k.sources.size(); ++s) {
          const auto& o = k.sources[s];
          for (std::size_t c = 0; c < g.coils; ++c)
            a(row, static_cast<Eigen::Index>(s * g.coils + c)) =
                data[g.index(c, static_cast<std::size_t>(x + o[2]), static_cast<std::size_t>(y + o[0]),
                             static_cast<std::size_t>(z + o[1]))];
        }
        for (std::size_t t = 0; t < k.targets.size(); ++t) {
          const auto& o = k.targets[t];
          for (std::size_t c = 0; c < g.coils; ++c)
            b(row, static_cast<Eigen::Index>(t * g.coils + c)) =
                data[g.index(c, static_cast<std::size_t>(x), static_cast<std::size_t>(y + o[0]),
                             static_cast<std::size_t>(z + o[1]))];
        }
        if (++filled == kChunkRows) flush();
      }
  flush();

  const Eigen::MatrixXcd w = solve_regularized(std::move(gram), rhs, lambda);
  if (!w.allFinite()) throw NumericalError("GRAPPA calibration produced non-finite weights");
  for (std::size_t t = 0; t < k.targets.size(); ++t)
    k.weights.push_back(w.middleCols(static_cast<Eigen::Index>(t * g.coils), static_cast<Eigen::Index>(g.coils)));
  return k;
}

GrappaKernel grappa_calibrate(const CTensor& acs, const SamplingMask& mask, GrappaGeometry geometry, double lambda) {
  return grappa_calibrate(acs, mask.axes(), mask.pattern(), geometry, lambda);
}

CTensor grappa_apply(const CTensor& kspace_masked, const SamplingMask& mask, const GrappaKernel& kernel) {
  const Pattern& p = mask.pattern();
  if (p.r1 != kernel.pattern.r1 || p.r2 != kernel.pattern.r2 || p.shift != kernel.pattern.shift ||
      mask.axes() != kernel.axes)
    throw DataError("sampling pattern does not match the GRAPPA kernel");
  CanonicalLayout layout;
  const CTensor canon = to_canonical(kspace_masked, mask.axes(), &layout);
  const Grid g = grid_of(canon);
  if (g.coils != kernel.coils) throw DataError("coil count does not match the GRAPPA kernel");
  if (g.n0 != mask.extents()[0] || g.n1 != mask.extents()[1]) throw DataError("mask extents differ from data");

  CTensor out = canon;
  auto src = canon.data();
  auto dst = out.data();
  const Lattice lat = Lattice::of(p);

  // Unsampled, acquirable plane positions grouped by their cell offset.
  std::vector<std::vector<std::array<long, 4>>> work(kernel.targets.size());
  for (std::size_t i = 0; i < g.n0; ++i)
    for (std::size_t j = 0; j < g.n1; ++j) {
      if (mask.sampled(i, j) || !mask.acquirable(i, j)) continue;
      const auto cell = lat.cell_of(static_cast<long>(i), static_cast<long>(j));
      const auto node = lat.position(cell.a, cell.b);
      for (std::size_t t = 0; t < kernel.targets.size(); ++t)
        if (kernel.targets[t][0] == cell.dy && kernel.targets[t][1] == cell.dz) {
          work[t].push_back({static_cast<long>(i), static_cast<long>(j), node[0], node[1]});
          break;
        }
    }

  const std::size_t nsrc = kernel.sources.size() * g.coils;
  for (std::size_t t = 0; t < kernel.targets.size(); ++t) {
    const auto& pts = work[t];
    const std::size_t rows_total = pts.size() * g.read;
    const std::size_t chunks = (rows_total + kChunkRows - 1) / kChunkRows;
    parallel_for(chunks, [&](std::size_t cb, std::size_t ce) {
      Eigen::MatrixXcd s(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(nsrc));
      for (std::size_t ch = cb; ch < ce; ++ch) {
        const std::size_t r0 = ch * kChunkRows;
        const std::size_t r1 = std::min(rows_total, r0 + kChunkRows);
        s.setZero();
        for (std::size_t r = r0; r < r1; ++r) {
          const auto& pt = pts[r / g.read];
          const long x = static_cast<long>(r % g.read);
          for (std::size_t q = 0; q < kernel.sources.size(); ++q) {
            const auto& o = kernel.sources[q];
            const long si = wrap(pt[2] + o[0], g.n0), sj = wrap(pt[3] + o[1], g.n1), sx = wrap(x + o[2], g.read);
            for (std::size_t c = 0; c < g.coils; ++c)
              s(static_cast<Eigen::Index>(r - r0), static_cast<Eigen::Index>(q * g.coils + c)) =
                  src[g.index(c, static_cast<std::size_t>(sx), static_cast<std::size_t>(si),
                              static_cast<std::size_t>(sj))];
          }
        }
        const auto rows = static_cast<Eigen::Index>(r1 - r0);
        const Eigen::MatrixXcd pred = s.topRows(rows) * kernel.weights[t];
        for (std::size_t r = r0; r < r1; ++r) {
          const auto& pt = pts[r / g.read];
          const std::size_t x = r % g.read;
          for (std::size_t c = 0; c < g.coils; ++c)
            dst[g.index(c, x, static_cast<std::size_t>(pt[0]), static_cast<std::size_t>(pt[1]))] =
                pred(static_cast<Eigen::Index>(r - r0), static_cast<Eigen::Index>(c));
        }
      }
    });
  }
  return from_canonical(out, layout);
}

CTensor grappa_recon(const CTensor& kspace_masked, const SamplingMask& mask, GrappaGeometry geometry, double lambda,
                     std::size_t read_acs) {
  auto one = [&](const CTensor& k) {
    CTensor acs = extract_acs(k, mask);
    if (read_acs > 0) {
      CanonicalLayout lay;
      to_canonical(k, mask.axes(), &lay);
      if (lay.had_read) acs = crop_center(acs, {{lay.read, read_acs}});
    }
    const GrappaKernel kernel = grappa_calibrate(acs, mask, geometry, lambda);
    return grappa_apply(k, mask, kernel);
  };
  if (!kspace_masked.has_axis(Axis::echo) || kspace_masked.extent(Axis::echo) == 1) return one(kspace_masked);
  const std::size_t ne = kspace_masked.extent(Axis::echo);
  const std::size_t pos = kspace_masked.axis_index(Axis::echo);
  std::vector<CTensor> parts;
  for (std::size_t e = 0; e < ne; ++e) parts.push_back(one(slice(kspace_masked, Axis::echo, e)));
  return stack(parts, Axis::echo, pos);
}

CTensor grappa_kyt(const CTensor& kspace_masked, const SamplingMask& mask, GrappaGeometry geometry, double lambda,
                   std::size_t read_acs) {
  if (mask.axes() != std::array<Axis, 2>{Axis::t, Axis::ky})
    throw DataError("grappa_kyt expects a (t, ky) sampling mask");
  if (!kspace_masked.has_axis(Axis::kx)) throw DataError("grappa_kyt expects a kx readout axis");
  return grappa_recon(kspace_masked, mask, geometry, lambda, read_acs);
}

}  // namespace eraki
