#include "eraki/espirit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "eraki/parallel.hpp"

namespace eraki {

namespace {

bool is_spatial(Axis a) { return a == Axis::kx || a == Axis::ky || a == Axis::kz; }

std::size_t product(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

// Complex exponentials e^{+2 pi i d (r - n/2) / n} for d in [-(k-1), k-1],
// matching sqrt(n) * ifftc of an impulse placed at n/2 + d.
Eigen::MatrixXcd phase_table(std::size_t n, std::size_t k) {
  const long span = 2 * static_cast<long>(k) - 1;
  Eigen::MatrixXcd e(static_cast<Eigen::Index>(n), span);
  const long c = static_cast<long>(n / 2);
  for (long r = 0; r < static_cast<long>(n); ++r)
    for (long d = -(static_cast<long>(k) - 1); d < static_cast<long>(k); ++d) {
      const long m = ((d * (r - c)) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n);
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
      e(r, d + static_cast<long>(k) - 1) = std::polar(1.0, ang);
    }
  return e;
}

}  // namespace

std::vector<Axis> spatial_axes(const CTensor& x) {
  std::vector<Axis> out;
  for (Axis a : x.axes())
    if (is_spatial(a)) out.push_back(a);
  return out;
}

SensitivityMaps espirit_maps(const CTensor& acs, const std::vector<Axis>& cal_axes, const EspiritParams& params,
                             const ExtentMap& out) {
  if (params.kernel < 1) throw ConfigError("ESPIRiT kernel must be at least 1");
  if (!(params.tau > 0 && params.tau < 1)) throw ConfigError("ESPIRiT tau must lie in (0, 1)");
  if (!(params.gamma > 0 && params.gamma <= 1)) throw ConfigError("ESPIRiT gamma must lie in (0, 1]");
  if (cal_axes.empty() || cal_axes.size() > 2) throw DataError("ESPIRiT needs one or two calibration axes");
  if (cal_axes.size() == 2 && cal_axes[0] == cal_axes[1]) throw DataError("ESPIRiT calibration axes repeat");
  acs.axis_index(Axis::coil);
  for (Axis a : cal_axes) {
    if (!is_spatial(a)) throw DataError("calibration axis " + std::string(axis_name(a)) + " is not spatial");
    acs.axis_index(a);
  }

  const std::vector<Axis> spatial = spatial_axes(acs);
  std::vector<Axis> reads;
  for (Axis a : spatial)
    if (std::find(cal_axes.begin(), cal_axes.end(), a) == cal_axes.end()) reads.push_back(a);
  if (reads.size() > 1) throw DataError("ESPIRiT supports at most one readout axis");
  std::vector<Axis> pooled;
  for (Axis a : acs.axes())
    if (a != Axis::coil && !is_spatial(a)) pooled.push_back(a);

  ExtentMap ext;
  for (Axis a : spatial) {
    auto it = out.find(a);
    const std::size_t n = it == out.end() ? acs.extent(a) : it->second;
    if (n < acs.extent(a))
      throw DataError("ESPIRiT output extent " + std::to_string(n) + " on " + std::string(axis_name(a)) +
                      " is smaller than the ACS extent " + std::to_string(acs.extent(a)));
    ext[a] = n;
  }

  std::array<std::size_t, 2> k{1, 1};
  for (std::size_t d = 0; d < cal_axes.size(); ++d) {
    const std::size_t n = acs.extent(cal_axes[d]);
    if (n == 1) continue;
    if (n < params.kernel)
      throw DataError("ACS extent " + std::to_string(n) + " on " + std::string(axis_name(cal_axes[d])) +
                      " is smaller than the ESPIRiT kernel " + std::to_string(params.kernel));
    k[d] = params.kernel;
  }

  CTensor x = acs;
  if (!reads.empty()) {
    x = pad_center(x, {{reads[0], ext[reads[0]]}});
    x = ifftc(x, {reads[0]});
  }
  AxisList order{Axis::coil};
  order.insert(order.end(), pooled.begin(), pooled.end());
  order.insert(order.end(), reads.begin(), reads.end());
  order.insert(order.end(), cal_axes.begin(), cal_axes.end());
  x = permute(x, order);

  const Shape& s = x.shape();
  const std::size_t nc = s[0];
  const std::size_t np = product(s, 1, 1 + pooled.size());
  const std::size_t nr = reads.empty() ? 1 : s[1 + pooled.size()];
  const std::size_t a0 = acs.extent(cal_axes[0]);
  const std::size_t a1 = cal_axes.size() > 1 ? acs.extent(cal_axes[1]) : 1;
  const std::size_t o0 = ext[cal_axes[0]];
  const std::size_t o1 = cal_axes.size() > 1 ? ext[cal_axes[1]] : 1;
  const std::size_t kk = k[0] * k[1];
  const std::size_t p0 = a0 - k[0] + 1, p1 = a1 - k[1] + 1;
  const std::size_t rows = np * p0 * p1;
  const std::size_t cols = nc * kk;
  const long d0n = 2 * static_cast<long>(k[0]) - 1, d1n = 2 * static_cast<long>(k[1]) - 1;

  const Eigen::MatrixXcd e0 = phase_table(o0, k[0]);
  const Eigen::MatrixXcd e1 = phase_table(o1, k[1]);

  AxisList stage_axes{Axis::coil};
  Shape stage_shape{nc};
  if (!reads.empty()) stage_axes.push_back(reads[0]), stage_shape.push_back(nr);
  for (Axis a : cal_axes) stage_axes.push_back(a), stage_shape.push_back(ext[a]);
  CTensor maps(stage_axes, stage_shape);
  CTensor eig(AxisList(stage_axes.begin() + 1, stage_axes.end()), Shape(stage_shape.begin() + 1, stage_shape.end()));
  const std::size_t vox = nr * o0 * o1;
  auto src = x.data();
  auto mdst = maps.data();
  auto edst = eig.data();

  parallel_for(nr, [&](std::size_t rb, std::size_t re) {
    Eigen::MatrixXcd a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = rb; r < re; ++r) {
      // Block-Hankel calibration matrix: one row per window position.
      std::size_t row = 0;
      for (std::size_t p = 0; p < np; ++p)
        for (std::size_t i = 0; i < p0; ++i)
          for (std::size_t j = 0; j < p1; ++j, ++row)
            for (std::size_t c = 0; c < nc; ++c)
              for (std::size_t q0 = 0; q0 < k[0]; ++q0)
                for (std::size_t q1 = 0; q1 < k[1]; ++q1)
                  a(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c * kk + q0 * k[1] + q1)) =
                      src[(((c * np + p) * nr + r) * a0 + i + q0) * a1 + j + q1];
      const Eigen::MatrixXcd gram = a.adjoint() * a;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
      const Eigen::VectorXd& lam = es.eigenvalues();
      const double lmax = lam(lam.size() - 1);
      Eigen::Index keep = 0;
      for (Eigen::Index i = lam.size() - 1; i >= 0; --i)
        if (lmax > 0 && lam(i) >= params.tau * params.tau * lmax) ++keep;
      const Eigen::MatrixXcd v = es.eigenvectors().rightCols(keep);
      // Column-vector projector onto the row space of the calibration matrix.
      const Eigen::MatrixXcd proj = (v * v.adjoint()).conjugate();

      // h[c'][c](d0, d1), averaged over the window offsets that see the point.
      std::vector<Eigen::MatrixXcd> h(nc * nc, Eigen::MatrixXcd::Zero(d0n, d1n));
      for (std::size_t cp = 0; cp < nc; ++cp)
        for (std::size_t c = 0; c < nc; ++c) {
          auto& hc = h[cp * nc + c];
          for (long q0 = 0; q0 < static_cast<long>(k[0]); ++q0)
            for (long q1 = 0; q1 < static_cast<long>(k[1]); ++q1)
              for (long s0 = 0; s0 < static_cast<long>(k[0]); ++s0)
                for (long s1 = 0; s1 < static_cast<long>(k[1]); ++s1)
                  hc(q0 - s0 + static_cast<long>(k[0]) - 1, q1 - s1 + static_cast<long>(k[1]) - 1) +=
                      proj(static_cast<Eigen::Index>(cp * kk + q0 * k[1] + q1),
                           static_cast<Eigen::Index>(c * kk + s0 * k[1] + s1));
          hc /= static_cast<double>(kk);
        }

      // Image-space operator W(r0, r1)[c'][c], built separably.
      std::vector<Eigen::MatrixXcd> w(nc * nc);
      for (std::size_t i = 0; i < nc * nc; ++i) w[i] = e0 * h[i] * e1.transpose();

      Eigen::MatrixXcd m(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> vs;
      for (std::size_t i = 0; i < o0; ++i)
        for (std::size_t j = 0; j < o1; ++j) {
          for (std::size_t cp = 0; cp < nc; ++cp)
            for (std::size_t c = 0; c < nc; ++c)
              m(static_cast<Eigen::Index>(cp), static_cast<Eigen::Index>(c)) =
                  w[cp * nc + c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          vs.compute(m);
          const double top = vs.eigenvalues()(static_cast<Eigen::Index>(nc) - 1);
          Eigen::VectorXcd lead = vs.eigenvectors().col(static_cast<Eigen::Index>(nc) - 1);
          const std::size_t v_idx = (r * o0 + i) * o1 + j;
          edst[v_idx] = top;
          if (top < params.gamma) continue;
          const double mag0 = std::abs(lead(0));
          if (mag0 > 0) lead *= std::conj(lead(0)) / mag0;
          lead(0) = std::abs(lead(0));
          lead /= lead.norm();
          for (std::size_t c = 0; c < nc; ++c) mdst[c * vox + v_idx] = lead(static_cast<Eigen::Index>(c));
        }
    }
  });

  AxisList final_order{Axis::coil};
  final_order.insert(final_order.end(), spatial.begin(), spatial.end());
  SensitivityMaps sm;
  sm.maps = permute(maps, final_order);
  sm.eigval = permute(eig, spatial);
  sm.params = params;
  return sm;
}

CTensor coil_combine(const CTensor& images, const CTensor& maps) {
  images.axis_index(Axis::coil);
  maps.axis_index(Axis::coil);
  std::vector<Axis> sp;
  for (Axis a : maps.axes())
    if (a != Axis::coil) sp.push_back(a);
  if (images.extent(Axis::coil) != maps.extent(Axis::coil))
    throw DataError("coil count " + std::to_string(images.extent(Axis::coil)) + " differs from maps " +
                    std::to_string(maps.extent(Axis::coil)));
  for (Axis a : sp) {
    if (!images.has_axis(a)) throw DataError("images lack map axis " + std::string(axis_name(a)));
    if (images.extent(a) != maps.extent(a))
      throw DataError("extent mismatch on " + std::string(axis_name(a)) + ": images " +
                      std::to_string(images.extent(a)) + ", maps " + std::to_string(maps.extent(a)));
  }
  AxisList order{Axis::coil};
  AxisList rest;
  for (Axis a : images.axes())
    if (a != Axis::coil && std::find(sp.begin(), sp.end(), a) == sp.end()) rest.push_back(a);
  order.insert(order.end(), rest.begin(), rest.end());
  order.insert(order.end(), sp.begin(), sp.end());
  AxisList morder{Axis::coil};
  morder.insert(morder.end(), sp.begin(), sp.end());
  const CTensor x = permute(images, order);
  const CTensor c = permute(maps, morder);

  const std::size_t nc = x.shape()[0];
  const std::size_t vox = c.size() / nc;
  const std::size_t outer = x.size() / nc / vox;
  AxisList out_axes(order.begin() + 1, order.end());
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  CTensor out(out_axes, out_shape);
  auto xs = x.data();
  auto cs = c.data();
  auto os = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t v = 0; v < vox; ++v) {
      cplx acc{};
      for (std::size_t k = 0; k < nc; ++k) acc += std::conj(cs[k * vox + v]) * xs[(k * outer + o) * vox + v];
      os[o * vox + v] = acc;
    }
  AxisList back;
  for (Axis a : images.axes())
    if (a != Axis::coil) back.push_back(a);
  return permute(out, back);
}

CTensor make_combo_target(const CTensor& acs, const CTensor& maps) {
  std::vector<Axis> sp;
  ExtentMap big, small;
  for (Axis a : maps.axes()) {
    if (a == Axis::coil) continue;
    sp.push_back(a);
    big[a] = maps.extent(a);
    small[a] = acs.extent(a);
    if (small[a] > big[a])
      throw DataError("ACS extent " + std::to_string(small[a]) + " on " + std::string(axis_name(a)) +
                      " exceeds the map extent " + std::to_string(big[a]));
  }
  const CTensor img = ifftc(pad_center(acs, big), std::span<const Axis>(sp));
  const CTensor k = fftc(coil_combine(img, maps), std::span<const Axis>(sp));
  return crop_center(k, small);
}

}  // namespace eraki
