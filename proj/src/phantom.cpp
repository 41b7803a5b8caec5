#include "eraki/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace eraki {

namespace {

const AxisList kSpatial{Axis::kx, Axis::ky, Axis::kz};

Shape spatial_shape(const std::array<std::size_t, 3>& e) { return {e[0], e[1], e[2]}; }

double coord(std::size_t i, std::size_t n) {
  return n > 1 ? (static_cast<double>(i) - static_cast<double>(n / 2)) / static_cast<double>(n) : 0.0;
}

}  // namespace

std::vector<Ellipsoid> default_ellipsoids(const std::array<std::size_t, 3>& e) {
  auto c = [&](int d, double frac) { return (static_cast<double>(e[d]) - 1.0) / 2.0 + frac * e[d]; };
  auto s = [&](int d, double frac) { return std::max(frac * e[d], 0.5); };
  std::vector<Ellipsoid> out;
  // outer shell
  out.push_back({{c(0, 0), c(1, 0), c(2, 0)}, {s(0, 0.42), s(1, 0.40), s(2, 0.42)}, {0.7, 0.0}, 80.0, 40.0});
  out.push_back({{c(0, -0.10), c(1, -0.12), c(2, 0.05)}, {s(0, 0.14), s(1, 0.10), s(2, 0.16)}, {1.0, 0.0}, 30.0, 15.0});
  out.push_back({{c(0, 0.12), c(1, 0.10), c(2, -0.06)}, {s(0, 0.12), s(1, 0.14), s(2, 0.12)}, {0.85, 0.0}, 50.0, 25.0});
  return out;
}

void validate(const PhantomSpec& spec) {
  for (auto n : spec.extents)
    if (n == 0) throw DataError("phantom grid has a zero extent");
  if (spec.ellipsoids.empty()) throw DataError("phantom needs at least one ellipsoid");
  if (spec.coils < 1) throw DataError("phantom needs at least one coil");
  if (spec.te_ms.empty()) throw DataError("phantom needs at least one echo time");
  for (std::size_t i = 0; i < spec.te_ms.size(); ++i) {
    if (spec.te_ms[i] < 0) throw DataError("echo times must be non-negative");
    if (i > 0 && spec.te_ms[i] <= spec.te_ms[i - 1])
      throw DataError("echo times must be strictly increasing");
  }
  for (auto& el : spec.ellipsoids) {
    for (double a : el.semi_axes)
      if (!(a > 0)) throw DataError("ellipsoid semi-axes must be positive");
    if (!(el.t2_ms > 0) || !(el.t2star_ms > 0)) throw DataError("relaxation times must be positive");
  }
  if (spec.noise_sigma < 0) throw DataError("noise sigma must be non-negative");
}

CTensor make_compact_coils(const std::array<std::size_t, 3>& extents, std::size_t coils,
                           std::size_t support, std::uint64_t seed) {
  if (support % 2 == 0 || support < 1) throw DataError("compact coil support must be odd and >= 1");
  if (coils < 2) throw DataError("compact coils need at least two coils");
  std::array<std::size_t, 3> win{};
  for (int d = 0; d < 3; ++d) {
    if (extents[d] == 1) {
      win[d] = 1;
    } else if (support > extents[d]) {
      throw DataError("compact coil support " + std::to_string(support) + " exceeds grid extent " +
                      std::to_string(extents[d]));
    } else {
      win[d] = support;
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CTensor k({Axis::coil, Axis::kx, Axis::ky, Axis::kz}, {coils, extents[0], extents[1], extents[2]});
  for (std::size_t c = 0; c < coils; ++c)
    for (std::size_t i = 0; i < win[0]; ++i)
      for (std::size_t j = 0; j < win[1]; ++j)
        for (std::size_t l = 0; l < win[2]; ++l) {
          const double re = normal(rng);
          const double im = normal(rng);
          k.at({c, center_window_start(extents[0], win[0]) + i, center_window_start(extents[1], win[1]) + j,
                center_window_start(extents[2], win[2]) + l}) = cplx(re, im);
        }
  return ifftc(k, kSpatial);
}

CTensor make_smooth_coils(const std::array<std::size_t, 3>& extents, std::size_t coils,
                          const CoilParams& params, std::uint64_t seed) {
  // Lobes circle the two widest non-unit axes, preferring the phase-encode plane.
  int pa = 1, pb = 2;
  if (extents[2] == 1) pa = 0, pb = 1;
  std::mt19937_64 rng(seed ^ 0x5eedc011ULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  CTensor maps({Axis::coil, Axis::kx, Axis::ky, Axis::kz}, {coils, extents[0], extents[1], extents[2]});
  const double w2 = 2.0 * params.width * params.width;
  for (std::size_t c = 0; c < coils; ++c) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(coils);
    const double ca = params.radius * std::cos(theta);
    const double cb = params.radius * std::sin(theta);
    const std::array<double, 3> slope{uni(rng) * params.phase_ramp, uni(rng) * params.phase_ramp,
                                      uni(rng) * params.phase_ramp};
    for (std::size_t i = 0; i < extents[0]; ++i)
      for (std::size_t j = 0; j < extents[1]; ++j)
        for (std::size_t l = 0; l < extents[2]; ++l) {
          const std::array<double, 3> u{coord(i, extents[0]), coord(j, extents[1]), coord(l, extents[2])};
          const double da = u[pa] - ca, db = u[pb] - cb;
          const double mag = std::exp(-(da * da + db * db) / w2);
          const double phase = theta + slope[0] * u[0] + slope[1] * u[1] + slope[2] * u[2];
          maps.at({c, i, j, l}) = std::polar(mag, phase);
        }
  }
  const std::size_t vox = extents[0] * extents[1] * extents[2];
  for (std::size_t v = 0; v < vox; ++v) {
    double ss = 0;
    for (std::size_t c = 0; c < coils; ++c) ss += std::norm(maps[c * vox + v]);
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < coils; ++c) maps[c * vox + v] *= inv;
  }
  return maps;
}

Phantom make_phantom(const PhantomSpec& spec) {
  validate(spec);
  const auto& e = spec.extents;
  const Shape sp = spatial_shape(e);
  const std::size_t vox = e[0] * e[1] * e[2];
  const std::size_t ne = spec.te_ms.size();
  const std::size_t nc = spec.coils;

  Phantom ph;
  CTensor object(kSpatial, sp);
  ph.t2_true = CTensor(kSpatial, sp);
  ph.t2star_true = CTensor(kSpatial, sp);
  ph.support = CTensor(kSpatial, sp);
  for (const auto& el : spec.ellipsoids)
    for (std::size_t i = 0; i < e[0]; ++i)
      for (std::size_t j = 0; j < e[1]; ++j)
        for (std::size_t l = 0; l < e[2]; ++l) {
          const double dx = (static_cast<double>(i) - el.center[0]) / el.semi_axes[0];
          const double dy = (static_cast<double>(j) - el.center[1]) / el.semi_axes[1];
          const double dz = (static_cast<double>(l) - el.center[2]) / el.semi_axes[2];
          if (dx * dx + dy * dy + dz * dz <= 1.0) {
            object.at({i, j, l}) = el.amplitude;
            ph.t2_true.at({i, j, l}) = el.t2_ms;
            ph.t2star_true.at({i, j, l}) = el.t2star_ms;
            ph.support.at({i, j, l}) = 1.0;
          }
        }

  // Raw maps shape the data; sens_true is their unit-RSS normalization.
  CTensor raw;
  if (spec.coil.model == CoilModel::compact) {
    if (nc < 2) throw DataError("compact coil model needs at least two coils");
    raw = make_compact_coils(e, nc, spec.coil.support, spec.seed);
  } else {
    raw = make_smooth_coils(e, nc, spec.coil, spec.seed);
  }
  ph.sens_true = raw;
  std::vector<double> rss(vox);
  for (std::size_t v = 0; v < vox; ++v) {
    double ss = 0;
    for (std::size_t c = 0; c < nc; ++c) ss += std::norm(raw[c * vox + v]);
    rss[v] = std::sqrt(ss);
    for (std::size_t c = 0; c < nc; ++c) ph.sens_true[c * vox + v] = ss > 0 ? raw[c * vox + v] / rss[v] : cplx{};
  }

  const AxisList full{Axis::coil, Axis::echo, Axis::kx, Axis::ky, Axis::kz};
  ph.images = CTensor(full, {nc, ne, e[0], e[1], e[2]});
  ph.combined = CTensor({Axis::echo, Axis::kx, Axis::ky, Axis::kz}, {ne, e[0], e[1], e[2]});
  const CTensor& relax = spec.echo_type == EchoType::spin ? ph.t2_true : ph.t2star_true;
  for (std::size_t ec = 0; ec < ne; ++ec)
    for (std::size_t v = 0; v < vox; ++v) {
      const double tau = relax[v].real();
      const double decay = tau > 0 ? std::exp(-spec.te_ms[ec] / tau) : 0.0;
      const cplx m = object[v] * decay;
      ph.combined[ec * vox + v] = m * rss[v];
      for (std::size_t c = 0; c < nc; ++c) ph.images[(c * ne + ec) * vox + v] = m * raw[c * vox + v];
    }

  ph.kspace = fftc(ph.images, kSpatial);
  if (spec.noise_sigma > 0) {
    std::mt19937_64 rng(spec.seed ^ 0x6e6f697365ULL);
    std::normal_distribution<double> normal(0.0, spec.noise_sigma / std::sqrt(2.0));
    for (auto& v : ph.kspace.data()) {
      const double re = normal(rng);
      const double im = normal(rng);
      v += cplx(re, im);
    }
  }
  return ph;
}

}  // namespace eraki
