#include <cmath>
#include <string>

#include "doctest.h"
#include "eraki/phantom.hpp"
#include "eraki/recon.hpp"
#include "test_util.hpp"

using namespace eraki;

namespace {

struct Small {
  Phantom ph;
  SamplingMask mask;
  CTensor kspace;  // masked, [coil, echo, kx, ky, kz]
};

// Masks each echo with its shifted pattern when `shifted`, else all with `mask`.
CTensor mask_echoes(const CTensor& k, const SamplingMask& mask, bool shifted) {
  const std::size_t ne = k.extent(Axis::echo);
  const auto masks = shifted ? echo_shifted_masks(mask, ne) : std::vector<SamplingMask>(ne, mask);
  std::vector<CTensor> parts;
  for (std::size_t e = 0; e < ne; ++e) parts.push_back(apply_mask(slice(k, Axis::echo, e), masks[e]));
  return stack(parts, Axis::echo, k.axis_index(Axis::echo));
}

Small small_problem(std::size_t coils, std::size_t echoes, std::size_t r1, std::size_t r2, std::size_t n = 24,
                    std::size_t acs = 12, bool shifted = false) {
  PhantomSpec spec;
  spec.extents = {16, n, n};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = coils;
  spec.te_ms.clear();
  for (std::size_t e = 0; e < echoes; ++e) spec.te_ms.push_back(10.0 * static_cast<double>(e));
  spec.seed = 3;
  Small s{make_phantom(spec), make_uniform_mask({n, n}, r1, r2, 0, centered_acs({n, n}, {acs, acs})), {}};
  s.kspace = mask_echoes(s.ph.kspace, s.mask, shifted);
  return s;
}

TrainConfig quick(std::size_t width, std::size_t iterations) {
  TrainConfig c;
  c.widths = {width, width, width, width};
  c.iterations = iterations;
  c.beta = 0;
  c.lr = 3e-3;
  c.seed = 11;
  return c;
}

ReconProblem problem(const CTensor& k, const SamplingMask& m) {
  ReconProblem p;
  p.kspace = k;
  p.mask = m;
  return p;
}

// One valid convolution whose centre tap copies input channel i to output i.
ModelWeights pass_through(std::size_t in, std::size_t out, Ext3 k) {
  ConvLayer l;
  l.in = in;
  l.out = out;
  l.k = k;
  l.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * l.taps()));
  l.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
  for (std::size_t i = 0; i < std::min(in, out); ++i) l.kernel(i, i, k[0] / 2, k[1] / 2, k[2] / 2) = 1.0;
  ModelWeights m;
  m.layers.push_back(l);
  return m;
}

}  // namespace

TEST_CASE("mode names") {
  for (ReconMode m : {ReconMode::raki_percoil, ReconMode::eraki, ReconMode::eraki_joint, ReconMode::eraki_kyt})
    CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("grappa"), ConfigError);
}

TEST_CASE("output channels are 2R per echo group") {
  const Small s = small_problem(8, 3, 3, 3, 36, 24);
  const CTensor acs3 = extract_acs(s.kspace, s.mask);
  const CTensor acs1 = slice(acs3, Axis::echo, 0);
  const CTensor one = insert_axis(acs1, Axis::echo, 1);

  const auto single = build_targets(one, slice(one, Axis::coil, 0), s.mask, {3, 3, 13}, 1.0);
  CHECK(single.out_channels == 18);
  CHECK(single.in_channels == 16);
  CHECK(single.samples.size() == 9);
  CHECK(single.samples[0].target.channels == 18);

  const auto joint = build_targets(acs3, slice(acs3, Axis::coil, 0), s.mask, {3, 3, 13}, 1.0);
  CHECK(joint.out_channels == 54);
  CHECK(joint.in_channels == 48);
}

TEST_CASE("offset geometry") {
  const auto m1 = make_uniform_mask({12, 12}, 1, 1, 0);
  const auto g1 = OffsetGeometry::of(m1, 3);
  REQUIRE(g1.cell() == 1);
  CHECK(g1.offsets[0] == std::array<long, 2>{0, 0});
  for (auto& o : g1.echo_offsets) CHECK(o == std::array<long, 2>{0, 0});

  const auto g9 = OffsetGeometry::of(make_uniform_mask({12, 12}, 3, 3, 0), 3);
  CHECK(g9.cell() == 9);
  CHECK(g9.echo_offsets[1] == std::array<long, 2>{0, 1});
  CHECK(g9.echo_offsets[2] == std::array<long, 2>{0, 2});

  const auto g3 = OffsetGeometry::of(make_uniform_mask({12, 12}, 3, 1, 0), 2);
  CHECK(g3.echo_offsets[1] == std::array<long, 2>{1, 0});
}

TEST_CASE("targets sit at the lattice offsets of each node") {
  const Small s = small_problem(2, 1, 2, 1);
  const CTensor acs = extract_acs(s.kspace, s.mask);
  const CTensor tgt = squeeze_axis(slice(acs, Axis::coil, 1), Axis::echo);
  const CTensor tgt_e = insert_axis(tgt, Axis::echo, 0);
  const auto set = build_targets(acs, tgt_e, s.mask, {1, 1, 1}, 0.5);
  // The ACS box starts on an even row, so coset (0, 0) holds nodes at even rows.
  REQUIRE(s.mask.acs().start[0] % 2 == 0);
  const Sample& smp = set.samples[0];
  REQUIRE(smp.target.ext == Ext3{6, 12, 16});
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 12; ++b)
      for (std::size_t l = 0; l < 16; ++l)
        for (std::size_t q = 0; q < 2; ++q) {
          const cplx want = tgt.at({l, 2 * a + q, b}) * 0.5;
          const auto col = static_cast<Eigen::Index>(smp.target.pos(a, b, l));
          CHECK(smp.target.v(static_cast<Eigen::Index>(output_channel(0, q, 2, 0)), col) == want.real());
          CHECK(smp.target.v(static_cast<Eigen::Index>(output_channel(0, q, 2, 1)), col) == want.imag());
          CHECK(smp.mask(static_cast<Eigen::Index>(output_channel(0, q, 2, 0)), col) == 1.0);
        }
  // Inputs carry both coils at the node itself.
  const cplx in = acs.at({1, 0, 3, 4, 5}) * 0.5;
  const auto col = static_cast<Eigen::Index>(smp.input.pos(2, 5, 3));
  CHECK(smp.input.v(static_cast<Eigen::Index>(input_channel(0, 1, 2, 0)), col) == in.real());
  CHECK(smp.input.v(static_cast<Eigen::Index>(input_channel(0, 1, 2, 1)), col) == in.imag());
}

TEST_CASE("scatter inverts gather on acquirable positions") {
  const CTensor x = test::random_tensor({Axis::echo, Axis::kx, Axis::ky, Axis::kz}, {2, 3, 20, 17}, 5);
  for (const SamplingMask& m : std::vector<SamplingMask>{make_uniform_mask({20, 17}, 3, 2, 1), make_elliptical_mask({20, 17}, 2, 2, 1),
                                make_uniform_mask({20, 17}, 1, 1, 0)}) {
    const Volume cells = gather_cells(x, m);
    CHECK(cells.channels == 2 * m.pattern().r1 * m.pattern().r2 * 2);
    const CTensor y = scatter_cells(cells, x, m);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t e = 0; e < 2; ++e)
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t i = 0; i < 20; ++i)
          for (std::size_t j = 0; j < 17; ++j) {
            const cplx want = m.acquirable(i, j) ? x.at({e, r, i, j}) : cplx{};
            CHECK(y.at({e, r, i, j}) == want);
          }
  }
}

TEST_CASE("pass-through model returns exactly the acquired samples") {
  const CTensor k = test::random_tensor({Axis::coil, Axis::kx, Axis::ky, Axis::kz}, {1, 16, 21, 18}, 8);
  SUBCASE("R=1 identity") {
    const auto m = make_uniform_mask({21, 18}, 1, 1, 0);
    const CTensor out = infer_grid(pass_through(2, 2, {3, 3, 13}), k, m, 0.25);
    CHECK(out.axes() == AxisList{Axis::kx, Axis::ky, Axis::kz});
    CHECK(relative_error(out, slice(k, Axis::coil, 0)) < 1e-15);
  }
  SUBCASE("R=3x3 CAIPI, elliptical") {
    const auto m = make_elliptical_mask({21, 18}, 3, 3, 1);
    const CTensor km = apply_mask(k, m);
    const CTensor out = infer_grid(pass_through(2, 18, {3, 3, 13}), km, m, 2.0);
    CHECK(relative_error(out, slice(km, Axis::coil, 0)) < 1e-15);
  }
}

TEST_CASE("ACS smaller than the receptive field is rejected") {
  const Small s = small_problem(2, 1, 3, 3, 24, 6);
  const CTensor acs = extract_acs(s.kspace, s.mask);
  try {
    build_targets(acs, slice(acs, Axis::coil, 0), s.mask, {3, 3, 13}, 1.0);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("too small") != std::string::npos);
  }
}

TEST_CASE("problem validation") {
  Small s = small_problem(2, 1, 2, 2);
  ReconProblem p = problem(s.kspace, s.mask);
  CHECK_NOTHROW(p.validate());
  p.kspace = s.ph.kspace;  // fully sampled data under an undersampled mask
  CHECK_THROWS_AS(p.validate(), DataError);
  p.kspace = s.kspace;
  p.mask = make_uniform_mask({24, 20}, 2, 2, 0);
  CHECK_THROWS_AS(p.validate(), DataError);
  p.mask = s.mask;
  p.mode = ReconMode::eraki_kyt;
  CHECK_THROWS_AS(p.validate(), DataError);
}

TEST_CASE("eRAKI trains one model and the loss drops tenfold") {
  const Small s = small_problem(4, 1, 2, 2);
  ReconProblem p = problem(s.kspace, s.mask);
  p.train = quick(16, 300);
  const ReconResult r = reconstruct(p);
  REQUIRE(r.models.size() == 1);
  const auto& h = r.models[0].history;
  CHECK(h.size() == 300);
  CHECK(h.front() / h.back() >= 10.0);
  CHECK(r.kspace.axes() == AxisList{Axis::echo, Axis::kx, Axis::ky, Axis::kz});
  CHECK(r.image.shape() == r.kspace.shape());
  CHECK(r.kspace.all_finite());
  CHECK(r.models[0].weights.out_channels() == 8);
  CHECK(r.report["models"] == 1);
}

TEST_CASE("RAKI trains one model per coil and keeps acquired samples") {
  const Small s = small_problem(3, 1, 2, 2);
  ReconProblem p = problem(s.kspace, s.mask);
  p.mode = ReconMode::raki_percoil;
  p.train = quick(4, 4);
  const ReconResult r = reconstruct(p);
  CHECK(r.models.size() == 3);
  CHECK(r.report["split_models"] == 6);
  REQUIRE(r.kspace.shape() == s.kspace.shape());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t x = 0; x < 16; ++x)
      for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = 0; j < 24; ++j)
          if (s.mask.sampled(i, j)) CHECK(r.kspace.at({c, 0, x, i, j}) == s.kspace.at({c, 0, x, i, j}));
  CHECK(r.image.axes() == AxisList{Axis::echo, Axis::kx, Axis::ky, Axis::kz});
}

TEST_CASE("joint mode with one echo matches the single-echo path") {
  const Small s = small_problem(2, 1, 2, 2);
  ReconProblem p = problem(s.kspace, s.mask);
  p.train = quick(4, 6);
  const ReconResult a = reconstruct(p);
  p.mode = ReconMode::eraki_joint;
  const ReconResult b = reconstruct(p);
  CHECK(a.models[0].history == b.models[0].history);
  CHECK(a.kspace.storage() == b.kspace.storage());
}

TEST_CASE("joint mode reconstructs all echoes with one model") {
  const Small s = small_problem(2, 3, 2, 2, 24, 12, true);
  ReconProblem p = problem(s.kspace, s.mask);
  p.mode = ReconMode::eraki_joint;
  p.train = quick(4, 4);
  const ReconResult r = reconstruct(p);
  REQUIRE(r.models.size() == 1);
  CHECK(r.models[0].weights.in_channels() == 12);
  CHECK(r.models[0].weights.out_channels() == 24);
  CHECK(r.kspace.extent(Axis::echo) == 3);

  // Unshifted data do not fit the joint masks.
  ReconProblem bad = p;
  bad.kspace = small_problem(2, 3, 2, 2).kspace;
  CHECK_THROWS_AS(reconstruct(bad), DataError);
}

TEST_CASE("deshearing commutes with inference away from the wrap") {
  const std::size_t n0 = 12, n1 = 24;
  CTensor k = test::random_tensor({Axis::coil, Axis::kx, Axis::ky, Axis::kz}, {2, 14, n0, n1}, 21);
  // Support in a central column band keeps the circular shift from wrapping.
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t x = 0; x < 14; ++x)
      for (std::size_t i = 0; i < n0; ++i)
        for (std::size_t j = 0; j < n1; ++j)
          if (j < 8 || j >= 16) k.at({c, x, i, j}) = 0;
  const auto sheared = make_uniform_mask({n0, n1}, 3, 2, 1);
  const auto straight = deshear(sheared);
  const ModelWeights model = init_model(4, eraki_architecture(12, {6, 6, 6, 6}), 4);
  const std::array<Axis, 2> axes{Axis::ky, Axis::kz};

  const CTensor direct = infer_grid(model, apply_mask(k, sheared), sheared, 1.0);
  const CTensor viad =
      reshear(infer_grid(model, deshear(apply_mask(k, sheared), axes, 3, 2, 1), straight, 1.0), axes, 3, 2, 1);
  CHECK(l2_norm(direct) > 0);
  CHECK(relative_error(viad, direct) < 1e-12);
}

TEST_CASE("ky-t mode convolves over time") {
  const std::size_t nt = 8, ny = 32, nx = 16, coils = 3;
  PhantomSpec spec;
  spec.extents = {nx, ny, 1};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = coils;
  spec.echo_type = EchoType::gradient;
  spec.te_ms.clear();
  for (std::size_t t = 0; t < nt; ++t) spec.te_ms.push_back(4.0 * static_cast<double>(t));
  const Phantom ph = make_phantom(spec);
  // [coil, echo, kx, ky, 1] relabelled as [coil, t, kx, ky].
  const CTensor full({Axis::coil, Axis::t, Axis::kx, Axis::ky}, {coils, nt, nx, ny}, ph.kspace.storage());
  AcsBox box;
  box.start = {0, center_window_start(ny, 16)};
  box.length = {nt, 16};
  const auto mask = make_kyt_mask(ny, nt, 4, 1, box);
  ReconProblem p = problem(apply_mask(full, mask), mask);
  p.mode = ReconMode::eraki_kyt;
  p.train = quick(4, 4);
  const ReconResult r = reconstruct(p);
  CHECK(r.models.size() == 1);
  CHECK(r.models[0].weights.in_channels() == 2 * coils);
  CHECK(r.models[0].weights.out_channels() == 8);
  CHECK(r.kspace.axes() == AxisList{Axis::t, Axis::kx, Axis::ky});
  CHECK(r.kspace.all_finite());
}
