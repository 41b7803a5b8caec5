#include <cmath>
#include <map>

#include "doctest.h"
#include "eraki/phantom.hpp"
#include "eraki/quantmap.hpp"

using namespace eraki;

namespace {

CTensor decay(std::vector<double> s) {
  CTensor x({Axis::echo, Axis::kx}, {s.size(), 1});
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i];
  return x;
}

}  // namespace

TEST_CASE("two-point decay") {
  const FitResult r = fit_decay(decay({1.0, 0.5}), {0.0, 10.0});
  CHECK(std::abs(r.t2[0].real() - 10.0 / std::log(2.0)) < 1e-9);
  CHECK(r.s0[0].real() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.r2[0].real() == 1.0);
  CHECK(r.valid[0].real() == 1.0);
  CHECK(r.t2.axes() == AxisList{Axis::kx});
}

TEST_CASE("phantom relaxation times are recovered per region") {
  PhantomSpec spec;
  spec.extents = {1, 48, 48};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = 2;
  spec.te_ms = {10, 40, 70};
  for (EchoType type : {EchoType::spin, EchoType::gradient}) {
    spec.echo_type = type;
    const Phantom ph = make_phantom(spec);
    const FitResult r = fit_decay(ph.combined, spec.te_ms);
    const CTensor& truth = type == EchoType::spin ? ph.t2_true : ph.t2star_true;
    std::map<double, std::pair<std::size_t, double>> regions;  // truth -> (voxels, worst relative error)
    for (std::size_t v = 0; v < truth.size(); ++v) {
      if (ph.support[v].real() == 0) {
        CHECK(r.valid[v].real() == 0.0);
        continue;
      }
      auto& [n, worst] = regions[truth[v].real()];
      ++n;
      worst = std::max(worst, std::abs(r.t2[v].real() - truth[v].real()) / truth[v].real());
    }
    if (type == EchoType::spin)
      for (double want : {30.0, 50.0, 80.0}) CHECK(regions.count(want) == 1);
    for (auto& [t, stats] : regions) {
      CAPTURE(t);
      CHECK(stats.second < 0.01);
    }
  }
}

TEST_CASE("scale invariance and echo permutation") {
  const CTensor s = decay({3.0, 2.1, 1.2, 0.9});
  const std::vector<double> te{5, 15, 25, 35};
  const FitResult a = fit_decay(s, te);
  const FitResult b = fit_decay(std::complex<double>(7.5, 0) * s, te);
  CHECK(b.t2[0].real() == doctest::Approx(a.t2[0].real()).epsilon(1e-12));
  CHECK(b.r2[0].real() == doctest::Approx(a.r2[0].real()).epsilon(1e-12));
  CHECK(a.r2[0].real() < 1.0);

  const FitResult c = fit_decay(decay({1.2, 3.0, 0.9, 2.1}), {25, 5, 35, 15});
  CHECK(c.t2[0] == a.t2[0]);
  CHECK(c.s0[0] == a.s0[0]);
  CHECK(c.r2[0] == a.r2[0]);
}

TEST_CASE("degenerate signals") {
  const FitResult flat = fit_decay(decay({2.0, 2.0, 2.0}), {0, 10, 20});
  CHECK(flat.t2[0].real() == kMaxDecayMs);
  CHECK(flat.r2[0].real() == 1.0);
  const FitResult rising = fit_decay(decay({1.0, 2.0}), {0, 10});
  CHECK(rising.t2[0].real() == kMaxDecayMs);
  const FitResult fast = fit_decay(decay({1.0, 1e-100}), {0, 10});
  CHECK(fast.t2[0].real() == kMinDecayMs);
  const FitResult dark = fit_decay(decay({1.0, 0.05}), {0, 10}, 0.1);
  CHECK(dark.valid[0].real() == 0.0);
  CHECK(dark.t2[0].real() == 0.0);
}

TEST_CASE("input errors") {
  CHECK_THROWS_AS(fit_decay(decay({1.0}), {0}), DataError);
  CHECK_THROWS_AS(fit_decay(decay({1.0, 0.5}), {10, 10}), DataError);
  CHECK_THROWS_AS(fit_decay(decay({1.0, 0.5}), {0, 10, 20}), DataError);
  CHECK_THROWS_AS(fit_decay(decay({1.0, 0.5}), {0, 10}, -1), ConfigError);
  CTensor no_echo({Axis::kx}, {2});
  CHECK_THROWS_AS(fit_decay(no_echo, {0, 10}), DataError);
}
