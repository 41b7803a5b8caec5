#include "eraki/quantmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eraki/error.hpp"

namespace eraki {

FitResult fit_decay(const CTensor& echo_images, const std::vector<double>& te_ms, double threshold) {
  if (!echo_images.has_axis(Axis::echo)) throw DataError("decay fit needs an echo axis");
  const std::size_t ne = echo_images.extent(Axis::echo);
  if (ne < 2) throw DataError("decay fit needs at least two echoes, got " + std::to_string(ne));
  if (te_ms.size() != ne)
    throw DataError(std::to_string(te_ms.size()) + " echo times for " + std::to_string(ne) + " echoes");
  if (!(threshold >= 0)) throw ConfigError("signal threshold must be non-negative");
  for (double t : te_ms)
    if (!std::isfinite(t)) throw DataError("echo times must be finite");

  std::vector<std::size_t> order(ne);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return te_ms[a] < te_ms[b]; });
  for (std::size_t i = 1; i < ne; ++i)
    if (te_ms[order[i]] == te_ms[order[i - 1]]) throw DataError("duplicate echo time " + std::to_string(te_ms[order[i]]));

  AxisList rest;
  for (Axis a : echo_images.axes())
    if (a != Axis::echo) rest.push_back(a);
  AxisList lead{Axis::echo};
  lead.insert(lead.end(), rest.begin(), rest.end());
  const CTensor x = permute(echo_images, lead);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t nv = x.size() / ne;

  FitResult r{CTensor(rest, shape), CTensor(rest, shape), CTensor(rest, shape), CTensor(rest, shape)};

  double tm = 0;
  for (std::size_t k : order) tm += te_ms[k];
  tm /= static_cast<double>(ne);
  double sxx = 0;
  for (std::size_t k : order) sxx += (te_ms[k] - tm) * (te_ms[k] - tm);

  std::vector<double> y(ne);
  for (std::size_t v = 0; v < nv; ++v) {
    bool ok = true;
    for (std::size_t i = 0; i < ne && ok; ++i) {
      const double m = std::abs(x[order[i] * nv + v]);
      ok = m > threshold && m > 0;
      y[i] = ok ? std::log(m) : 0.0;
    }
    if (!ok) continue;
    double ym = 0;
    for (std::size_t i = 0; i < ne; ++i) ym += y[i];
    ym /= static_cast<double>(ne);
    double sxy = 0, syy = 0;
    for (std::size_t i = 0; i < ne; ++i) {
      const double dt = te_ms[order[i]] - tm;
      sxy += dt * (y[i] - ym);
      syy += (y[i] - ym) * (y[i] - ym);
    }
    const double slope = sxy / sxx;
    const double intercept = ym - slope * tm;
    const double t = slope < 0 ? std::clamp(-1.0 / slope, kMinDecayMs, kMaxDecayMs) : kMaxDecayMs;
    double ss_res = 0;
    for (std::size_t i = 0; i < ne; ++i) {
      const double e = y[i] - (intercept + slope * te_ms[order[i]]);
      ss_res += e * e;
    }
    r.t2[v] = t;
    r.s0[v] = std::exp(intercept);
    r.r2[v] = syy > 0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    r.valid[v] = 1.0;
  }
  return r;
}

}  // namespace eraki
