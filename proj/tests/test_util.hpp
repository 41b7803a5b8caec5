#pragma once

#include <random>

#include "eraki/tensor.hpp"

namespace eraki::test {

inline CTensor random_tensor(AxisList axes, Shape shape, std::uint64_t seed) {
  CTensor x(std::move(axes), std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.data()) {
    const double re = n(rng);
    v = cplx(re, n(rng));
  }
  return x;
}

inline double sum_sq(const CTensor& x) {
  double s = 0;
  for (auto& v : x.data()) s += std::norm(v);
  return s;
}

}  // namespace eraki::test
