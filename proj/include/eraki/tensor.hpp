#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eraki/error.hpp"

namespace eraki {

using cplx = std::complex<double>;

// Axis labels. Spatial tensors (images, coil maps) reuse kx/ky/kz: the label
// names the axis, the content decides whether it is k-space or image space.
enum class Axis { coil, echo, kx, ky, kz, t, maps };

std::string_view axis_name(Axis a);
Axis parse_axis(std::string_view name);

using Shape = std::vector<std::size_t>;
using AxisList = std::vector<Axis>;

// Row-major complex tensor with labelled axes.
class CTensor {
 public:
  CTensor() = default;
  CTensor(AxisList axes, Shape shape);
  CTensor(AxisList axes, Shape shape, std::vector<cplx> data);

  const Shape& shape() const { return shape_; }
  const AxisList& axes() const { return axes_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool has_axis(Axis a) const;
  // Position of `a` in axes(); throws DataError naming the label.
  std::size_t axis_index(Axis a) const;
  std::size_t extent(Axis a) const { return shape_[axis_index(a)]; }
  Shape strides() const;

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }
  std::vector<cplx>& storage() { return data_; }
  const std::vector<cplx>& storage() const { return data_; }

  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }
  cplx& at(std::initializer_list<std::size_t> idx);
  const cplx& at(std::initializer_list<std::size_t> idx) const;

  bool all_finite() const;

  CTensor& operator*=(cplx s);
  CTensor& operator+=(const CTensor& o);
  CTensor& operator-=(const CTensor& o);

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  AxisList axes_;
  Shape shape_;
  std::vector<cplx> data_;
};

CTensor operator*(cplx s, CTensor x);
CTensor operator+(CTensor a, const CTensor& b);
CTensor operator-(CTensor a, const CTensor& b);

bool same_geometry(const CTensor& a, const CTensor& b);

// Centered orthonormal DFT along the named axes. DC sits at index N/2
// (integer division) on both input and output.
CTensor fftc(const CTensor& x, std::initializer_list<Axis> axes);
CTensor fftc(const CTensor& x, std::span<const Axis> axes);
CTensor ifftc(const CTensor& x, std::initializer_list<Axis> axes);
CTensor ifftc(const CTensor& x, std::span<const Axis> axes);

using ExtentMap = std::map<Axis, std::size_t>;

// Keeps the centered window of each listed axis. The window starts at
// N/2 - M/2 so DC stays at M/2; for mismatched parity the odd sample lands on
// the low-index side of the center.
CTensor crop_center(const CTensor& x, const ExtentMap& target);
// Embeds x into a zero tensor using the same placement rule as crop_center.
CTensor pad_center(const CTensor& x, const ExtentMap& target);

// Start offset used by crop_center/pad_center for extents big -> small.
std::size_t center_window_start(std::size_t big, std::size_t small);

// Reorders axes. `order` must be a permutation of x.axes().
CTensor permute(const CTensor& x, const AxisList& order);

// Inserts a unit-extent axis at position `pos`.
CTensor insert_axis(const CTensor& x, Axis a, std::size_t pos);
// Removes a unit-extent axis.
CTensor squeeze_axis(const CTensor& x, Axis a);

// Slice along `a` at index i (axis removed).
CTensor slice(const CTensor& x, Axis a, std::size_t i);
// Concatenate equally-shaped tensors along a new leading-position axis `a`
// inserted at `pos`.
CTensor stack(std::span<const CTensor> parts, Axis a, std::size_t pos);

double l2_norm(const CTensor& x);

// ||x| - |ref||_2 / ||ref||_2 over magnitudes.
double nrmse(const CTensor& x, const CTensor& ref);
// ||x - ref||_2 / ||ref||_2 on complex values.
double relative_error(const CTensor& x, const CTensor& ref);
// 20 log10(max|ref| / rmse of magnitudes).
double psnr(const CTensor& x, const CTensor& ref);

CTensor magnitude(const CTensor& x);

}  // namespace eraki
