#include "eraki/tensor.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "eraki/parallel.hpp"

namespace eraki {

namespace {

constexpr std::array<std::pair<Axis, std::string_view>, 7> kAxisNames{{
    {Axis::coil, "coil"},
    {Axis::echo, "echo"},
    {Axis::kx, "kx"},
    {Axis::ky, "ky"},
    {Axis::kz, "kz"},
    {Axis::t, "t"},
    {Axis::maps, "maps"},
}};

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void check_layout(const AxisList& axes, const Shape& shape) {
  if (axes.size() != shape.size())
    throw DataError("tensor has " + std::to_string(axes.size()) + " axis labels for rank " +
                    std::to_string(shape.size()));
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (shape[i] == 0) throw DataError("zero extent on axis " + std::string(axis_name(axes[i])));
    for (std::size_t j = i + 1; j < axes.size(); ++j)
      if (axes[i] == axes[j])
        throw DataError("duplicate axis label " + std::string(axis_name(axes[i])));
  }
}

// FFTW planning is not thread-safe; execution with new-array calls is.
class PlanCache {
 public:
  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mu_);
    const long key = static_cast<long>(n) * 2 + (sign > 0 ? 1 : 0);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* a = fftw_alloc_complex(static_cast<std::size_t>(n));
    auto* b = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_1d(n, a, b, sign, FFTW_ESTIMATE);
    fftw_free(a);
    fftw_free(b);
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::unordered_map<long, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

struct FftwDeleter {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

void fft_axis(CTensor& x, std::size_t axis, int sign) {
  const Shape& shape = x.shape();
  const std::size_t n = shape[axis];
  if (n == 1) return;
  const std::size_t inner = product(Shape(shape.begin() + static_cast<long>(axis) + 1, shape.end()));
  const std::size_t outer = x.size() / (n * inner);
  const std::size_t lines = outer * inner;
  const std::size_t center = n / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  fftw_plan plan = plan_cache().get(static_cast<int>(n), sign);
  auto data = x.data();

  parallel_for(lines, [&](std::size_t begin, std::size_t end) {
    FftwBuffer in(fftw_alloc_complex(n));
    FftwBuffer out(fftw_alloc_complex(n));
    for (std::size_t line = begin; line < end; ++line) {
      const std::size_t o = line / inner;
      const std::size_t i = line % inner;
      const std::size_t base = o * n * inner + i;
      // ifftshift: centered index s goes to (s - center) mod n
      for (std::size_t s = 0; s < n; ++s) {
        const cplx v = data[base + s * inner];
        const std::size_t d = (s + n - center) % n;
        in[d][0] = v.real();
        in[d][1] = v.imag();
      }
      fftw_execute_dft(plan, in.get(), out.get());
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t d = (k + center) % n;
        data[base + d * inner] = cplx(out[k][0] * scale, out[k][1] * scale);
      }
    }
  });
}

CTensor transform(const CTensor& x, std::span<const Axis> axes, int sign) {
  CTensor y = x;
  for (Axis a : axes) fft_axis(y, x.axis_index(a), sign);
  return y;
}

// Copies the overlapping centered region between src and dst.
void copy_centered(const CTensor& src, CTensor& dst) {
  const std::size_t r = src.rank();
  std::vector<std::size_t> src_off(r), dst_off(r), len(r);
  for (std::size_t d = 0; d < r; ++d) {
    const std::size_t a = src.shape()[d], b = dst.shape()[d];
    if (a >= b) {
      src_off[d] = center_window_start(a, b);
      dst_off[d] = 0;
      len[d] = b;
    } else {
      src_off[d] = 0;
      dst_off[d] = center_window_start(b, a);
      len[d] = a;
    }
  }
  const Shape ss = src.strides(), ds = dst.strides();
  const std::size_t total = product(len);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t si = 0, di = 0;
    for (std::size_t d = 0; d < r; ++d) {
      si += (idx[d] + src_off[d]) * ss[d];
      di += (idx[d] + dst_off[d]) * ds[d];
    }
    dst[di] = src[si];
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < len[d]) break;
      idx[d] = 0;
    }
  }
}

}  // namespace

std::string_view axis_name(Axis a) {
  for (auto& [axis, name] : kAxisNames)
    if (axis == a) return name;
  return "?";
}

Axis parse_axis(std::string_view name) {
  for (auto& [axis, n] : kAxisNames)
    if (n == name) return axis;
  throw DataError("unknown axis label '" + std::string(name) + "'");
}

CTensor::CTensor(AxisList axes, Shape shape) : axes_(std::move(axes)), shape_(std::move(shape)) {
  check_layout(axes_, shape_);
  data_.assign(product(shape_), cplx{});
}

CTensor::CTensor(AxisList axes, Shape shape, std::vector<cplx> data)
    : axes_(std::move(axes)), shape_(std::move(shape)), data_(std::move(data)) {
  check_layout(axes_, shape_);
  if (data_.size() != product(shape_))
    throw DataError("tensor holds " + std::to_string(data_.size()) + " values but shape implies " +
                    std::to_string(product(shape_)));
}

bool CTensor::has_axis(Axis a) const { return std::find(axes_.begin(), axes_.end(), a) != axes_.end(); }

std::size_t CTensor::axis_index(Axis a) const {
  auto it = std::find(axes_.begin(), axes_.end(), a);
  if (it == axes_.end()) throw DataError("tensor has no axis '" + std::string(axis_name(a)) + "'");
  return static_cast<std::size_t>(it - axes_.begin());
}

Shape CTensor::strides() const {
  Shape s(shape_.size(), 1);
  for (std::size_t d = shape_.size(); d-- > 1;) s[d - 1] = s[d] * shape_[d];
  return s;
}

std::size_t CTensor::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw DataError("index rank mismatch");
  std::size_t off = 0;
  std::size_t d = 0;
  for (std::size_t i : idx) {
    off = off * shape_[d] + i;
    ++d;
  }
  return off;
}

cplx& CTensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
const cplx& CTensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

bool CTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

CTensor& CTensor::operator*=(cplx s) {
  for (auto& v : data_) v *= s;
  return *this;
}

CTensor& CTensor::operator+=(const CTensor& o) {
  if (o.shape_ != shape_) throw DataError("shape mismatch in tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

CTensor& CTensor::operator-=(const CTensor& o) {
  if (o.shape_ != shape_) throw DataError("shape mismatch in tensor subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

CTensor operator*(cplx s, CTensor x) { return x *= s; }
CTensor operator+(CTensor a, const CTensor& b) { return a += b; }
CTensor operator-(CTensor a, const CTensor& b) { return a -= b; }

bool same_geometry(const CTensor& a, const CTensor& b) {
  return a.shape() == b.shape() && a.axes() == b.axes();
}

CTensor fftc(const CTensor& x, std::initializer_list<Axis> axes) {
  return transform(x, std::span<const Axis>(axes.begin(), axes.size()), FFTW_FORWARD);
}
CTensor fftc(const CTensor& x, std::span<const Axis> axes) { return transform(x, axes, FFTW_FORWARD); }
CTensor ifftc(const CTensor& x, std::initializer_list<Axis> axes) {
  return transform(x, std::span<const Axis>(axes.begin(), axes.size()), FFTW_BACKWARD);
}
CTensor ifftc(const CTensor& x, std::span<const Axis> axes) { return transform(x, axes, FFTW_BACKWARD); }

std::size_t center_window_start(std::size_t big, std::size_t small) { return big / 2 - small / 2; }

CTensor crop_center(const CTensor& x, const ExtentMap& target) {
  Shape shape = x.shape();
  for (auto& [axis, n] : target) {
    const std::size_t d = x.axis_index(axis);
    if (n == 0 || n > shape[d])
      throw DataError("crop of axis " + std::string(axis_name(axis)) + " to " + std::to_string(n) +
                      " exceeds extent " + std::to_string(shape[d]));
    shape[d] = n;
  }
  CTensor y(x.axes(), shape);
  copy_centered(x, y);
  return y;
}

CTensor pad_center(const CTensor& x, const ExtentMap& target) {
  Shape shape = x.shape();
  for (auto& [axis, n] : target) {
    const std::size_t d = x.axis_index(axis);
    if (n < shape[d])
      throw DataError("pad of axis " + std::string(axis_name(axis)) + " to " + std::to_string(n) +
                      " is below extent " + std::to_string(shape[d]));
    shape[d] = n;
  }
  CTensor y(x.axes(), shape);
  copy_centered(x, y);
  return y;
}

CTensor permute(const CTensor& x, const AxisList& order) {
  if (order.size() != x.rank()) throw DataError("permute: order has wrong length");
  const std::size_t r = x.rank();
  Shape shape(r);
  std::vector<std::size_t> src_axis(r);
  for (std::size_t d = 0; d < r; ++d) {
    src_axis[d] = x.axis_index(order[d]);
    shape[d] = x.shape()[src_axis[d]];
  }
  CTensor y(order, shape);
  const Shape xs = x.strides();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t n = 0; n < y.size(); ++n) {
    std::size_t si = 0;
    for (std::size_t d = 0; d < r; ++d) si += idx[d] * xs[src_axis[d]];
    y[n] = x[si];
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return y;
}

CTensor insert_axis(const CTensor& x, Axis a, std::size_t pos) {
  AxisList axes = x.axes();
  Shape shape = x.shape();
  if (pos > axes.size()) throw DataError("insert_axis: position out of range");
  axes.insert(axes.begin() + static_cast<long>(pos), a);
  shape.insert(shape.begin() + static_cast<long>(pos), 1);
  return CTensor(axes, shape, std::vector<cplx>(x.data().begin(), x.data().end()));
}

CTensor squeeze_axis(const CTensor& x, Axis a) {
  const std::size_t d = x.axis_index(a);
  if (x.shape()[d] != 1) throw DataError("squeeze of non-unit axis " + std::string(axis_name(a)));
  AxisList axes = x.axes();
  Shape shape = x.shape();
  axes.erase(axes.begin() + static_cast<long>(d));
  shape.erase(shape.begin() + static_cast<long>(d));
  return CTensor(axes, shape, std::vector<cplx>(x.data().begin(), x.data().end()));
}

CTensor slice(const CTensor& x, Axis a, std::size_t i) {
  const std::size_t d = x.axis_index(a);
  const std::size_t n = x.shape()[d];
  if (i >= n) throw DataError("slice index out of range on axis " + std::string(axis_name(a)));
  AxisList axes = x.axes();
  Shape shape = x.shape();
  axes.erase(axes.begin() + static_cast<long>(d));
  shape.erase(shape.begin() + static_cast<long>(d));
  const std::size_t inner = x.strides()[d];
  const std::size_t outer = x.size() / (n * inner);
  std::vector<cplx> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data().begin() + static_cast<long>((o * n + i) * inner), inner,
                out.begin() + static_cast<long>(o * inner));
  return CTensor(axes, shape, std::move(out));
}

CTensor stack(std::span<const CTensor> parts, Axis a, std::size_t pos) {
  if (parts.empty()) throw DataError("stack of zero tensors");
  const CTensor& first = parts.front();
  for (auto& p : parts)
    if (!same_geometry(p, first)) throw DataError("stack: geometry mismatch");
  AxisList axes = first.axes();
  Shape shape = first.shape();
  if (pos > axes.size()) throw DataError("stack: position out of range");
  axes.insert(axes.begin() + static_cast<long>(pos), a);
  shape.insert(shape.begin() + static_cast<long>(pos), parts.size());
  const std::size_t inner = pos < first.rank() ? first.strides()[pos] * first.shape()[pos] : 1;
  const std::size_t outer = first.size() / inner;
  std::vector<cplx> out(first.size() * parts.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < parts.size(); ++k)
      std::copy_n(parts[k].data().begin() + static_cast<long>(o * inner), inner,
                  out.begin() + static_cast<long>((o * parts.size() + k) * inner));
  return CTensor(axes, shape, std::move(out));
}

double l2_norm(const CTensor& x) {
  double s = 0;
  for (auto& v : x.data()) s += std::norm(v);
  return std::sqrt(s);
}

namespace {
void check_pair(const CTensor& x, const CTensor& ref) {
  if (x.shape() != ref.shape()) throw DataError("metric inputs differ in shape");
}
}  // namespace

double nrmse(const CTensor& x, const CTensor& ref) {
  check_pair(x, ref);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::abs(ref[i]);
    const double d = std::abs(x[i]) - r;
    num += d * d;
    den += r * r;
  }
  if (den == 0) throw DataError("nrmse: reference has zero norm");
  return std::sqrt(num / den);
}

double relative_error(const CTensor& x, const CTensor& ref) {
  check_pair(x, ref);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += std::norm(x[i] - ref[i]);
    den += std::norm(ref[i]);
  }
  if (den == 0) throw DataError("relative_error: reference has zero norm");
  return std::sqrt(num / den);
}

double psnr(const CTensor& x, const CTensor& ref) {
  check_pair(x, ref);
  double peak = 0, se = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::abs(ref[i]);
    peak = std::max(peak, r);
    const double d = std::abs(x[i]) - r;
    se += d * d;
  }
  if (peak == 0) throw DataError("psnr: reference is zero");
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / std::sqrt(mse));
}

CTensor magnitude(const CTensor& x) {
  CTensor y = x;
  for (auto& v : y.data()) v = std::abs(v);
  return y;
}

}  // namespace eraki
