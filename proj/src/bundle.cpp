#include "eraki/bundle.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace eraki {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

void put_double(char* dst, double d) {
  const std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(d));
  std::memcpy(dst, &v, 8);
}

double get_double(const char* src) {
  std::uint64_t v = 0;
  std::memcpy(&v, src, 8);
  return std::bit_cast<double>(to_little(v));
}

}  // namespace

fs::path bundle_header_path(const fs::path& stem) {
  fs::path p = stem;
  p += ".json";
  return p;
}

fs::path bundle_payload_path(const fs::path& stem) {
  fs::path p = stem;
  p += ".bin";
  return p;
}

void save_bundle(const CTensor& x, const fs::path& stem, const json& meta) {
  json header;
  header["dtype"] = "complex128";
  header["shape"] = x.shape();
  json axes = json::array();
  for (Axis a : x.axes()) axes.push_back(std::string(axis_name(a)));
  header["axes"] = axes;
  header["byte_order"] = "little";
  header["meta"] = meta.is_null() ? json::object() : meta;

  std::ofstream h(bundle_header_path(stem), std::ios::binary | std::ios::trunc);
  if (!h) throw BundleError(BundleError::Kind::io, "cannot write " + bundle_header_path(stem).string());
  h << header.dump(2) << '\n';

  std::vector<char> payload(16 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    put_double(payload.data() + 16 * i, x[i].real());
    put_double(payload.data() + 16 * i + 8, x[i].imag());
  }
  std::ofstream b(bundle_payload_path(stem), std::ios::binary | std::ios::trunc);
  if (!b) throw BundleError(BundleError::Kind::io, "cannot write " + bundle_payload_path(stem).string());
  b.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!b) throw BundleError(BundleError::Kind::io, "short write on " + bundle_payload_path(stem).string());
}

Bundle read_bundle(const fs::path& stem) {
  std::ifstream h(bundle_header_path(stem), std::ios::binary);
  if (!h) throw BundleError(BundleError::Kind::io, "cannot read " + bundle_header_path(stem).string());
  json header;
  try {
    header = json::parse(h);
  } catch (const json::exception& e) {
    throw BundleError(BundleError::Kind::malformed_header,
                      bundle_header_path(stem).string() + ": " + e.what());
  }

  Shape shape;
  AxisList axes;
  try {
    if (header.at("dtype").get<std::string>() != "complex128")
      throw BundleError(BundleError::Kind::unknown_dtype,
                        "unsupported dtype '" + header.at("dtype").get<std::string>() + "'");
    if (header.at("byte_order").get<std::string>() != "little")
      throw BundleError(BundleError::Kind::bad_byte_order,
                        "unsupported byte order '" + header.at("byte_order").get<std::string>() + "'");
    shape = header.at("shape").get<Shape>();
    for (auto& a : header.at("axes")) axes.push_back(parse_axis(a.get<std::string>()));
  } catch (const json::exception& e) {
    throw BundleError(BundleError::Kind::malformed_header,
                      bundle_header_path(stem).string() + ": " + e.what());
  } catch (const BundleError&) {
    throw;
  } catch (const DataError& e) {
    throw BundleError(BundleError::Kind::malformed_header, e.what());
  }
  if (axes.size() != shape.size())
    throw BundleError(BundleError::Kind::malformed_header, "axes and shape lengths differ");

  std::size_t count = 1;
  for (auto n : shape) count *= n;

  std::ifstream b(bundle_payload_path(stem), std::ios::binary);
  if (!b) throw BundleError(BundleError::Kind::io, "cannot read " + bundle_payload_path(stem).string());
  std::vector<char> payload((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  if (payload.size() != 16 * count)
    throw BundleError(BundleError::Kind::length_mismatch,
                      "payload is " + std::to_string(payload.size()) + " bytes, header implies " +
                          std::to_string(16 * count));

  std::vector<cplx> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = cplx(get_double(payload.data() + 16 * i), get_double(payload.data() + 16 * i + 8));

  Bundle out;
  try {
    out.tensor = CTensor(axes, shape, std::move(data));
  } catch (const DataError& e) {
    throw BundleError(BundleError::Kind::malformed_header, e.what());
  }
  if (header.contains("meta")) out.meta = header["meta"];
  return out;
}

CTensor load_bundle(const fs::path& stem) { return read_bundle(stem).tensor; }

}  // namespace eraki
