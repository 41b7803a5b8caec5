#pragma once

#include <filesystem>

#include "json.hpp"

#include "eraki/tensor.hpp"

namespace eraki {

// On-disk tensor bundle: `<stem>.json` holds
//   {"dtype": "complex128", "shape": [...], "axes": [...],
//    "byte_order": "little", "meta": {...}}
// and `<stem>.bin` holds interleaved (re, im) float64 little-endian values.

class BundleError : public DataError {
 public:
  enum class Kind { io, malformed_header, unknown_dtype, bad_byte_order, length_mismatch };

  BundleError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Bundle {
  CTensor tensor;
  nlohmann::json meta = nlohmann::json::object();
};

// `stem` is the path without extension; parent directories must exist.
void save_bundle(const CTensor& x, const std::filesystem::path& stem,
                 const nlohmann::json& meta = nlohmann::json::object());
Bundle read_bundle(const std::filesystem::path& stem);
CTensor load_bundle(const std::filesystem::path& stem);

std::filesystem::path bundle_header_path(const std::filesystem::path& stem);
std::filesystem::path bundle_payload_path(const std::filesystem::path& stem);

}  // namespace eraki
