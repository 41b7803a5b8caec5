#pragma once

#include <string>

#include "json.hpp"

#include "eraki/config.hpp"
#include "eraki/recon.hpp"

namespace eraki {

struct ImageMetrics {
  double nrmse = 0;
  double psnr = 0;
  std::size_t voxels = 0;
};

// Compares magnitudes, skipping `margin` voxels at both ends of every spatial
// axis longer than 2 * margin.
ImageMetrics image_metrics(const CTensor& image, const CTensor& ref, std::size_t margin = 2);

inline constexpr const char* kMethods[] = {"zerofill", "grappa", "raki", "eraki", "eraki-joint", "eraki-kyt"};

struct MethodOutput {
  std::string method;
  CTensor kspace;
  CTensor image;  // complex combined image, or RSS magnitude
  std::size_t models = 0;
  // Networks when real and imaginary outputs are trained separately.
  std::size_t split_models = 0;
  double learn_seconds = 0;
  double infer_seconds = 0;
  double maps_seconds = 0;
  nlohmann::json details = nlohmann::json::object();
};

// Applies the mask the method expects: echo-shifted patterns for eraki-joint,
// the same pattern on every echo otherwise.
CTensor mask_for_method(const CTensor& kspace_full, const SamplingMask& mask, const std::string& method);

// Runs one reconstruction method. `maps` may be empty (computed on demand for
// the learned methods; RSS for the others).
MethodOutput run_method(const std::string& method, const CTensor& kspace_masked, const SamplingMask& mask,
                        const RunConfig& cfg, const CTensor& maps);

// Learning and reconstruction times for every method of cfg.bench.methods on
// the configured phantom. Time-dependent values live under "timing" keys
// only, so two runs with one seed differ nowhere else.
nlohmann::json run_bench(const RunConfig& cfg);
std::string bench_table(const nlohmann::json& report);

// Removes every "timing" member recursively.
nlohmann::json strip_timing(nlohmann::json j);

std::string cpu_model();

}  // namespace eraki
