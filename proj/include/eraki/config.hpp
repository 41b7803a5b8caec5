#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eraki/espirit.hpp"
#include "eraki/grappa.hpp"
#include "eraki/nn.hpp"
#include "eraki/phantom.hpp"
#include "eraki/recon.hpp"
#include "eraki/sampling.hpp"

namespace eraki {

struct MaskConfig {
  std::string kind = "uniform";  // uniform | elliptical | kyt
  std::array<Axis, 2> axes{Axis::ky, Axis::kz};
  std::size_t r1 = 3, r2 = 3, shift = 0;
  std::array<std::size_t, 2> acs{24, 24};
  // Pattern extents; taken from the data when absent.
  std::optional<std::array<std::size_t, 2>> extents;
};

struct ReconConfig {
  std::string method = "eraki";  // zerofill | grappa | raki | eraki | eraki-joint | eraki-kyt
  bool full_res_maps = false;
  GrappaGeometry grappa;
  double grappa_lambda = kGrappaLambda;
  std::size_t metric_margin = 2;
};

struct BenchConfig {
  std::vector<std::string> methods{"grappa", "raki", "eraki"};
  std::size_t repeats = 1;
  bool warmup = true;
};

struct FitConfig {
  std::vector<double> te_ms;
  double threshold = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PhantomSpec phantom;
  // Relabel the echo axis as time and drop a unit kz axis (ky-t experiments).
  bool echo_as_time = false;
  MaskConfig mask;
  EspiritParams espirit;
  TrainConfig train;
  ReconConfig recon;
  BenchConfig bench;
  FitConfig fit;
};

// Parses a full run configuration. `seed` is mandatory; every other field has
// a default. Unknown keys raise ConfigError naming the key path.
RunConfig run_config_from_json(const nlohmann::json& j);
// Effective configuration, defaults included; parses back to the same value.
nlohmann::json to_json(const RunConfig& c);

// Mask for data with the given pattern extents.
SamplingMask build_mask(const MaskConfig& c, const std::array<std::size_t, 2>& extents);

// Phantom k-space in the layout the config asks for: [coil, echo, kx, ky, kz]
// or [coil, t, kx, ky] with echo_as_time.
Phantom build_phantom(const RunConfig& c);

}  // namespace eraki
