#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "eraki/espirit.hpp"
#include "eraki/layout.hpp"
#include "eraki/nn.hpp"
#include "eraki/sampling.hpp"
#include "eraki/tensor.hpp"

namespace eraki {

enum class ReconMode { raki_percoil, eraki, eraki_joint, eraki_kyt };

std::string_view mode_name(ReconMode m);
ReconMode parse_mode(std::string_view s);

struct ReconProblem {
  // Undersampled multi-coil k-space; unsampled entries are zero. Must carry a
  // coil axis, the mask axes and at most one further spatial (readout) axis;
  // an echo axis is optional.
  CTensor kspace;
  // Pattern of echo 0. In joint mode echo e uses echo_shifted_masks(mask)[e].
  SamplingMask mask;
  ReconMode mode = ReconMode::eraki;
  TrainConfig train;
  EspiritParams espirit;
  // Coil maps for the combined target; computed from the ACS when absent.
  std::optional<CTensor> maps;
  // Compute maps at full resolution instead of on the ACS grid.
  bool full_res_maps = false;

  std::size_t echoes() const { return kspace.has_axis(Axis::echo) ? kspace.extent(Axis::echo) : 1; }
  // Throws DataError when data and mask disagree.
  void validate() const;
};

// Lattice geometry shared by training and inference.
struct OffsetGeometry {
  Lattice lattice;
  // Cell offsets (dy, dz), row-major, (0, 0) first.
  std::vector<std::array<long, 2>> offsets;
  // Per-echo sampling offset relative to echo 0's node.
  std::vector<std::array<long, 2>> echo_offsets;

  static OffsetGeometry of(const SamplingMask& mask, std::size_t echoes);
  std::size_t cell() const { return offsets.size(); }
};

struct OffsetTargetSet {
  // One sample per lattice coset of the ACS.
  std::vector<Sample> samples;
  std::size_t in_channels = 0;   // 2 * coils * groups
  std::size_t out_channels = 0;  // 2 * R * groups
  OffsetGeometry geometry;
  double scale = 1.0;  // applied to inputs and targets
};

// Channel layout. Input: ((e * coils + c) * 2 + part). Output:
// ((e * R + q) * 2 + part), part 0 = real, 1 = imaginary.
inline std::size_t input_channel(std::size_t e, std::size_t c, std::size_t coils, std::size_t part) {
  return (e * coils + c) * 2 + part;
}
inline std::size_t output_channel(std::size_t e, std::size_t q, std::size_t r, std::size_t part) {
  return (e * r + q) * 2 + part;
}

// `acs` is the multi-coil ACS (pattern axes cropped to the ACS box), `target`
// the k-space to learn over the same box without a coil axis (combined data
// for eRAKI, a single coil for RAKI). Every echo of `acs` is one input group
// and every echo of `target` one output group. Elements whose receptive
// field or target leaves the ACS or touches a never-acquired position are
// masked out.
OffsetTargetSet build_targets(const CTensor& acs, const CTensor& target, const SamplingMask& mask,
                              Ext3 receptive_field, double scale);

// Runs `model` over the whole grid and scatters the cell predictions back.
// Each echo of `kspace` is one input group (echo e sampled on the lattice
// moved by geometry.echo_offsets[e]). The result has the input's axes minus
// coil, with one echo per output group. Never-acquired positions stay zero.
CTensor infer_grid(const ModelWeights& model, const CTensor& kspace, const SamplingMask& mask, double scale);

// Packs the canonical k-space values at every node of the covering lattice
// into the model's output-channel layout and back; used to check the scatter
// round trip without a network.
// `combined` has no coil axis; each echo is one group.
Volume gather_cells(const CTensor& combined, const SamplingMask& mask);
CTensor scatter_cells(const Volume& cells, const CTensor& like, const SamplingMask& mask);

struct TrainedModel {
  ModelWeights weights;
  std::vector<double> history;
  double seconds = 0;
};

struct ReconResult {
  // eRAKI modes: combined k-space (input axes minus coil). RAKI: multi-coil
  // k-space with acquired samples restored.
  CTensor kspace;
  // Combined complex image over the spatial axes (echo kept).
  CTensor image;
  CTensor maps;
  std::vector<TrainedModel> models;
  double maps_seconds = 0;
  double train_seconds = 0;
  double infer_seconds = 0;
  nlohmann::json report;
};

SensitivityMaps problem_maps(const ReconProblem& p, bool full_res);

ReconResult reconstruct(const ReconProblem& p);

// Zero-filled baseline, combined with `maps` as in combine_images.
CTensor zero_filled_image(const CTensor& kspace, const CTensor& maps);
CTensor rss(const CTensor& images);
// coil_combine when the maps cover the image grid, root-sum-of-squares
// otherwise (no maps, or maps on the ACS grid).
CTensor combine_images(const CTensor& images, const CTensor& maps);

}  // namespace eraki
