#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace eraki {

using Ext3 = std::array<std::size_t, 3>;

// Real multi-channel volume. Column p of `v` holds all channels at spatial
// position p = (i * ext[1] + j) * ext[2] + l.
struct Volume {
  std::size_t channels = 0;
  Ext3 ext{0, 0, 0};
  Eigen::MatrixXd v;

  Volume() = default;
  Volume(std::size_t c, Ext3 e);
  std::size_t positions() const { return ext[0] * ext[1] * ext[2]; }
  std::size_t pos(std::size_t i, std::size_t j, std::size_t l) const { return (i * ext[1] + j) * ext[2] + l; }
};

// Valid 3D convolution. w is [out, k0*k1*k2*in]; column ((a*k1 + b)*k2 + c)*in + ci
// holds kernel[o][ci][a][b][c].
struct ConvLayer {
  std::size_t in = 0, out = 0;
  Ext3 k{1, 1, 1};
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
  bool relu = false;

  std::size_t taps() const { return k[0] * k[1] * k[2]; }
  double& kernel(std::size_t o, std::size_t ci, std::size_t a, std::size_t bb, std::size_t c) {
    return w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(((a * k[1] + bb) * k[2] + c) * in + ci));
  }
};

struct ModelWeights {
  std::vector<ConvLayer> layers;

  std::size_t in_channels() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t out_channels() const { return layers.empty() ? 0 : layers.back().out; }
  // Elementwise sum of (kernel - 1) plus 1.
  Ext3 receptive_field() const;
  std::size_t parameter_count() const;
  // Throws DataError unless adjacent layers agree on channel counts.
  void check() const;
};

struct LayerShape {
  Ext3 k;
  std::size_t out;
  bool relu;
};

// eRAKI stack: 3x3x7, 1x1x5, 1x1x3, 1x1x1 with `widths` channels and ReLU,
// then a final 1x1x1 layer to `out` channels without ReLU. The last axis is
// the readout.
std::vector<LayerShape> eraki_architecture(std::size_t out, const std::array<std::size_t, 4>& widths = {64, 64, 64, 64});

// Uniform in +-sqrt(2 / fan_in), biases zero.
ModelWeights init_model(std::size_t in, const std::vector<LayerShape>& shape, std::uint64_t seed);

Volume forward(const ModelWeights& m, const Volume& x);

struct TrainConfig {
  double alpha = 0.5;
  double beta = 0.15;
  double lr = 3e-4;
  // If positive, the rate decays geometrically from lr to lr_final over the run.
  double lr_final = 0;
  std::size_t iterations = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::array<std::size_t, 4> widths{64, 64, 64, 64};
  // Use squared L2 norms for the data and weight terms.
  bool l2_squared = false;
  // Weight-penalty normalization: "sum" applies beta to ||theta||_2 as
  // written; "mean" divides the squared norm by the parameter count first.
  std::string reg_norm = "sum";
  // When false, biases keep their initial (zero) value.
  bool train_bias = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// One training pair. `mask` has the target's shape; 0 excludes an element.
struct Sample {
  Volume input;
  Volume target;
  Eigen::MatrixXd mask;
};

struct LossParts {
  double total = 0, l1 = 0, l2 = 0, reg = 0;
  std::size_t valid = 0;
};

// alpha * mean|e| + (1 - alpha) * sqrt(mean e^2) + beta * ||theta||, with e
// over the valid elements of all samples.
LossParts loss(const ModelWeights& m, const std::vector<Volume>& preds, const std::vector<Sample>& samples,
               const TrainConfig& cfg);

struct Gradient {
  LossParts loss;
  ModelWeights grad;  // same shapes as the model
};

Gradient backward(const ModelWeights& m, const std::vector<Sample>& samples, const TrainConfig& cfg);

struct TrainResult {
  ModelWeights model;
  std::vector<double> history;  // loss before each update
  double seconds = 0;
};

// Learning rate used at `step`.
double step_lr(const TrainConfig& cfg, std::size_t step);

// Full-batch Adam. `progress`, if set, is called after every step.
TrainResult train(ModelWeights model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& progress = {});

// Manifest `<stem>.json` plus little-endian float64 `<stem>.layer<i>.bin`
// (kernel as [out, in, k0, k1, k2], then bias).
void save_model(const ModelWeights& m, const std::string& stem, const nlohmann::json& extra = {});
ModelWeights load_model(const std::string& stem, nlohmann::json* extra = nullptr);

}  // namespace eraki
