#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "viewtok/camera.hpp"
#include "viewtok/dataset.hpp"
#include "viewtok/image.hpp"

namespace viewtok {

// Output layout, also the factorized target layout:
// sin(az), cos(az), el, r_norm, pitch, yaw (angles in radians).
inline constexpr int kPoseDims = 6;
using PoseMask = std::array<bool, kPoseDims>;
inline constexpr PoseMask kAllComponents = {true, true, true, true, true, true};

struct RegressorConfig {
  int image_size = 32;
  std::vector<int> stage_widths = {32, 64, 128, 128};
  std::vector<int> stage_strides = {2, 2, 2, 1};
  std::vector<int> stage_blocks = {1, 1, 1, 1};
  int head_hidden = 256;  // three linear layers: features -> hidden -> hidden -> 6
  RadiusRange radius_range;

  // ResNet-34 layout (64-512 channels, 3-4-6-3 blocks).
  static RegressorConfig resnet34();

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static RegressorConfig from_json(const nlohmann::json& j);
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in, int out, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class PoseRegressorImpl : public torch::nn::Module {
 public:
  explicit PoseRegressorImpl(const RegressorConfig& config);
  // [B, 3, S, S] in [-1, 1] -> raw [B, 6].
  torch::Tensor forward(const torch::Tensor& images);
  const RegressorConfig& config() const { return config_; }

 private:
  RegressorConfig config_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential stages_{nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(PoseRegressor);

std::array<double, kPoseDims> pose_targets(const CameraPose& pose, const RadiusRange& range);
torch::Tensor pose_targets(std::span<const CameraPose> poses, const RadiusRange& range);  // [N, 6] float

// Normalizes the (sin, cos) pair and decodes a pose. Throws DegenerateEstimateError
// when the pair has (near) zero norm or the decoded pose is invalid.
CameraPose decode_estimate(std::span<const double> raw6, const RadiusRange& range);

// Sum of squared errors over the masked components, averaged over the batch.
// pred, target: [B, 6]; mask: [6] or [B, 6] bool. Throws ConfigError if the mask is all false.
torch::Tensor regressor_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask);

// Labeled image source; `mask` marks which pose components carry labels.
struct RegressorSource {
  std::string name;
  torch::Tensor images;   // [N, 3, S, S]
  torch::Tensor targets;  // [N, 6]
  PoseMask mask = kAllComponents;
};

// One source per split of the dataset, fully labeled.
std::vector<RegressorSource> regressor_sources(const Dataset& dataset, const RadiusRange& range, int image_size);

struct RegressorTrainConfig {
  int steps = 4000;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.05;
  double holdout_fraction = 0.1;
  double noise_std = 0.05;  // Gaussian pixel noise added to training inputs
  std::uint64_t seed = 0;
  int log_every = 100;

  void validate() const;
  nlohmann::json to_json() const;
  static RegressorTrainConfig from_json(const nlohmann::json& j);
};

struct ComponentReport {
  std::string source;
  std::string component;  // azimuth, elevation, radius, pitch, yaw
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
};

struct RegressorTrainResult {
  std::vector<double> losses;
  std::vector<ComponentReport> validation;  // held-out split of each source
};

// Holds out `holdout_fraction` of every source, trains, writes the checkpoint.
// Optional CSVs: loss curve and the validation report.
RegressorTrainResult train_regressor(const std::vector<RegressorSource>& sources, const RegressorConfig& config,
                                     const RegressorTrainConfig& train, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& loss_csv = {},
                                     const std::filesystem::path& validation_csv = {},
                                     const std::function<void(int, double)>& progress = {});

// Absolute errors per component (degrees for angles, radius units) over masked components.
std::vector<ComponentReport> validation_report(PoseRegressor& model, const RegressorSource& source,
                                               const torch::Tensor& indices);
void write_validation_csv(const std::filesystem::path& path, const std::vector<ComponentReport>& rows);

struct LoadedRegressor {
  PoseRegressor model{nullptr};
  nlohmann::json meta;
};
LoadedRegressor load_regressor(const std::filesystem::path& checkpoint);

// Raw outputs for a batch of images, [N, 6] double.
torch::Tensor predict_raw(PoseRegressor& model, std::span<const Image> images);

}  // namespace viewtok
