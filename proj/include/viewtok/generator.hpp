#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "viewtok/camera.hpp"
#include "viewtok/caption.hpp"
#include "viewtok/conditioning.hpp"
#include "viewtok/dataset.hpp"
#include "viewtok/image.hpp"
#include "viewtok/training.hpp"

namespace viewtok {

// `constant` feeds the viewpoint MLP a zero vector, so the token carries no
// pose information (ablation baseline).
enum class ViewpointTokenMode { mlp, constant };

struct GeneratorConfig {
  int image_size = 32;  // divisible by 4
  int channels = 32;    // UNet base width; levels use 1x, 2x, 4x
  int width = 128;      // token width d
  int heads = 4;
  int max_caption_length = 8;
  int sample_steps = 10;
  int vmlp_hidden = 1024;
  int vmlp_layers = 3;
  EncoderOptions encoder;
  ViewpointTokenMode viewpoint_mode = ViewpointTokenMode::mlp;

  void validate() const;  // throws ConfigError
  ViewpointMlpConfig vmlp_config() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// Diffusion noise level: abar(t) = cos^2((0.98 t + 0.01) pi / 2), t in [0, 1].
torch::Tensor alpha_bar(const torch::Tensor& t);

// Multi-head attention; keys may have a different width than queries.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int query_width, int key_width, int heads);
  // query: [B, Lq, query_width], keys: [B, Lk, key_width].
  // key_padding: [B, Lk] true where the key is ignored; may be undefined.
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& keys, const torch::Tensor& key_padding = {});

 private:
  int heads_;
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Attention);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int time_width);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& time_embedding);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear time_{nullptr};
};
TORCH_MODULE(ResBlock);

// Residual cross-attention from feature-map pixels to the token sequence.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int channels, int context_width, int heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context, const torch::Tensor& context_padding);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  Attention attn_{nullptr};
};
TORCH_MODULE(CrossAttention);

// Three-level UNet predicting the clean image from a noisy one, conditioned
// on a token sequence through cross-attention at the two coarser levels.
// Owns the caption embedding table.
class DenoiserImpl : public torch::nn::Module {
 public:
  DenoiserImpl(const GeneratorConfig& config, int vocab_size);
  torch::Tensor forward(const torch::Tensor& noisy, const torch::Tensor& t, const TokenBatch& context);
  const torch::Tensor& token_table() const { return token_table_; }

 private:
  GeneratorConfig config_;
  torch::Tensor token_table_;
  torch::Tensor context_pos_;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Conv2d conv_in_{nullptr}, down1_{nullptr}, down2_{nullptr}, conv_out_{nullptr};
  ResBlock enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr}, mid_{nullptr}, dec3_{nullptr}, dec2_{nullptr},
      dec1_{nullptr};
  CrossAttention enc2_attn_{nullptr}, enc3_attn_{nullptr}, mid_attn_{nullptr}, dec3_attn_{nullptr},
      dec2_attn_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
};
TORCH_MODULE(Denoiser);

// Sinusoidal features of 1000 t: [B] -> [B, 64].
torch::Tensor time_features(const torch::Tensor& t);

class ToyGeneratorImpl : public torch::nn::Module {
 public:
  ToyGeneratorImpl(const GeneratorConfig& config, int vocab_size);

  void reset_parameters(std::uint64_t seed);
  TokenBatch context(std::span<const Caption> captions, std::span<const CameraPose> poses);
  // Clean-image prediction for a noisy batch.
  torch::Tensor forward(const torch::Tensor& noisy, const torch::Tensor& t, const TokenBatch& context);
  // Deterministic DDIM sampling; sample i starts from noise drawn with seeds[i].
  torch::Tensor sample(std::span<const Caption> captions, std::span<const CameraPose> poses,
                       std::span<const std::uint64_t> seeds);

  std::vector<torch::Tensor> new_parameters();       // viewpoint MLP
  std::vector<torch::Tensor> backbone_parameters();  // everything else

  const GeneratorConfig& config() const { return config_; }
  Denoiser& backbone() { return backbone_; }
  ViewpointMlp& viewpoint_mlp() { return vmlp_; }

 private:
  GeneratorConfig config_;
  Denoiser backbone_{nullptr};
  ViewpointMlp vmlp_{nullptr};
};
TORCH_MODULE(ToyGenerator);

struct GeneratorTrainOptions {
  TrainConfig train;
  GeneratorConfig model;
  std::uint64_t seed = 0;
  MixingMode mixing = MixingMode::exact_per_batch;
  std::filesystem::path loss_csv;  // optional
  std::function<void(int iteration, double loss)> progress;

  static GeneratorTrainOptions from_json(const nlohmann::json& j);
};

struct GeneratorTrainResult {
  std::vector<double> losses;  // one per iteration
};

// Trains on both splits of `dataset` and writes the checkpoint. When the loss
// diverges (see TrainConfig::divergence_loss), saves `<checkpoint>.diverged`
// and throws DivergenceError.
GeneratorTrainResult train_generator(const Dataset& dataset, const GeneratorTrainOptions& options,
                                     const std::filesystem::path& checkpoint);

struct LoadedGenerator {
  ToyGenerator model{nullptr};
  nlohmann::json meta;
};

// Throws ConfigError when the vocabulary fingerprint differs from the current one.
LoadedGenerator load_generator(const std::filesystem::path& checkpoint);

// One image; byte-identical for identical (checkpoint, caption, pose, seed).
Image generate_image(ToyGenerator& model, const Caption& caption, const CameraPose& pose, std::uint64_t seed);
std::vector<Image> generate_images(ToyGenerator& model, std::span<const Caption> captions,
                                   std::span<const CameraPose> poses, std::span<const std::uint64_t> seeds);

}  // namespace viewtok
