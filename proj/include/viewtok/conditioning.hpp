#pragma once

#include <span>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "viewtok/camera.hpp"
#include "viewtok/caption.hpp"

namespace viewtok {

struct ViewpointMlpConfig {
  int input_dim = 6;
  int hidden_dim = 1024;
  int num_layers = 3;
  int output_dim = 128;  // token-embedding width

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static ViewpointMlpConfig from_json(const nlohmann::json& j);
  bool operator==(const ViewpointMlpConfig&) const = default;
};

// Affine layer with optional ReLU and a hand-written backward pass.
//   y = x W^T + b, out = relu(y) or y
// x: [B, in], W: [out, in], b: [out].
struct AffineFunction : public torch::autograd::Function<AffineFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, torch::Tensor x, torch::Tensor weight,
                               torch::Tensor bias, bool relu);
  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_outputs);
};

// Maps an encoded camera pose to one token embedding: a stack of affine
// layers with ReLU between them and none after the last.
class ViewpointMlpImpl : public torch::nn::Module {
 public:
  explicit ViewpointMlpImpl(const ViewpointMlpConfig& config);

  // [B, input_dim] -> [B, output_dim]; a 1-D input gives a 1-D output.
  torch::Tensor forward(torch::Tensor encoding);

  // Fan-in uniform for hidden layers; N(0, 0.02) for the last layer, zero biases.
  void reset_parameters(at::Generator& generator);

  const ViewpointMlpConfig& config() const { return config_; }
  std::vector<torch::Tensor>& weights() { return weights_; }
  std::vector<torch::Tensor>& biases() { return biases_; }

 private:
  ViewpointMlpConfig config_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};
TORCH_MODULE(ViewpointMlp);

// Encodes poses into a [B, encoding_length] float tensor.
torch::Tensor encode_batch(std::span<const CameraPose> poses, const EncoderOptions& options,
                           torch::Dtype dtype = torch::kFloat32);

// A caption embedded token by token, with the viewpoint token inserted right
// after the object noun.
struct TokenSequence {
  torch::Tensor embeddings;  // [length, d]
  int viewpoint_index = 0;
  int length = 0;
};

// `token_table` is the [|V|, d] caption embedding table.
TokenSequence assemble_sequence(std::span<const int> caption_ids, int object_span_end,
                                const torch::Tensor& viewpoint_embedding, const torch::Tensor& token_table);

// Batched form used in training: rows are padded to the longest caption.
struct TokenBatch {
  torch::Tensor embeddings;    // [B, L_max + 1, d]
  torch::Tensor padding_mask;  // [B, L_max + 1], true where padded
  std::vector<int> viewpoint_index;
};

TokenBatch assemble_batch(std::span<const Caption> captions, const torch::Tensor& viewpoint_embeddings,
                          const torch::Tensor& token_table);

}  // namespace viewtok
