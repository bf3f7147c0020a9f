#include "viewtok/conditioning.hpp"

#include <cmath>
#include <string>

#include "viewtok/errors.hpp"

namespace viewtok {

using torch::indexing::Slice;

void ViewpointMlpConfig::validate() const {
  if (num_layers < 1) throw ConfigError("viewpoint MLP needs at least one layer");
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw ConfigError("viewpoint MLP dims must be >= 1");
}

nlohmann::json ViewpointMlpConfig::to_json() const {
  return {{"input_dim", input_dim}, {"hidden_dim", hidden_dim}, {"num_layers", num_layers}, {"output_dim", output_dim}};
}

ViewpointMlpConfig ViewpointMlpConfig::from_json(const nlohmann::json& j) {
  ViewpointMlpConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.validate();
  return c;
}

torch::Tensor AffineFunction::forward(torch::autograd::AutogradContext* ctx, torch::Tensor x, torch::Tensor weight,
                                      torch::Tensor bias, bool relu) {
  torch::Tensor y = torch::addmm(bias, x, weight.t());
  if (relu) y = y.clamp_min(0);
  // For ReLU layers the output doubles as the activation mask (y > 0).
  ctx->save_for_backward({x, weight, y});
  ctx->saved_data["relu"] = relu;
  return y;
}

torch::autograd::variable_list AffineFunction::backward(torch::autograd::AutogradContext* ctx,
                                                        torch::autograd::variable_list grad_outputs) {
  const auto saved = ctx->get_saved_variables();
  const torch::Tensor& x = saved[0];
  const torch::Tensor& weight = saved[1];
  const torch::Tensor& y = saved[2];
  torch::Tensor grad = grad_outputs[0];
  if (ctx->saved_data["relu"].toBool()) grad = grad * (y > 0).to(grad.scalar_type());

  const torch::Tensor grad_x = grad.mm(weight);
  const torch::Tensor grad_w = grad.t().mm(x);
  const torch::Tensor grad_b = grad.sum(0);
  return {grad_x, grad_w, grad_b, torch::Tensor()};
}

ViewpointMlpImpl::ViewpointMlpImpl(const ViewpointMlpConfig& config) : config_(config) {
  config_.validate();
  for (int layer = 0; layer < config_.num_layers; ++layer) {
    const int in = layer == 0 ? config_.input_dim : config_.hidden_dim;
    const int out = layer + 1 == config_.num_layers ? config_.output_dim : config_.hidden_dim;
    weights_.push_back(register_parameter("weight" + std::to_string(layer), torch::zeros({out, in})));
    biases_.push_back(register_parameter("bias" + std::to_string(layer), torch::zeros({out})));
  }
}

void ViewpointMlpImpl::reset_parameters(at::Generator& generator) {
  torch::NoGradGuard no_grad;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    auto& w = weights_[layer];
    if (layer + 1 == weights_.size()) {
      w.normal_(0.0, 0.02, generator);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.size(1)));
      w.uniform_(-bound, bound, generator);
    }
    biases_[layer].zero_();
  }
}

torch::Tensor ViewpointMlpImpl::forward(torch::Tensor encoding) {
  const bool single = encoding.dim() == 1;
  if (single) encoding = encoding.unsqueeze(0);
  if (encoding.dim() != 2 || encoding.size(1) != config_.input_dim) {
    throw ShapeError("viewpoint MLP expects encodings of length " + std::to_string(config_.input_dim));
  }
  torch::Tensor h = encoding;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    const bool relu = layer + 1 < weights_.size();
    h = AffineFunction::apply(h, weights_[layer], biases_[layer], relu);
  }
  return single ? h.squeeze(0) : h;
}

torch::Tensor encode_batch(std::span<const CameraPose> poses, const EncoderOptions& options, torch::Dtype dtype) {
  const auto length = static_cast<std::int64_t>(options.encoding_length());
  torch::Tensor out = torch::empty({static_cast<std::int64_t>(poses.size()), length}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto enc = encode(poses[i], options);
    for (std::int64_t k = 0; k < length; ++k) acc[static_cast<std::int64_t>(i)][k] = enc.data[static_cast<std::size_t>(k)];
  }
  return out.to(dtype);
}

namespace {

void check_caption(std::span<const int> ids, int object_span_end, const torch::Tensor& token_table) {
  if (ids.empty()) throw InputError("caption is empty");
  if (object_span_end < 0 || object_span_end > static_cast<int>(ids.size())) {
    throw InputError("object_span_end outside the caption");
  }
  for (int id : ids) {
    if (id <= Vocabulary::kPadId || id >= token_table.size(0)) {
      throw InputError("out-of-vocabulary token id " + std::to_string(id));
    }
  }
}

}  // namespace

TokenSequence assemble_sequence(std::span<const int> caption_ids, int object_span_end,
                                const torch::Tensor& viewpoint_embedding, const torch::Tensor& token_table) {
  check_caption(caption_ids, object_span_end, token_table);
  if (viewpoint_embedding.dim() != 1 || viewpoint_embedding.size(0) != token_table.size(1)) {
    throw ShapeError("viewpoint embedding width must match the token table");
  }
  const auto ids = torch::tensor(std::vector<std::int64_t>(caption_ids.begin(), caption_ids.end()), torch::kLong);
  const torch::Tensor words = token_table.index_select(0, ids);
  TokenSequence seq;
  seq.embeddings = torch::cat({words.index({Slice(0, object_span_end)}), viewpoint_embedding.unsqueeze(0),
                               words.index({Slice(object_span_end, torch::indexing::None)})});
  seq.viewpoint_index = object_span_end;
  seq.length = static_cast<int>(caption_ids.size()) + 1;
  return seq;
}

TokenBatch assemble_batch(std::span<const Caption> captions, const torch::Tensor& viewpoint_embeddings,
                          const torch::Tensor& token_table) {
  const auto batch = static_cast<std::int64_t>(captions.size());
  if (viewpoint_embeddings.dim() != 2 || viewpoint_embeddings.size(0) != batch ||
      viewpoint_embeddings.size(1) != token_table.size(1)) {
    throw ShapeError("viewpoint embeddings must be [batch, d]");
  }
  std::size_t max_len = 0;
  for (const auto& c : captions) {
    check_caption(c.ids, c.object_span_end, token_table);
    max_len = std::max(max_len, c.ids.size());
  }
  const auto seq_len = static_cast<std::int64_t>(max_len) + 1;

  // Gather indices into [table ; viewpoint rows]: slot i*seq_len + k picks a
  // table row, the viewpoint row of sample i, or the pad row.
  const std::int64_t vocab = token_table.size(0);
  std::vector<std::int64_t> gather(static_cast<std::size_t>(batch * seq_len), Vocabulary::kPadId);
  std::vector<std::uint8_t> pad(gather.size(), 1);
  TokenBatch out;
  for (std::int64_t i = 0; i < batch; ++i) {
    const Caption& c = captions[static_cast<std::size_t>(i)];
    std::int64_t slot = i * seq_len;
    for (int k = 0; k < c.object_span_end; ++k, ++slot) {
      gather[slot] = c.ids[k];
      pad[slot] = 0;
    }
    gather[slot] = vocab + i;
    pad[slot++] = 0;
    for (std::size_t k = c.object_span_end; k < c.ids.size(); ++k, ++slot) {
      gather[slot] = c.ids[k];
      pad[slot] = 0;
    }
    out.viewpoint_index.push_back(c.object_span_end);
  }
  const torch::Tensor rows = torch::cat({token_table, viewpoint_embeddings});
  out.embeddings = rows.index_select(0, torch::tensor(gather, torch::kLong)).view({batch, seq_len, -1});
  out.padding_mask = torch::from_blob(pad.data(), {batch, seq_len}, torch::kUInt8).to(torch::kBool).clone();
  return out;
}

}  // namespace viewtok
