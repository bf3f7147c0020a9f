#include "viewtok/generator.hpp"

#include <cmath>

#include "viewtok/errors.hpp"
#include "viewtok/tensors.hpp"

namespace viewtok {

namespace nn = torch::nn;
using torch::indexing::Slice;

void GeneratorConfig::validate() const {
  if (image_size < 8 || image_size % 4 != 0) throw ConfigError("image_size must be >= 8 and divisible by 4");
  if (channels < 8 || channels % 8 != 0) throw ConfigError("channels must be a positive multiple of 8");
  if (width < 1 || heads < 1 || (2 * channels) % heads != 0) throw ConfigError("2 * channels must be divisible by heads");
  if (max_caption_length < 1 || sample_steps < 1) throw ConfigError("invalid generator sizes");
  vmlp_config().validate();
}

ViewpointMlpConfig GeneratorConfig::vmlp_config() const {
  ViewpointMlpConfig c;
  c.input_dim = static_cast<int>(encoder.encoding_length());
  c.hidden_dim = vmlp_hidden;
  c.num_layers = vmlp_layers;
  c.output_dim = width;
  return c;
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"image_size", image_size},
          {"channels", channels},
          {"width", width},
          {"heads", heads},
          {"max_caption_length", max_caption_length},
          {"sample_steps", sample_steps},
          {"vmlp_hidden", vmlp_hidden},
          {"vmlp_layers", vmlp_layers},
          {"encoder", encoder_options_to_json(encoder)},
          {"viewpoint_mode", viewpoint_mode == ViewpointTokenMode::mlp ? "mlp" : "constant"}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.channels = j.value("channels", c.channels);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.max_caption_length = j.value("max_caption_length", c.max_caption_length);
  c.sample_steps = j.value("sample_steps", c.sample_steps);
  c.vmlp_hidden = j.value("vmlp_hidden", c.vmlp_hidden);
  c.vmlp_layers = j.value("vmlp_layers", c.vmlp_layers);
  if (j.contains("encoder")) c.encoder = encoder_options_from_json(j.at("encoder"));
  const std::string mode = j.value("viewpoint_mode", std::string("mlp"));
  if (mode == "mlp") {
    c.viewpoint_mode = ViewpointTokenMode::mlp;
  } else if (mode == "constant") {
    c.viewpoint_mode = ViewpointTokenMode::constant;
  } else {
    throw ConfigError("unknown viewpoint_mode: " + mode);
  }
  c.validate();
  return c;
}

torch::Tensor alpha_bar(const torch::Tensor& t) {
  return torch::cos((t * 0.98 + 0.01) * (M_PI / 2)).square();
}

AttentionImpl::AttentionImpl(int query_width, int key_width, int heads) : heads_(heads) {
  q_ = register_module("q", nn::Linear(query_width, query_width));
  k_ = register_module("k", nn::Linear(key_width, query_width));
  v_ = register_module("v", nn::Linear(key_width, query_width));
  out_ = register_module("out", nn::Linear(query_width, query_width));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& keys,
                                     const torch::Tensor& key_padding) {
  const auto b = query.size(0);
  const torch::Tensor q_proj = q_(query);
  const auto d = q_proj.size(2);
  auto split = [&](const torch::Tensor& x) { return x.view({b, x.size(1), heads_, d / heads_}).transpose(1, 2); };
  const torch::Tensor q = split(q_proj);
  const torch::Tensor k = split(k_(keys));
  const torch::Tensor v = split(v_(keys));
  std::optional<torch::Tensor> mask;
  if (key_padding.defined()) mask = key_padding.logical_not().view({b, 1, 1, keys.size(1)});
  const torch::Tensor attended = at::scaled_dot_product_attention(q, k, v, mask);
  return out_(attended.transpose(1, 2).reshape({b, query.size(1), d}));
}

namespace {

nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

ResBlockImpl::ResBlockImpl(int in, int out, int time_width) {
  norm1_ = register_module("norm1", nn::GroupNorm(8, in));
  conv1_ = register_module("conv1", conv3x3(in, out));
  time_ = register_module("time", nn::Linear(time_width, out));
  norm2_ = register_module("norm2", nn::GroupNorm(8, out));
  conv2_ = register_module("conv2", conv3x3(out, out));
  if (in != out) skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& time_embedding) {
  torch::Tensor h = conv1_(torch::silu(norm1_(x))) + time_(time_embedding).unsqueeze(2).unsqueeze(3);
  h = conv2_(torch::silu(norm2_(h)));
  return h + (skip_ ? skip_(x) : x);
}

CrossAttentionImpl::CrossAttentionImpl(int channels, int context_width, int heads) {
  norm_ = register_module("norm", nn::GroupNorm(8, channels));
  attn_ = register_module("attn", Attention(channels, context_width, heads));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context,
                                          const torch::Tensor& context_padding) {
  const torch::Tensor pixels = norm_(x).flatten(2).transpose(1, 2);
  const torch::Tensor out = attn_(pixels, context, context_padding);
  return x + out.transpose(1, 2).reshape(x.sizes());
}

torch::Tensor time_features(const torch::Tensor& t) {
  const torch::Tensor freqs = torch::exp(torch::arange(32, torch::kFloat32) * (-std::log(1000.0) / 32));
  const torch::Tensor angle = t.to(torch::kFloat32).unsqueeze(1) * 1000.0 * freqs.unsqueeze(0);
  return torch::cat({angle.sin(), angle.cos()}, 1);
}

DenoiserImpl::DenoiserImpl(const GeneratorConfig& config, int vocab_size) : config_(config) {
  const int d = config.width;
  const int c = config.channels;
  const int tw = 4 * c;
  token_table_ = register_parameter("token_table", torch::zeros({vocab_size, d}));
  context_pos_ = register_parameter("context_pos", torch::zeros({config.max_caption_length + 1, d}));
  time_mlp_ = register_module("time_mlp", nn::Sequential(nn::Linear(64, tw), nn::SiLU(), nn::Linear(tw, tw)));
  conv_in_ = register_module("conv_in", conv3x3(3, c));
  enc1_ = register_module("enc1", ResBlock(c, c, tw));
  down1_ = register_module("down1", conv3x3(c, c, 2));
  enc2_ = register_module("enc2", ResBlock(c, 2 * c, tw));
  enc2_attn_ = register_module("enc2_attn", CrossAttention(2 * c, d, config.heads));
  down2_ = register_module("down2", conv3x3(2 * c, 2 * c, 2));
  enc3_ = register_module("enc3", ResBlock(2 * c, 4 * c, tw));
  enc3_attn_ = register_module("enc3_attn", CrossAttention(4 * c, d, config.heads));
  mid_ = register_module("mid", ResBlock(4 * c, 4 * c, tw));
  mid_attn_ = register_module("mid_attn", CrossAttention(4 * c, d, config.heads));
  dec3_ = register_module("dec3", ResBlock(8 * c, 4 * c, tw));
  dec3_attn_ = register_module("dec3_attn", CrossAttention(4 * c, d, config.heads));
  dec2_ = register_module("dec2", ResBlock(6 * c, 2 * c, tw));
  dec2_attn_ = register_module("dec2_attn", CrossAttention(2 * c, d, config.heads));
  dec1_ = register_module("dec1", ResBlock(3 * c, c, tw));
  norm_out_ = register_module("norm_out", nn::GroupNorm(8, c));
  conv_out_ = register_module("conv_out", conv3x3(c, 3));
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& noisy, const torch::Tensor& t, const TokenBatch& context) {
  if (noisy.dim() != 4 || noisy.size(1) != 3 || noisy.size(2) != config_.image_size ||
      noisy.size(3) != config_.image_size) {
    throw ShapeError("denoiser expects [B, 3, " + std::to_string(config_.image_size) + ", " +
                     std::to_string(config_.image_size) + "]");
  }
  const auto len = context.embeddings.size(1);
  if (len > context_pos_.size(0)) throw InputError("token sequence longer than max_caption_length + 1");
  const torch::Tensor ctx = context.embeddings + context_pos_.index({Slice(0, len)});
  const torch::Tensor& pad = context.padding_mask;
  const torch::Tensor temb = time_mlp_->forward(time_features(t));
  auto up = [](const torch::Tensor& x) {
    return torch::upsample_nearest2d(x, std::vector<std::int64_t>{x.size(2) * 2, x.size(3) * 2});
  };

  const torch::Tensor h1 = enc1_(conv_in_(noisy), temb);
  const torch::Tensor h2 = enc2_attn_(enc2_(down1_(h1), temb), ctx, pad);
  const torch::Tensor h3 = enc3_attn_(enc3_(down2_(h2), temb), ctx, pad);
  torch::Tensor h = mid_attn_(mid_(h3, temb), ctx, pad);
  h = dec3_attn_(dec3_(torch::cat({h, h3}, 1), temb), ctx, pad);
  h = dec2_attn_(dec2_(torch::cat({up(h), h2}, 1), temb), ctx, pad);
  h = dec1_(torch::cat({up(h), h1}, 1), temb);
  return conv_out_(torch::silu(norm_out_(h)));
}

ToyGeneratorImpl::ToyGeneratorImpl(const GeneratorConfig& config, int vocab_size) : config_(config) {
  config_.validate();
  backbone_ = register_module("backbone", Denoiser(config_, vocab_size));
  vmlp_ = register_module("vmlp", ViewpointMlp(config_.vmlp_config()));
}

void ToyGeneratorImpl::reset_parameters(std::uint64_t seed) {
  at::Generator gen = make_generator(seed);
  torch::NoGradGuard no_grad;
  for (auto& item : backbone_->named_parameters()) {
    const std::string& name = item.key();
    torch::Tensor& p = item.value();
    const bool is_norm = name.find("norm") != std::string::npos;
    if (name == "token_table" || name == "context_pos") {
      p.normal_(0.0, 0.02, gen);
    } else if (is_norm) {
      name.ends_with("weight") ? p.fill_(1.0) : p.zero_();
    } else if (p.dim() >= 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.numel() / p.size(0)));
      p.uniform_(-bound, bound, gen);
    } else {
      p.zero_();
    }
  }
  vmlp_->reset_parameters(gen);
}

TokenBatch ToyGeneratorImpl::context(std::span<const Caption> captions, std::span<const CameraPose> poses) {
  if (captions.size() != poses.size()) throw ShapeError("captions and poses differ in count");
  for (const auto& c : captions) {
    if (static_cast<int>(c.ids.size()) > config_.max_caption_length) {
      throw InputError("caption longer than max_caption_length");
    }
  }
  torch::Tensor encodings = encode_batch(poses, config_.encoder);
  if (config_.viewpoint_mode == ViewpointTokenMode::constant) encodings = torch::zeros_like(encodings);
  return assemble_batch(captions, vmlp_->forward(encodings), backbone_->token_table());
}

torch::Tensor ToyGeneratorImpl::forward(const torch::Tensor& noisy, const torch::Tensor& t, const TokenBatch& ctx) {
  return backbone_->forward(noisy, t, ctx);
}

torch::Tensor ToyGeneratorImpl::sample(std::span<const Caption> captions, std::span<const CameraPose> poses,
                                       std::span<const std::uint64_t> seeds) {
  if (seeds.size() != captions.size()) throw ShapeError("need one seed per sample");
  torch::NoGradGuard no_grad;
  const auto b = static_cast<std::int64_t>(captions.size());
  const int s = config_.image_size;
  const TokenBatch ctx = context(captions, poses);
  torch::Tensor x = torch::empty({b, 3, s, s});
  for (std::int64_t i = 0; i < b; ++i) {
    at::Generator gen = make_generator(seeds[static_cast<std::size_t>(i)]);
    x[i] = torch::randn({3, s, s}, gen);
  }
  const torch::Tensor ts = torch::linspace(1.0, 0.0, config_.sample_steps + 1, torch::kFloat64);
  torch::Tensor x0;
  for (int step = 0; step < config_.sample_steps; ++step) {
    const double t = ts[step].item<double>();
    const double t_next = ts[step + 1].item<double>();
    x0 = forward(x, torch::full({b}, t), ctx).clamp(-1.0, 1.0);
    const double ab = alpha_bar(torch::tensor(t, torch::kFloat64)).item<double>();
    const double ab_next = alpha_bar(torch::tensor(t_next, torch::kFloat64)).item<double>();
    const torch::Tensor eps = (x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    x = std::sqrt(ab_next) * x0 + std::sqrt(1.0 - ab_next) * eps;
  }
  return x0;
}

std::vector<torch::Tensor> ToyGeneratorImpl::new_parameters() { return vmlp_->parameters(); }
std::vector<torch::Tensor> ToyGeneratorImpl::backbone_parameters() { return backbone_->parameters(); }

GeneratorTrainOptions GeneratorTrainOptions::from_json(const nlohmann::json& j) {
  GeneratorTrainOptions o;
  if (j.contains("train")) o.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("model")) o.model = GeneratorConfig::from_json(j.at("model"));
  o.seed = j.value("seed", o.seed);
  const std::string mixing = j.value("mixing", std::string("exact_per_batch"));
  if (mixing == "exact_per_batch") {
    o.mixing = MixingMode::exact_per_batch;
  } else if (mixing == "per_sample_probability") {
    o.mixing = MixingMode::per_sample_probability;
  } else {
    throw ConfigError("unknown mixing mode: " + mixing);
  }
  return o;
}

namespace {

nlohmann::json generator_meta(const GeneratorTrainOptions& options, int iterations) {
  const Vocabulary vocab;
  return {{"kind", "generator"},
          {"model", options.model.to_json()},
          {"train", options.train.to_json()},
          {"seed", options.seed},
          {"iterations", iterations},
          {"vocab_size", vocab.size()},
          {"vocab_fingerprint", vocab.fingerprint()}};
}

}  // namespace

GeneratorTrainResult train_generator(const Dataset& dataset, const GeneratorTrainOptions& options,
                                     const std::filesystem::path& checkpoint) {
  options.train.validate();
  options.model.validate();
  if (dataset.manifest.image_size != options.model.image_size) {
    throw ConfigError("dataset image size " + std::to_string(dataset.manifest.image_size) +
                      " differs from the generator's " + std::to_string(options.model.image_size));
  }
  torch::manual_seed(options.seed);
  const Vocabulary vocab;
  ToyGenerator model(options.model, static_cast<int>(vocab.size()));
  model->reset_parameters(mix_seed(options.seed, 11));
  model->train();

  const torch::Tensor images[2] = {load_split_images(dataset, Split::rendered, options.model.image_size),
                                   load_split_images(dataset, Split::augmented, options.model.image_size)};
  MixedBatchSampler sampler(dataset, options.train.batch_size, mix_seed(options.seed, 12), options.mixing);
  at::Generator noise_gen = make_generator(mix_seed(options.seed, 13));

  auto optimizer = make_two_group_adamw(model->new_parameters(), model->backbone_parameters(), model->parameters(),
                                        options.train);
  const std::vector<double> base_rates = {options.train.lr_new, options.train.lr_backbone};
  const std::vector<torch::Tensor> all_params = model->parameters();

  std::optional<CsvLog> log;
  if (!options.loss_csv.empty()) log.emplace(options.loss_csv, std::vector<std::string>{"iteration", "loss", "lr_new", "lr_backbone", "grad_norm"});

  GeneratorTrainResult result;
  const int total = options.train.iterations;
  for (int it = 0; it < total; ++it) {
    const double factor = warmup_cosine_factor(it, total, options.train.warmup_fraction);
    apply_schedule(*optimizer, base_rates, factor);

    const auto refs = sampler.next_batch();
    std::vector<Caption> captions;
    std::vector<CameraPose> poses;
    std::vector<torch::Tensor> clean;
    for (const auto& ref : refs) {
      const Sample& s = dataset.split(ref.split)[ref.index];
      captions.push_back(s.caption);
      poses.push_back(s.pose);
      clean.push_back(images[ref.split == Split::rendered ? 0 : 1][static_cast<std::int64_t>(ref.index)]);
    }
    const torch::Tensor x0 = torch::stack(clean);
    const auto b = x0.size(0);
    const torch::Tensor t = torch::rand({b}, noise_gen);
    const torch::Tensor ab = alpha_bar(t).view({b, 1, 1, 1});
    const torch::Tensor eps = torch::randn(x0.sizes(), noise_gen);
    const torch::Tensor noisy = ab.sqrt() * x0 + (1 - ab).sqrt() * eps;

    const TokenBatch ctx = model->context(captions, poses);
    const torch::Tensor loss = torch::mse_loss(model->forward(noisy, t, ctx), x0);
    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value) || loss_value > options.train.divergence_loss) {
      const auto diag = checkpoint.string() + ".diverged";
      save_checkpoint(diag, *model, generator_meta(options, it));
      throw DivergenceError("generator loss diverged (" + std::to_string(loss_value) + ") at iteration " + std::to_string(it) +
                            "; diagnostic checkpoint written to " + diag);
    }
    optimizer->zero_grad();
    loss.backward();
    const double grad_norm = clip_gradients(all_params, options.train.grad_clip_norm);
    optimizer->step();

    result.losses.push_back(loss_value);
    if (log && (it % options.train.log_every == 0 || it + 1 == total)) {
      log->row({static_cast<double>(it), loss_value, base_rates[0] * factor, base_rates[1] * factor, grad_norm});
    }
    if (options.progress && (it % options.train.log_every == 0 || it + 1 == total)) options.progress(it, loss_value);
  }
  model->eval();
  save_checkpoint(checkpoint, *model, generator_meta(options, total));
  return result;
}

LoadedGenerator load_generator(const std::filesystem::path& checkpoint) {
  LoadedGenerator out;
  out.meta = read_checkpoint_meta(checkpoint);
  if (out.meta.value("kind", std::string()) != "generator") throw InputError("not a generator checkpoint");
  const Vocabulary vocab;
  if (out.meta.value("vocab_fingerprint", std::string()) != vocab.fingerprint()) {
    throw ConfigError("checkpoint vocabulary does not match this build");
  }
  const GeneratorConfig config = GeneratorConfig::from_json(out.meta.at("model"));
  out.model = ToyGenerator(config, static_cast<int>(vocab.size()));
  load_checkpoint_tensors(checkpoint, *out.model);
  out.model->eval();
  return out;
}

std::vector<Image> generate_images(ToyGenerator& model, std::span<const Caption> captions,
                                   std::span<const CameraPose> poses, std::span<const std::uint64_t> seeds) {
  const torch::Tensor batch = model->sample(captions, poses, seeds);
  std::vector<Image> out;
  for (std::int64_t i = 0; i < batch.size(0); ++i) out.push_back(tensor_to_image(batch[i]));
  return out;
}

Image generate_image(ToyGenerator& model, const Caption& caption, const CameraPose& pose, std::uint64_t seed) {
  return generate_images(model, std::span(&caption, 1), std::span(&pose, 1), std::span(&seed, 1)).front();
}

}  // namespace viewtok
