#include "viewtok/regressor.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "viewtok/errors.hpp"
#include "viewtok/stats.hpp"
#include "viewtok/tensors.hpp"
#include "viewtok/training.hpp"

namespace viewtok {

namespace nn = torch::nn;

RegressorConfig RegressorConfig::resnet34() {
  RegressorConfig c;
  c.stage_widths = {64, 128, 256, 512};
  c.stage_strides = {1, 2, 2, 2};
  c.stage_blocks = {3, 4, 6, 3};
  c.head_hidden = 512;
  return c;
}

void RegressorConfig::validate() const {
  if (image_size < 8) throw ConfigError("regressor image_size must be >= 8");
  if (stage_widths.empty() || stage_widths.size() != stage_strides.size() ||
      stage_widths.size() != stage_blocks.size()) {
    throw ConfigError("stage_widths, stage_strides and stage_blocks must have equal nonzero length");
  }
  for (std::size_t i = 0; i < stage_widths.size(); ++i) {
    if (stage_widths[i] < 1 || stage_strides[i] < 1 || stage_blocks[i] < 1) throw ConfigError("invalid stage");
  }
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (!(radius_range.max > radius_range.min)) throw ConfigError("radius range is empty");
}

nlohmann::json RegressorConfig::to_json() const {
  return {{"image_size", image_size},
          {"stage_widths", stage_widths},
          {"stage_strides", stage_strides},
          {"stage_blocks", stage_blocks},
          {"head_hidden", head_hidden},
          {"radius_min", radius_range.min},
          {"radius_max", radius_range.max}};
}

RegressorConfig RegressorConfig::from_json(const nlohmann::json& j) {
  RegressorConfig c = j.value("preset", std::string()) == "resnet34" ? resnet34() : RegressorConfig{};
  c.image_size = j.value("image_size", c.image_size);
  c.stage_widths = j.value("stage_widths", c.stage_widths);
  c.stage_strides = j.value("stage_strides", c.stage_strides);
  c.stage_blocks = j.value("stage_blocks", c.stage_blocks);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.radius_range.min = j.value("radius_min", c.radius_range.min);
  c.radius_range.max = j.value("radius_max", c.radius_range.max);
  c.validate();
  return c;
}

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride) {
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out));
  shortcut_ = register_module("shortcut", nn::Sequential());
  if (stride != 1 || in != out) {
    shortcut_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    shortcut_->push_back(nn::BatchNorm2d(out));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  torch::Tensor y = torch::relu(bn1_(conv1_(x)));
  y = bn2_(conv2_(y));
  return torch::relu(y + (shortcut_->is_empty() ? x : shortcut_->forward(x)));
}

PoseRegressorImpl::PoseRegressorImpl(const RegressorConfig& config) : config_(config) {
  config_.validate();
  const int w0 = config_.stage_widths.front();
  stem_ = register_module("stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, w0, 3).padding(1).bias(false)),
                                                 nn::BatchNorm2d(w0), nn::ReLU()));
  stages_ = register_module("stages", nn::Sequential());
  int in = w0;
  for (std::size_t s = 0; s < config_.stage_widths.size(); ++s) {
    for (int b = 0; b < config_.stage_blocks[s]; ++b) {
      stages_->push_back(BasicBlock(in, config_.stage_widths[s], b == 0 ? config_.stage_strides[s] : 1));
      in = config_.stage_widths[s];
    }
  }
  head_ = register_module("head", nn::Sequential(nn::Linear(in, config_.head_hidden), nn::ReLU(),
                                                 nn::Linear(config_.head_hidden, config_.head_hidden), nn::ReLU(),
                                                 nn::Linear(config_.head_hidden, kPoseDims)));
}

torch::Tensor PoseRegressorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("regressor expects [B, 3, H, W]");
  return head_->forward(stages_->forward(stem_->forward(images)).mean({2, 3}));
}

std::array<double, kPoseDims> pose_targets(const CameraPose& pose, const RadiusRange& range) {
  return {std::sin(pose.azimuth()), std::cos(pose.azimuth()), pose.elevation(),
          normalize_radius(pose.radius(), range), pose.pitch(), pose.yaw()};
}

torch::Tensor pose_targets(std::span<const CameraPose> poses, const RadiusRange& range) {
  torch::Tensor out = torch::empty({static_cast<std::int64_t>(poses.size()), kPoseDims}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto t = pose_targets(poses[i], range);
    for (int k = 0; k < kPoseDims; ++k) acc[static_cast<std::int64_t>(i)][k] = t[k];
  }
  return out.to(torch::kFloat32);
}

CameraPose decode_estimate(std::span<const double> raw6, const RadiusRange& range) {
  if (raw6.size() != kPoseDims) throw ShapeError("raw estimate must have 6 components");
  for (double v : raw6) {
    if (!std::isfinite(v)) throw DegenerateEstimateError("non-finite regressor output");
  }
  const double norm = std::hypot(raw6[0], raw6[1]);
  if (norm < 1e-6) throw DegenerateEstimateError("azimuth (sin, cos) pair has near-zero norm");
  const std::array<double, kPoseDims> unit = {raw6[0] / norm, raw6[1] / norm, raw6[2], raw6[3], raw6[4], raw6[5]};
  try {
    return CameraPose(std::atan2(unit[0], unit[1]), unit[2], range.min + unit[3] * (range.max - range.min), unit[4],
                      unit[5]);
  } catch (const std::exception& e) {
    throw DegenerateEstimateError(std::string("decoded pose is invalid: ") + e.what());
  }
}

torch::Tensor regressor_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask) {
  if (pred.sizes() != target.sizes() || pred.dim() != 2 || pred.size(1) != kPoseDims) {
    throw ShapeError("pred and target must both be [B, 6]");
  }
  if (!mask.any().item<bool>()) throw ConfigError("regressor loss mask selects no component");
  const torch::Tensor m = mask.to(pred.scalar_type());
  return ((pred - target).square() * m).sum(1).mean();
}

std::vector<RegressorSource> regressor_sources(const Dataset& dataset, const RadiusRange& range, int image_size) {
  std::vector<RegressorSource> out;
  for (Split split : {Split::rendered, Split::augmented}) {
    const auto& samples = dataset.split(split);
    if (samples.empty()) continue;
    std::vector<CameraPose> poses;
    for (const auto& s : samples) poses.push_back(s.pose);
    out.push_back({std::string(to_string(split)), load_split_images(dataset, split, image_size),
                   pose_targets(poses, range), kAllComponents});
  }
  return out;
}

void RegressorTrainConfig::validate() const {
  if (steps < 1 || batch_size < 2) throw ConfigError("steps must be >= 1 and batch_size >= 2");
  if (!(lr > 0) || !(weight_decay >= 0)) throw ConfigError("invalid regressor optimizer settings");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ConfigError("warmup_fraction must be in [0, 1)");
  if (!(holdout_fraction > 0 && holdout_fraction < 1)) throw ConfigError("holdout_fraction must be in (0, 1)");
  if (!(noise_std >= 0)) throw ConfigError("noise_std must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

nlohmann::json RegressorTrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"warmup_fraction", warmup_fraction},
          {"holdout_fraction", holdout_fraction},
          {"noise_std", noise_std},
          {"seed", seed},
          {"log_every", log_every}};
}

RegressorTrainConfig RegressorTrainConfig::from_json(const nlohmann::json& j) {
  RegressorTrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.validate();
  return c;
}

namespace {

constexpr const char* kComponentNames[] = {"azimuth", "elevation", "radius", "pitch", "yaw"};

torch::Tensor mask_tensor(const PoseMask& mask) {
  std::vector<float> m(mask.begin(), mask.end());
  return torch::tensor(m);
}

}  // namespace

std::vector<ComponentReport> validation_report(PoseRegressor& model, const RegressorSource& source,
                                               const torch::Tensor& indices) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<torch::Tensor> chunks;
  for (std::int64_t start = 0; start < indices.size(0); start += 128) {
    const torch::Tensor idx = indices.slice(0, start, std::min<std::int64_t>(start + 128, indices.size(0)));
    chunks.push_back(model->forward(source.images.index_select(0, idx)));
  }
  if (was_training) model->train();
  const torch::Tensor pred = torch::cat(chunks).to(torch::kFloat64);
  const torch::Tensor target = source.targets.index_select(0, indices).to(torch::kFloat64);
  auto p = pred.accessor<double, 2>();
  auto t = target.accessor<double, 2>();
  const RadiusRange range = model->config().radius_range;

  std::vector<double> errors[5];
  for (std::int64_t i = 0; i < pred.size(0); ++i) {
    errors[0].push_back(angular_difference(rad_to_deg(std::atan2(p[i][0], p[i][1])),
                                           rad_to_deg(std::atan2(t[i][0], t[i][1]))));
    errors[1].push_back(rad_to_deg(std::abs(p[i][2] - t[i][2])));
    errors[2].push_back(std::abs(p[i][3] - t[i][3]) * (range.max - range.min));
    errors[3].push_back(rad_to_deg(std::abs(p[i][4] - t[i][4])));
    errors[4].push_back(rad_to_deg(std::abs(p[i][5] - t[i][5])));
  }
  const bool labeled[5] = {source.mask[0] && source.mask[1], source.mask[2], source.mask[3], source.mask[4],
                           source.mask[5]};
  std::vector<ComponentReport> rows;
  for (int c = 0; c < 5; ++c) {
    if (!labeled[c]) continue;
    const Summary s = summarize(errors[c]);
    rows.push_back({source.name, kComponentNames[c], errors[c].size(), s.mean, s.median});
  }
  return rows;
}

void write_validation_csv(const std::filesystem::path& path, const std::vector<ComponentReport>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "source,component,count,mean,median\n" << std::setprecision(8);
  for (const auto& r : rows) out << r.source << ',' << r.component << ',' << r.count << ',' << r.mean << ',' << r.median << '\n';
}

RegressorTrainResult train_regressor(const std::vector<RegressorSource>& sources, const RegressorConfig& config,
                                     const RegressorTrainConfig& train, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& loss_csv,
                                     const std::filesystem::path& validation_csv,
                                     const std::function<void(int, double)>& progress) {
  config.validate();
  train.validate();
  if (sources.empty()) throw ConfigError("regressor needs at least one labeled source");
  torch::manual_seed(train.seed);
  at::Generator gen = make_generator(mix_seed(train.seed, 21));

  // Per-source holdout; the training pool is the union of the remaining rows.
  std::vector<torch::Tensor> holdout, pool_source, pool_row;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const auto n = src.images.size(0);
    if (n < 2 || src.targets.size(0) != n) throw InputError("source " + src.name + " needs >= 2 labeled images");
    if (src.images.size(2) != config.image_size || src.images.size(3) != config.image_size) {
      throw ShapeError("source " + src.name + " image size differs from the regressor's");
    }
    const torch::Tensor perm = torch::randperm(n, gen, torch::kLong);
    const auto n_val = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(train.holdout_fraction * n)));
    holdout.push_back(perm.slice(0, 0, n_val));
    const torch::Tensor rows = perm.slice(0, n_val);
    pool_row.push_back(rows);
    pool_source.push_back(torch::full({rows.size(0)}, static_cast<std::int64_t>(s), torch::kLong));
  }
  const torch::Tensor all_rows = torch::cat(pool_row);
  const torch::Tensor all_sources = torch::cat(pool_source);
  std::vector<torch::Tensor> masks;
  for (const auto& src : sources) masks.push_back(mask_tensor(src.mask));

  PoseRegressor model(config);
  model->train();
  torch::optim::AdamW optimizer(model->parameters(),
                                torch::optim::AdamWOptions(train.lr).weight_decay(train.weight_decay));
  std::optional<CsvLog> log;
  if (!loss_csv.empty()) log.emplace(loss_csv, std::vector<std::string>{"iteration", "loss", "lr"});

  RegressorTrainResult result;
  for (int it = 0; it < train.steps; ++it) {
    const double factor = warmup_cosine_factor(it, train.steps, train.warmup_fraction);
    apply_schedule(optimizer, {train.lr}, factor);
    const torch::Tensor pick = torch::randint(all_rows.size(0), {train.batch_size}, gen, torch::kLong);
    std::vector<torch::Tensor> xs, ys, ms;
    auto src_acc = all_sources.index_select(0, pick);
    auto row_acc = all_rows.index_select(0, pick);
    for (std::int64_t i = 0; i < train.batch_size; ++i) {
      const auto s = src_acc[i].item<std::int64_t>();
      const auto r = row_acc[i].item<std::int64_t>();
      xs.push_back(sources[s].images[r]);
      ys.push_back(sources[s].targets[r]);
      ms.push_back(masks[s]);
    }
    torch::Tensor x = torch::stack(xs);
    if (train.noise_std > 0) x = x + train.noise_std * torch::randn(x.sizes(), gen);
    const torch::Tensor loss = regressor_loss(model->forward(x), torch::stack(ys), torch::stack(ms));
    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value)) {
      throw DivergenceError("regressor loss became non-finite at iteration " + std::to_string(it));
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    result.losses.push_back(loss_value);
    const bool report = it % train.log_every == 0 || it + 1 == train.steps;
    if (log && report) log->row({static_cast<double>(it), loss_value, train.lr * factor});
    if (progress && report) progress(it, loss_value);
  }
  model->eval();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto rows = validation_report(model, sources[s], holdout[s]);
    result.validation.insert(result.validation.end(), rows.begin(), rows.end());
  }
  if (!validation_csv.empty()) write_validation_csv(validation_csv, result.validation);
  save_checkpoint(checkpoint, *model,
                  {{"kind", "regressor"}, {"model", config.to_json()}, {"train", train.to_json()}});
  return result;
}

LoadedRegressor load_regressor(const std::filesystem::path& checkpoint) {
  LoadedRegressor out;
  out.meta = read_checkpoint_meta(checkpoint);
  if (out.meta.value("kind", std::string()) != "regressor") throw InputError("not a regressor checkpoint");
  out.model = PoseRegressor(RegressorConfig::from_json(out.meta.at("model")));
  load_checkpoint_tensors(checkpoint, *out.model);
  out.model->eval();
  return out;
}

torch::Tensor predict_raw(PoseRegressor& model, std::span<const Image> images) {
  torch::NoGradGuard no_grad;
  model->eval();
  std::vector<torch::Tensor> outputs;
  for (std::size_t start = 0; start < images.size(); start += 128) {
    std::vector<torch::Tensor> batch;
    for (std::size_t i = start; i < std::min(images.size(), start + 128); ++i) {
      batch.push_back(image_to_tensor(images[i]));
    }
    outputs.push_back(model->forward(torch::stack(batch)));
  }
  if (outputs.empty()) return torch::empty({0, kPoseDims}, torch::kFloat64);
  return torch::cat(outputs).to(torch::kFloat64);
}

}  // namespace viewtok
