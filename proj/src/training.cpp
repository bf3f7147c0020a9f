#include "viewtok/training.hpp"

#include <cmath>
#include <iomanip>
#include <set>

#include "viewtok/errors.hpp"

namespace viewtok {

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_new > lr_backbone && lr_backbone > 0)) throw ConfigError("need lr_new > lr_backbone > 0");
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) throw ConfigError("warmup_fraction must be in (0, 1)");
  if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (!(divergence_loss > 0)) throw ConfigError("divergence_loss must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},           {"batch_size", batch_size},
          {"lr_new", lr_new},                   {"lr_backbone", lr_backbone},
          {"warmup_fraction", warmup_fraction}, {"grad_clip_norm", grad_clip_norm},
          {"weight_decay", weight_decay},       {"log_every", log_every},
          {"divergence_loss", divergence_loss}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_new = j.value("lr_new", c.lr_new);
  c.lr_backbone = j.value("lr_backbone", c.lr_backbone);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.log_every = j.value("log_every", c.log_every);
  c.divergence_loss = j.value("divergence_loss", c.divergence_loss);
  c.validate();
  return c;
}

double warmup_cosine_factor(int iteration, int total, double warmup_fraction) {
  const int warmup = static_cast<int>(std::lround(warmup_fraction * total));
  if (iteration < warmup) return static_cast<double>(iteration + 1) / (warmup + 1);
  if (iteration >= total) return 0.0;
  const double progress = static_cast<double>(iteration - warmup) / std::max(1, total - warmup);
  return 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::unique_ptr<torch::optim::AdamW> make_two_group_adamw(const std::vector<torch::Tensor>& new_params,
                                                          const std::vector<torch::Tensor>& backbone_params,
                                                          const std::vector<torch::Tensor>& all,
                                                          const TrainConfig& config) {
  std::set<const void*> seen;
  for (const auto* group : {&new_params, &backbone_params}) {
    for (const auto& p : *group) {
      if (!seen.insert(p.unsafeGetTensorImpl()).second) throw ConfigError("parameter assigned to both groups");
    }
  }
  for (const auto& p : all) {
    if (p.requires_grad() && !seen.count(p.unsafeGetTensorImpl())) {
      throw ConfigError("trainable parameter missing from optimizer groups");
    }
  }
  auto options = [&](double lr) {
    return std::make_unique<torch::optim::AdamWOptions>(
        torch::optim::AdamWOptions(lr).weight_decay(config.weight_decay).betas({0.9, 0.999}));
  };
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(new_params, options(config.lr_new));
  groups.emplace_back(backbone_params, options(config.lr_backbone));
  return std::make_unique<torch::optim::AdamW>(groups, torch::optim::AdamWOptions(config.lr_new));
}

void apply_schedule(torch::optim::Optimizer& optimizer, const std::vector<double>& base_rates, double factor) {
  auto& groups = optimizer.param_groups();
  for (std::size_t g = 0; g < groups.size() && g < base_rates.size(); ++g) {
    static_cast<torch::optim::AdamWOptions&>(groups[g].options()).lr(base_rates[g] * factor);
  }
}

double clip_gradients(const std::vector<torch::Tensor>& params, double max_norm) {
  return torch::nn::utils::clip_grad_norm_(params, max_norm);
}

CsvLog::CsvLog(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path), columns_(columns.size()) {
  if (!out_) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void CsvLog::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw InputError("csv row width does not match the header");
  out_ << std::setprecision(8);
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
  out_ << '\n';
  out_.flush();
}

}  // namespace viewtok
