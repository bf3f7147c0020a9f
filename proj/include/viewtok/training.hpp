#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace viewtok {

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 32;
  double lr_new = 2e-4;       // viewpoint MLP and other new parameters
  double lr_backbone = 2e-5;  // generator backbone
  double warmup_fraction = 0.01;
  double grad_clip_norm = 1.0;
  double weight_decay = 0.01;
  int log_every = 50;
  double divergence_loss = 1e4;  // a loss above this, or non-finite, aborts training

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Multiplier on the peak rate: linear warmup over round(warmup_fraction * total)
// iterations, then half-cosine decay reaching 0 at `total`.
double warmup_cosine_factor(int iteration, int total, double warmup_fraction);

// AdamW with two parameter groups: group 0 = new parameters, group 1 = backbone.
// Throws ConfigError if the groups overlap or leave out a trainable parameter of `all`.
std::unique_ptr<torch::optim::AdamW> make_two_group_adamw(const std::vector<torch::Tensor>& new_params,
                                                          const std::vector<torch::Tensor>& backbone_params,
                                                          const std::vector<torch::Tensor>& all,
                                                          const TrainConfig& config);

// Sets every group's rate to its base rate times the schedule factor.
void apply_schedule(torch::optim::Optimizer& optimizer, const std::vector<double>& base_rates, double factor);

// Rescales gradients in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_gradients(const std::vector<torch::Tensor>& params, double max_norm);

// Appends rows to a CSV with a fixed header.
class CsvLog {
 public:
  CsvLog(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace viewtok
