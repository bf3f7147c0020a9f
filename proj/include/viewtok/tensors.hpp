#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "viewtok/dataset.hpp"
#include "viewtok/image.hpp"

namespace viewtok {

// Gray that transparent pixels are composited onto before entering a network.
inline constexpr Rgb kNetworkBackdrop{128, 128, 128};

// 8-bit image -> [3, H, W] float in [-1, 1]; RGBA is composited over kNetworkBackdrop.
torch::Tensor image_to_tensor(const Image& image);
// [3, H, W] in [-1, 1] -> RGB image (values clamped, rounded).
Image tensor_to_image(const torch::Tensor& chw);

// All images of one split stacked to [N, 3, S, S]. Throws ShapeError if any
// image is not `size` x `size`.
torch::Tensor load_split_images(const Dataset& dataset, Split split, int size);

// Reproducible CPU generator.
at::Generator make_generator(std::uint64_t seed);

// Checkpoint file: named tensors of a module plus a JSON metadata string.
void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& module, const nlohmann::json& meta);
// Reads only the metadata.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);
// Loads tensors into an already constructed module; throws InputError on missing or mis-shaped tensors.
void load_checkpoint_tensors(const std::filesystem::path& path, torch::nn::Module& module);

}  // namespace viewtok
