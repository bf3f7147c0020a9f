#include "viewtok/tensors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "viewtok/errors.hpp"

namespace viewtok {

torch::Tensor image_to_tensor(const Image& image) {
  const Image rgb = composite_over(image, kNetworkBackdrop);
  torch::Tensor hwc = torch::from_blob(const_cast<std::uint8_t*>(rgb.pixels.data()), {rgb.height, rgb.width, 3},
                                       torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

Image tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("expected a [3, H, W] tensor");
  const torch::Tensor bytes =
      chw.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0})
          .contiguous();
  Image out(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)), 3);
  std::memcpy(out.pixels.data(), bytes.data_ptr<std::uint8_t>(), out.pixels.size());
  return out;
}

torch::Tensor load_split_images(const Dataset& dataset, Split split, int size) {
  const auto& samples = dataset.split(split);
  torch::Tensor out = torch::empty({static_cast<std::int64_t>(samples.size()), 3, size, size});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Image img = read_png(dataset.image_file(samples[i]));
    if (img.width != size || img.height != size) {
      throw ShapeError("image " + samples[i].id + " is not " + std::to_string(size) + "x" + std::to_string(size));
    }
    out[static_cast<std::int64_t>(i)] = image_to_tensor(img);
  }
  return out;
}

at::Generator make_generator(std::uint64_t seed) {
  at::Generator gen = at::detail::createCPUGenerator(seed);
  return gen;
}

void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& module, const nlohmann::json& meta) {
  torch::serialize::OutputArchive archive;
  for (const auto& item : module.named_parameters()) archive.write(item.key(), item.value().detach());
  for (const auto& item : module.named_buffers()) archive.write(item.key(), item.value().detach(), true);
  archive.write("meta", c10::IValue(meta.dump()));
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Saving to a file names the zip records after the file; a stream keeps the bytes path-independent.
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    archive.save_to(out);
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

}  // namespace

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  c10::IValue value;
  if (!archive.try_read("meta", value) || !value.isString()) throw InputError("checkpoint has no metadata");
  return nlohmann::json::parse(value.toStringRef());
}

void load_checkpoint_tensors(const std::filesystem::path& path, torch::nn::Module& module) {
  auto archive = open_archive(path);
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor target, bool buffer) {
    torch::Tensor value;
    if (!archive.try_read(name, value, buffer)) throw InputError("checkpoint is missing tensor " + name);
    if (value.sizes() != target.sizes()) throw InputError("checkpoint tensor " + name + " has the wrong shape");
    target.copy_(value);
  };
  for (auto& item : module.named_parameters()) copy_into(item.key(), item.value(), false);
  for (auto& item : module.named_buffers()) copy_into(item.key(), item.value(), true);
}

}  // namespace viewtok
