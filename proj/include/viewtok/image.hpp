#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace viewtok {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

// Interleaved 8-bit image, row-major, 3 (RGB) or 4 (RGBA) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  bool operator==(const Image&) const = default;
};

// Alpha-composites an RGBA image over a flat color; RGB input is returned unchanged.
Image composite_over(const Image& image, Rgb background);

// Mean absolute per-channel difference (0..255) between two images of equal shape.
double mean_abs_difference(const Image& a, const Image& b);

// Throws IoError.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace viewtok
