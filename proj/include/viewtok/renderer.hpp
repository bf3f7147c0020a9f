#pragma once

#include <array>
#include <span>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "viewtok/camera.hpp"
#include "viewtok/image.hpp"

namespace viewtok {

// Toy object families. Each has an unambiguous front facing +x.
enum class ObjectKind { arrow_car, chevron_animal, wedge_chair };

inline constexpr std::array<ObjectKind, 3> kAllObjectKinds = {
    ObjectKind::arrow_car, ObjectKind::chevron_animal, ObjectKind::wedge_chair};

std::string_view to_string(ObjectKind kind);
// Accepts the enum spelling ("arrow_car") or the caption noun ("car").
ObjectKind object_kind_from_string(std::string_view name);
// Caption noun: car, dog, chair.
std::string_view object_noun(ObjectKind kind);

// Named body colors used by captions.
struct NamedColor {
  std::string_view name;
  Rgb rgb;
};
std::span<const NamedColor> object_palette();
Rgb object_color(std::string_view name);  // throws ConfigError

inline constexpr Rgb kMarkerColor{240, 240, 240};

struct Triangle {
  std::array<Eigen::Vector3d, 3> v;  // counterclockwise seen from outside
  Rgb color;
  bool front_marker = false;
};

// Flat-colored triangle mesh, centered on its bounding box and scaled so the
// largest bounding-box side is exactly 1 (one object diameter).
struct ToyObject {
  ObjectKind kind = ObjectKind::arrow_car;
  Rgb color;
  std::vector<Triangle> triangles;
  double ground_z = 0.0;  // lowest vertex; procedural floors sit here
};

ToyObject make_object(ObjectKind kind, Rgb color);

// Axis-aligned extent of all vertices.
std::pair<Eigen::Vector3d, Eigen::Vector3d> bounding_box(const ToyObject& object);

enum class BackgroundKind { transparent, flat_color, procedural_texture };
enum class FloorPattern { checker, stripes };

struct Background {
  BackgroundKind kind = BackgroundKind::transparent;
  Rgb color{128, 128, 128};  // flat color, or first floor tone
  Rgb color2{90, 90, 90};    // second floor tone
  Rgb sky{150, 190, 230};
  FloorPattern pattern = FloorPattern::checker;
  double tile = 0.5;   // floor tile size in object diameters
  double phase = 0.0;  // floor pattern offset
};

struct RenderSpec {
  int width = 64;
  int height = 64;
  double fov_deg = kDefaultFovDeg;
  Background background;
  // Direction toward the light, world frame.
  Eigen::Vector3d light_dir = Eigen::Vector3d(0.45, 0.35, 1.0).normalized();

  void validate() const;  // width, height >= 8
};

// Per-pixel flag: nonzero where the visible surface is front-marker geometry.
struct RenderResult {
  Image image;
  std::vector<std::uint8_t> marker_mask;
  std::vector<std::uint8_t> object_mask;
};

// z-buffered, flat-shaded perspective rasterization. Transparent backgrounds
// produce RGBA with alpha 0 off-object, otherwise RGB. Byte-deterministic.
RenderResult render_with_masks(const ToyObject& object, const CameraPose& pose, const RenderSpec& spec);
Image render(const ToyObject& object, const CameraPose& pose, const RenderSpec& spec);

}  // namespace viewtok
