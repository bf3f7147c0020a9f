#include <algorithm>
#include <limits>
#include <string>

#include "viewtok/errors.hpp"
#include "viewtok/renderer.hpp"

namespace viewtok {

namespace {

constexpr NamedColor kPalette[] = {
    {"red", {200, 40, 40}},     {"blue", {40, 70, 200}},   {"green", {40, 160, 60}},
    {"yellow", {220, 200, 40}}, {"purple", {130, 60, 170}}, {"orange", {230, 120, 30}},
};

constexpr Rgb kTireColor{45, 45, 50};

Rgb darker(Rgb c, double f) {
  auto s = [f](std::uint8_t v) { return static_cast<std::uint8_t>(std::clamp(v * f, 0.0, 255.0)); };
  return {s(c.r), s(c.g), s(c.b)};
}

using Corners = std::array<Eigen::Vector3d, 8>;

// Corner i has x-bit (i & 1), y-bit (i & 2), z-bit (i & 4).
Corners box_corners(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  Corners c;
  for (int i = 0; i < 8; ++i) {
    c[i] = Eigen::Vector3d((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  return c;
}

// Shrinks the +x face toward its center: a tapered nose.
Corners tapered(Corners c, double scale_y, double scale_z) {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int i : {1, 3, 5, 7}) center += c[i];
  center /= 4.0;
  for (int i : {1, 3, 5, 7}) {
    c[i].y() = center.y() + scale_y * (c[i].y() - center.y());
    c[i].z() = center.z() + scale_z * (c[i].z() - center.z());
  }
  return c;
}

// Shifts the top (+z) face along x: a slanted slab.
Corners sheared(Corners c, double dx_top) {
  for (int i : {4, 5, 6, 7}) c[i].x() += dx_top;
  return c;
}

void add_hexahedron(std::vector<Triangle>& tris, const Corners& c, Rgb color, bool marker = false) {
  static constexpr int kQuads[6][4] = {{0, 2, 6, 4}, {1, 5, 7, 3}, {0, 4, 5, 1},
                                       {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 6, 7, 5}};
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : c) centroid += p;
  centroid /= 8.0;
  for (const auto& q : kQuads) {
    for (const auto& [a, b, d] : {std::array{q[0], q[1], q[2]}, std::array{q[0], q[2], q[3]}}) {
      Triangle t{{c[a], c[b], c[d]}, color, marker};
      const Eigen::Vector3d n = (t.v[1] - t.v[0]).cross(t.v[2] - t.v[0]);
      const Eigen::Vector3d out = (t.v[0] + t.v[1] + t.v[2]) / 3.0 - centroid;
      if (n.dot(out) < 0.0) std::swap(t.v[1], t.v[2]);
      tris.push_back(t);
    }
  }
}

void add_box(std::vector<Triangle>& tris, Eigen::Vector3d lo, Eigen::Vector3d hi, Rgb color,
             bool marker = false) {
  add_hexahedron(tris, box_corners(lo, hi), color, marker);
}

using V = Eigen::Vector3d;

void build_car(std::vector<Triangle>& t, Rgb body) {
  add_box(t, V(-1.0, -0.45, 0.18), V(0.75, 0.45, 0.55), body);
  add_box(t, V(-0.65, -0.38, 0.55), V(0.25, 0.38, 0.9), darker(body, 0.8));
  add_hexahedron(t, tapered(box_corners(V(0.75, -0.45, 0.18), V(1.15, 0.45, 0.55)), 0.35, 0.55),
                 kMarkerColor, true);
  for (double x0 : {0.35, -0.75}) {
    add_box(t, V(x0, 0.45, 0.0), V(x0 + 0.3, 0.55, 0.3), kTireColor);
    add_box(t, V(x0, -0.55, 0.0), V(x0 + 0.3, -0.45, 0.3), kTireColor);
  }
}

void build_animal(std::vector<Triangle>& t, Rgb body) {
  const Rgb limbs = darker(body, 0.7);
  add_box(t, V(-0.6, -0.22, 0.45), V(0.45, 0.22, 0.8), body);
  for (double x0 : {0.25, -0.55}) {
    add_box(t, V(x0, 0.08, 0.0), V(x0 + 0.14, 0.2, 0.45), limbs);
    add_box(t, V(x0, -0.2, 0.0), V(x0 + 0.14, -0.08, 0.45), limbs);
  }
  add_box(t, V(0.35, -0.18, 0.7), V(0.75, 0.18, 1.05), body);
  add_hexahedron(t, tapered(box_corners(V(0.75, -0.16, 0.72), V(0.98, 0.16, 1.0)), 0.6, 0.6),
                 kMarkerColor, true);
  // Chevron ears, leaning back.
  add_hexahedron(t, sheared(box_corners(V(0.45, 0.06, 1.05), V(0.6, 0.16, 1.22)), -0.08), limbs);
  add_hexahedron(t, sheared(box_corners(V(0.45, -0.16, 1.05), V(0.6, -0.06, 1.22)), -0.08), limbs);
  add_hexahedron(t, sheared(box_corners(V(-0.8, -0.05, 0.7), V(-0.6, 0.05, 0.78)), -0.1), limbs);
}

void build_chair(std::vector<Triangle>& t, Rgb body) {
  const Rgb legs = darker(body, 0.65);
  add_box(t, V(-0.45, -0.45, 0.45), V(0.45, 0.45, 0.55), body);
  // Wedge backrest slanting backward.
  add_hexahedron(t, sheared(box_corners(V(-0.45, -0.45, 0.55), V(-0.33, 0.45, 1.25)), -0.12), body);
  for (double x0 : {0.33, -0.45}) {
    add_box(t, V(x0, 0.33, 0.0), V(x0 + 0.12, 0.45, 0.45), legs);
    add_box(t, V(x0, -0.45, 0.0), V(x0 + 0.12, -0.33, 0.45), legs);
  }
  add_box(t, V(0.05, -0.4, 0.55), V(0.48, 0.4, 0.64), kMarkerColor, true);
}

}  // namespace

std::string_view to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::arrow_car: return "arrow_car";
    case ObjectKind::chevron_animal: return "chevron_animal";
    case ObjectKind::wedge_chair: return "wedge_chair";
  }
  return "unknown";
}

std::string_view object_noun(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::arrow_car: return "car";
    case ObjectKind::chevron_animal: return "dog";
    case ObjectKind::wedge_chair: return "chair";
  }
  return "unknown";
}

ObjectKind object_kind_from_string(std::string_view name) {
  for (ObjectKind k : kAllObjectKinds) {
    if (name == to_string(k) || name == object_noun(k)) return k;
  }
  throw ConfigError("unknown object kind: " + std::string(name));
}

std::span<const NamedColor> object_palette() { return kPalette; }

Rgb object_color(std::string_view name) {
  for (const auto& c : kPalette) {
    if (c.name == name) return c.rgb;
  }
  throw ConfigError("unknown object color: " + std::string(name));
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> bounding_box(const ToyObject& object) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& tri : object.triangles) {
    for (const auto& v : tri.v) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  return {lo, hi};
}

ToyObject make_object(ObjectKind kind, Rgb color) {
  ToyObject obj;
  obj.kind = kind;
  obj.color = color;
  switch (kind) {
    case ObjectKind::arrow_car: build_car(obj.triangles, color); break;
    case ObjectKind::chevron_animal: build_animal(obj.triangles, color); break;
    case ObjectKind::wedge_chair: build_chair(obj.triangles, color); break;
    default: throw ConfigError("unknown object kind");
  }

  const auto [lo, hi] = bounding_box(obj);
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double scale = 1.0 / (hi - lo).maxCoeff();
  for (auto& tri : obj.triangles) {
    for (auto& v : tri.v) v = (v - center) * scale;
  }
  obj.ground_z = (lo.z() - center.z()) * scale;
  return obj;
}

}  // namespace viewtok
