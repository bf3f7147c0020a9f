#include <algorithm>
#include <cmath>
#include <limits>

#include "viewtok/errors.hpp"
#include "viewtok/renderer.hpp"

namespace viewtok {

namespace {

constexpr double kNear = 1e-2;
constexpr double kAmbient = 0.35;
constexpr double kDiffuse = 0.65;

struct ScreenVertex {
  double x, y;     // pixel coordinates, y down
  double inv_depth;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Rgb shade(Rgb base, double intensity) {
  return {to_byte(base.r * intensity), to_byte(base.g * intensity), to_byte(base.b * intensity)};
}

// Sutherland-Hodgman against the near plane z_cam <= -kNear.
std::vector<Eigen::Vector3d> clip_near(const std::array<Eigen::Vector3d, 3>& tri) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(4);
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& a = tri[i];
    const Eigen::Vector3d& b = tri[(i + 1) % 3];
    const bool a_in = a.z() <= -kNear;
    const bool b_in = b.z() <= -kNear;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      const double t = (-kNear - a.z()) / (b.z() - a.z());
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

class Rasterizer {
 public:
  Rasterizer(const CameraFrame& frame, const RenderSpec& spec, RenderResult& out)
      : frame_(frame),
        spec_(spec),
        out_(out),
        focal_(frame.focal_px(spec.width)),
        depth_(static_cast<std::size_t>(spec.width) * spec.height, 0.0) {}

  void draw(const Triangle& tri) {
    const Eigen::Vector3d normal = (tri.v[1] - tri.v[0]).cross(tri.v[2] - tri.v[0]).normalized();
    const double lambert = std::max(0.0, normal.dot(spec_.light_dir));
    const Rgb color = shade(tri.color, kAmbient + kDiffuse * lambert);

    const Eigen::Matrix3d world_to_cam = frame_.rotation.transpose();
    std::array<Eigen::Vector3d, 3> cam;
    for (int i = 0; i < 3; ++i) cam[i] = world_to_cam * (tri.v[i] - frame_.position);
    const auto poly = clip_near(cam);
    if (poly.size() < 3) return;

    std::vector<ScreenVertex> screen;
    screen.reserve(poly.size());
    for (const auto& p : poly) {
      const double inv_depth = 1.0 / -p.z();
      screen.push_back({0.5 * spec_.width + focal_ * p.x() * inv_depth,
                        0.5 * spec_.height - focal_ * p.y() * inv_depth, inv_depth});
    }
    for (std::size_t i = 1; i + 1 < screen.size(); ++i) {
      fill(screen[0], screen[i], screen[i + 1], color, tri.front_marker);
    }
  }

 private:
  void fill(const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c, Rgb color, bool marker) {
    const double area = edge(a, b, c.x, c.y);
    if (std::abs(area) < 1e-12) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(spec_.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(spec_.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    const double sign = area > 0.0 ? 1.0 : -1.0;
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = sign * edge(b, c, px, py);
        const double w1 = sign * edge(c, a, px, py);
        const double w2 = sign * edge(a, b, px, py);
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double inv_area = 1.0 / (sign * area);
        const double inv_depth = (w0 * a.inv_depth + w1 * b.inv_depth + w2 * c.inv_depth) * inv_area;
        const std::size_t idx = static_cast<std::size_t>(y) * spec_.width + x;
        if (inv_depth <= depth_[idx]) continue;
        depth_[idx] = inv_depth;
        std::uint8_t* px_out = out_.image.at(x, y);
        px_out[0] = color.r;
        px_out[1] = color.g;
        px_out[2] = color.b;
        if (out_.image.channels == 4) px_out[3] = 255;
        out_.marker_mask[idx] = marker ? 1 : 0;
        out_.object_mask[idx] = 1;
      }
    }
  }

  const CameraFrame& frame_;
  const RenderSpec& spec_;
  RenderResult& out_;
  double focal_;
  std::vector<double> depth_;  // 1/depth, 0 = empty
};

Rgb floor_color(const Background& bg, const Eigen::Vector3d& hit) {
  const auto cell = [&](double v) { return static_cast<long>(std::floor((v + bg.phase) / bg.tile)); };
  long parity = 0;
  switch (bg.pattern) {
    case FloorPattern::checker: parity = cell(hit.x()) + cell(hit.y()); break;
    case FloorPattern::stripes: parity = cell(hit.x()); break;
  }
  return (parity & 1) ? bg.color2 : bg.color;
}

void fill_background(const ToyObject& object, const CameraFrame& frame, const RenderSpec& spec,
                     Image& image) {
  const Background& bg = spec.background;
  if (bg.kind == BackgroundKind::transparent) return;  // zero-initialized RGBA
  const double focal = frame.focal_px(spec.width);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Rgb c = bg.color;
      if (bg.kind == BackgroundKind::procedural_texture) {
        // Ray-cast an infinite floor under the object; sky above the horizon.
        const Eigen::Vector3d cam_dir((x + 0.5 - 0.5 * spec.width) / focal,
                                      -(y + 0.5 - 0.5 * spec.height) / focal, -1.0);
        const Eigen::Vector3d d = (frame.rotation * cam_dir).normalized();
        if (d.z() < -1e-9) {
          const double t = (object.ground_z - frame.position.z()) / d.z();
          c = floor_color(bg, frame.position + t * d);
        } else {
          c = shade(bg.sky, 0.9 + 0.1 * d.z());
        }
      }
      std::uint8_t* px = image.at(x, y);
      px[0] = c.r;
      px[1] = c.g;
      px[2] = c.b;
    }
  }
}

}  // namespace

void RenderSpec::validate() const {
  if (width < 8 || height < 8) throw ConfigError("render size must be at least 8x8");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("field of view must be in (0, 180)");
  if (background.tile <= 0.0) throw ConfigError("floor tile size must be positive");
}

RenderResult render_with_masks(const ToyObject& object, const CameraPose& pose, const RenderSpec& spec) {
  spec.validate();
  const CameraFrame frame = pose_to_camera_frame(pose, spec.fov_deg);
  const int channels = spec.background.kind == BackgroundKind::transparent ? 4 : 3;
  RenderResult out;
  out.image = Image(spec.width, spec.height, channels);
  out.marker_mask.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
  out.object_mask.assign(out.marker_mask.size(), 0);
  fill_background(object, frame, spec, out.image);
  Rasterizer raster(frame, spec, out);
  for (const auto& tri : object.triangles) raster.draw(tri);
  return out;
}

Image render(const ToyObject& object, const CameraPose& pose, const RenderSpec& spec) {
  return render_with_masks(object, pose, spec).image;
}

}  // namespace viewtok
