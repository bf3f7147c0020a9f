#include "viewtok/camera.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <span>
#include <string>

#include <Eigen/Geometry>

#include "viewtok/errors.hpp"

namespace viewtok {

double wrap_two_pi(double angle) {
  double wrapped = std::fmod(angle, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  // fmod of a tiny negative value can round back up to exactly 2*pi.
  if (wrapped >= kTwoPi) wrapped = 0.0;
  return wrapped;
}

double canonical_azimuth(double azimuth) {
  // Whole-turn offsets leave a few ulps of residue; just below 2*pi that
  // residue would land on the far side of the seam.
  const double wrapped = wrap_two_pi(azimuth);
  return kTwoPi - wrapped < 1e-12 ? 0.0 : wrapped;
}

CameraPose::CameraPose(double azimuth, double elevation, double radius, double pitch, double yaw)
    : azimuth_(canonical_azimuth(azimuth)),
      elevation_(elevation),
      radius_(radius),
      pitch_(pitch),
      yaw_(yaw) {
  if (!std::isfinite(azimuth) || !std::isfinite(elevation) || !std::isfinite(radius) ||
      !std::isfinite(pitch) || !std::isfinite(yaw)) {
    throw ConfigError("camera pose has non-finite component");
  }
  if (radius <= 0.0) throw ConfigError("camera radius must be positive");
  if (std::abs(elevation) >= kPi / 2.0) {
    throw DegeneratePoseError("elevation must lie strictly inside (-90, 90) degrees");
  }
}

CameraPose CameraPose::from_degrees(double azimuth_deg, double elevation_deg, double radius,
                                    double pitch_deg, double yaw_deg) {
  return CameraPose(deg_to_rad(azimuth_deg), deg_to_rad(elevation_deg), radius,
                    deg_to_rad(pitch_deg), deg_to_rad(yaw_deg));
}

double CameraFrame::focal_px(int width) const {
  return 0.5 * width / std::tan(0.5 * deg_to_rad(fov_deg));
}

CameraFrame pose_to_camera_frame(const CameraPose& pose, double fov_deg) {
  if (std::abs(pose.elevation()) >= kPi / 2.0) {
    throw DegeneratePoseError("look-at is undefined for vertical cameras");
  }
  const double ce = std::cos(pose.elevation());
  const double se = std::sin(pose.elevation());
  const double ca = std::cos(pose.azimuth());
  const double sa = std::sin(pose.azimuth());

  CameraFrame frame;
  frame.fov_deg = fov_deg;
  frame.position = pose.radius() * Eigen::Vector3d(ce * ca, ce * sa, se);

  // Look-at with world-up; elevation < 90 degrees keeps the cross product well defined.
  const Eigen::Vector3d world_up(0.0, 0.0, 1.0);
  const Eigen::Vector3d forward = -frame.position.normalized();
  const Eigen::Vector3d right = forward.cross(world_up).normalized();
  const Eigen::Vector3d up = right.cross(forward);
  Eigen::Matrix3d base;
  base.col(0) = right;
  base.col(1) = up;
  base.col(2) = -forward;

  // Yaw about the camera's up axis (+ turns left), then pitch about the
  // yawed right axis (+ tilts down, i.e. a negative right-handed rotation).
  const Eigen::Matrix3d yaw_rot =
      Eigen::AngleAxisd(pose.yaw(), Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d pitch_rot =
      Eigen::AngleAxisd(-pose.pitch(), Eigen::Vector3d::UnitX()).toRotationMatrix();
  frame.rotation = base * yaw_rot * pitch_rot;
  return frame;
}

void SamplingRanges::validate() const {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(radius_min) || bad(radius_max) || bad(elevation_min) || bad(elevation_max) ||
      bad(pitch_bound) || bad(yaw_bound) || bad(azimuth_min) || bad(azimuth_max)) {
    throw ConfigError("sampling ranges must be finite");
  }
  if (radius_min <= 0.0 || radius_min > radius_max) {
    throw ConfigError("sampling ranges: need 0 < radius_min <= radius_max");
  }
  if (elevation_min > elevation_max) throw ConfigError("sampling ranges: elevation_min > elevation_max");
  if (elevation_min <= -kPi / 2.0 || elevation_max >= kPi / 2.0) {
    throw ConfigError("sampling ranges: elevation must stay inside (-90, 90) degrees");
  }
  if (pitch_bound < 0.0 || yaw_bound < 0.0) throw ConfigError("sampling ranges: negative offset bound");
  if (!full_azimuth && azimuth_min > azimuth_max) {
    throw ConfigError("sampling ranges: azimuth_min > azimuth_max");
  }
}

bool SamplingRanges::contains(const CameraPose& pose) const {
  if (pose.radius() < radius_min || pose.radius() > radius_max) return false;
  if (pose.elevation() < elevation_min || pose.elevation() > elevation_max) return false;
  if (std::abs(pose.pitch()) > pitch_bound || std::abs(pose.yaw()) > yaw_bound) return false;
  if (!full_azimuth) {
    // Compare on the circle: the arc [azimuth_min, azimuth_max] may straddle 0.
    const double span = azimuth_max - azimuth_min;
    const double offset = wrap_two_pi(pose.azimuth() - azimuth_min);
    if (span < kTwoPi && offset > span + 1e-12) return false;
  }
  return true;
}

CameraPose sample_pose(Rng& rng, const SamplingRanges& ranges) {
  ranges.validate();
  // Fixed draw order keeps sequences stable when ranges change.
  const double az = ranges.full_azimuth ? uniform(rng, 0.0, kTwoPi)
                                        : uniform(rng, ranges.azimuth_min, ranges.azimuth_max);
  const double el = uniform(rng, ranges.elevation_min, ranges.elevation_max);
  const double r = uniform(rng, ranges.radius_min, ranges.radius_max);
  const double pitch = uniform(rng, -ranges.pitch_bound, ranges.pitch_bound);
  const double yaw = uniform(rng, -ranges.yaw_bound, ranges.yaw_bound);
  return CameraPose(az, el, r, pitch, yaw);
}

namespace {

void check_radius_range(const RadiusRange& range) {
  if (!(range.min < range.max) || !std::isfinite(range.min) || !std::isfinite(range.max)) {
    throw ConfigError("radius range must satisfy min < max");
  }
}

std::atomic<bool> g_clamp_warned{false};

}  // namespace

double normalize_radius(double radius, const RadiusRange& range) {
  check_radius_range(range);
  double r_norm = (radius - range.min) / (range.max - range.min);
  if (r_norm < 0.0 || r_norm > 1.0) {
    if (!g_clamp_warned.exchange(true)) {
      std::cerr << "viewtok: warning: radius " << radius << " outside [" << range.min << ", "
                << range.max << "], clamping\n";
    }
    r_norm = std::clamp(r_norm, 0.0, 1.0);
  }
  return r_norm;
}

double denormalize_radius(double r_norm, const RadiusRange& range) {
  check_radius_range(range);
  return range.min + r_norm * (range.max - range.min);
}

std::string_view to_string(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::factorized: return "factorized";
    case EncodingKind::sinusoidal: return "sinusoidal";
    case EncodingKind::matrix12: return "matrix12";
    case EncodingKind::plucker: return "plucker";
  }
  return "unknown";
}

EncodingKind encoding_kind_from_string(std::string_view name) {
  if (name == "factorized") return EncodingKind::factorized;
  if (name == "sinusoidal") return EncodingKind::sinusoidal;
  if (name == "matrix12") return EncodingKind::matrix12;
  if (name == "plucker") return EncodingKind::plucker;
  throw ConfigError("unknown encoding kind: " + std::string(name));
}

ViewpointEncoding encode_factorized(const CameraPose& pose, const RadiusRange& range) {
  return {EncodingKind::factorized,
          {std::sin(pose.azimuth()), std::cos(pose.azimuth()), pose.elevation(),
           normalize_radius(pose.radius(), range), pose.pitch(), pose.yaw()}};
}

ViewpointEncoding encode_sinusoidal(const CameraPose& pose, int num_freqs, const RadiusRange& range) {
  if (num_freqs < 1) throw ConfigError("sinusoidal encoding needs at least one frequency");
  const double params[5] = {pose.azimuth(), pose.elevation(), normalize_radius(pose.radius(), range),
                            pose.pitch(), pose.yaw()};
  ViewpointEncoding enc{EncodingKind::sinusoidal, {}};
  enc.data.reserve(4 * num_freqs * 5);
  for (double p : params) {
    for (int k = 0; k < num_freqs; ++k) {
      const double scale = std::ldexp(1.0, k);
      enc.data.push_back(std::sin(scale * p));
      enc.data.push_back(std::cos(scale * p));
      enc.data.push_back(std::sin(scale * kPi * p));
      enc.data.push_back(std::cos(scale * kPi * p));
    }
  }
  return enc;
}

ViewpointEncoding encode_matrix12(const CameraPose& pose) {
  const CameraFrame frame = pose_to_camera_frame(pose);
  const Eigen::Matrix3d world_to_cam = frame.rotation.transpose();
  const Eigen::Vector3d t = -world_to_cam * frame.position;
  ViewpointEncoding enc{EncodingKind::matrix12, {}};
  enc.data.reserve(12);
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) enc.data.push_back(world_to_cam(row, col));
    enc.data.push_back(t(row));
  }
  return enc;
}

ViewpointEncoding encode_plucker(const CameraPose& pose, int grid_h, int grid_w) {
  if (grid_h < 1 || grid_w < 1) throw ConfigError("plucker grid must be at least 1x1");
  const CameraFrame frame = pose_to_camera_frame(pose);
  const double focal = frame.focal_px(grid_w);
  ViewpointEncoding enc{EncodingKind::plucker, {}};
  enc.data.reserve(static_cast<std::size_t>(6) * grid_h * grid_w);
  for (int row = 0; row < grid_h; ++row) {
    for (int col = 0; col < grid_w; ++col) {
      const Eigen::Vector3d cam_dir((col + 0.5 - 0.5 * grid_w) / focal,
                                    -(row + 0.5 - 0.5 * grid_h) / focal, -1.0);
      const Eigen::Vector3d d = (frame.rotation * cam_dir).normalized();
      const Eigen::Vector3d m = frame.position.cross(d);
      enc.data.insert(enc.data.end(), {d.x(), d.y(), d.z(), m.x(), m.y(), m.z()});
    }
  }
  return enc;
}

std::size_t EncoderOptions::encoding_length() const {
  switch (kind) {
    case EncodingKind::factorized: return 6;
    case EncodingKind::sinusoidal: return static_cast<std::size_t>(4 * num_freqs * 5);
    case EncodingKind::matrix12: return 12;
    case EncodingKind::plucker: return static_cast<std::size_t>(6 * grid_h * grid_w);
  }
  return 0;
}

ViewpointEncoding encode(const CameraPose& pose, const EncoderOptions& options) {
  switch (options.kind) {
    case EncodingKind::factorized: return encode_factorized(pose, options.radius_range);
    case EncodingKind::sinusoidal:
      return encode_sinusoidal(pose, options.num_freqs, options.radius_range);
    case EncodingKind::matrix12: return encode_matrix12(pose);
    case EncodingKind::plucker: return encode_plucker(pose, options.grid_h, options.grid_w);
  }
  throw ConfigError("unhandled encoding kind");
}

CameraPose decode_factorized(std::span<const double> raw6, const RadiusRange& range) {
  if (raw6.size() != 6) throw ShapeError("factorized vector must have 6 components");
  return CameraPose(std::atan2(raw6[0], raw6[1]), raw6[2], denormalize_radius(raw6[3], range),
                    raw6[4], raw6[5]);
}

double angular_difference(double a_deg, double b_deg) {
  const double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(d, 360.0 - d);
}

nlohmann::json pose_to_json(const CameraPose& pose) {
  return {{"azimuth_deg", rad_to_deg(pose.azimuth())},
          {"elevation_deg", rad_to_deg(pose.elevation())},
          {"radius", pose.radius()},
          {"pitch_deg", rad_to_deg(pose.pitch())},
          {"yaw_deg", rad_to_deg(pose.yaw())}};
}

CameraPose pose_from_json(const nlohmann::json& j) {
  try {
    return CameraPose::from_degrees(j.at("azimuth_deg").get<double>(),
                                    j.at("elevation_deg").get<double>(), j.at("radius").get<double>(),
                                    j.at("pitch_deg").get<double>(), j.at("yaw_deg").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pose record: ") + e.what());
  }
}

nlohmann::json ranges_to_json(const SamplingRanges& r) {
  return {{"radius_min", r.radius_min},
          {"radius_max", r.radius_max},
          {"elevation_min_deg", rad_to_deg(r.elevation_min)},
          {"elevation_max_deg", rad_to_deg(r.elevation_max)},
          {"pitch_bound_deg", rad_to_deg(r.pitch_bound)},
          {"yaw_bound_deg", rad_to_deg(r.yaw_bound)},
          {"full_azimuth", r.full_azimuth},
          {"azimuth_min_deg", rad_to_deg(r.azimuth_min)},
          {"azimuth_max_deg", rad_to_deg(r.azimuth_max)}};
}

SamplingRanges ranges_from_json(const nlohmann::json& j) {
  SamplingRanges r;
  auto deg = [&](const char* key, double fallback_rad) {
    return j.contains(key) ? deg_to_rad(j.at(key).get<double>()) : fallback_rad;
  };
  try {
    r.radius_min = j.value("radius_min", r.radius_min);
    r.radius_max = j.value("radius_max", r.radius_max);
    r.elevation_min = deg("elevation_min_deg", r.elevation_min);
    r.elevation_max = deg("elevation_max_deg", r.elevation_max);
    r.pitch_bound = deg("pitch_bound_deg", r.pitch_bound);
    r.yaw_bound = deg("yaw_bound_deg", r.yaw_bound);
    r.full_azimuth = j.value("full_azimuth", r.full_azimuth);
    r.azimuth_min = deg("azimuth_min_deg", r.azimuth_min);
    r.azimuth_max = deg("azimuth_max_deg", r.azimuth_max);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sampling ranges: ") + e.what());
  }
  r.validate();
  return r;
}

nlohmann::json encoder_options_to_json(const EncoderOptions& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"radius_min", o.radius_range.min},
          {"radius_max", o.radius_range.max},
          {"num_freqs", o.num_freqs},
          {"grid_h", o.grid_h},
          {"grid_w", o.grid_w}};
}

EncoderOptions encoder_options_from_json(const nlohmann::json& j) {
  EncoderOptions o;
  o.kind = encoding_kind_from_string(j.value("kind", std::string("factorized")));
  o.radius_range.min = j.value("radius_min", o.radius_range.min);
  o.radius_range.max = j.value("radius_max", o.radius_range.max);
  o.num_freqs = j.value("num_freqs", o.num_freqs);
  o.grid_h = j.value("grid_h", o.grid_h);
  o.grid_w = j.value("grid_w", o.grid_w);
  check_radius_range(o.radius_range);
  if (o.num_freqs < 1 || o.grid_h < 1 || o.grid_w < 1) throw ConfigError("bad encoder options");
  return o;
}

}  // namespace viewtok
