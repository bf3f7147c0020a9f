#pragma once

#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "viewtok/rng.hpp"

namespace viewtok {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 35 mm focal length on a 36 mm sensor.
inline constexpr double kDefaultFovDeg = 54.4;

inline constexpr double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline constexpr double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

// Wraps any real angle into [0, 2*pi).
double wrap_two_pi(double angle);

// wrap_two_pi, with values within 1e-12 rad below 2*pi folded to 0.
double canonical_azimuth(double azimuth);

// Object-centric viewpoint. World frame is right-handed with +x the object's
// front and +z up; azimuth is counterclockwise from +x seen from above.
// Radius is in object diameters. Positive pitch tilts the camera down,
// positive yaw turns it left. Roll is always zero.
class CameraPose {
 public:
  CameraPose() = default;
  // Throws DegeneratePoseError for |elevation| >= pi/2, ConfigError for radius <= 0
  // or non-finite values. Azimuth is stored via canonical_azimuth.
  CameraPose(double azimuth, double elevation, double radius, double pitch, double yaw);

  static CameraPose from_degrees(double azimuth_deg, double elevation_deg, double radius,
                                 double pitch_deg, double yaw_deg);

  double azimuth() const { return azimuth_; }
  double elevation() const { return elevation_; }
  double radius() const { return radius_; }
  double pitch() const { return pitch_; }
  double yaw() const { return yaw_; }

  bool operator==(const CameraPose&) const = default;

 private:
  double azimuth_ = 0.0;
  double elevation_ = 0.0;
  double radius_ = 1.5;
  double pitch_ = 0.0;
  double yaw_ = 0.0;
};

// Camera-to-world rigid transform. Columns of `rotation` are the camera's
// right, up and back axes in world coordinates (OpenGL style, looking down -z).
struct CameraFrame {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double fov_deg = kDefaultFovDeg;

  Eigen::Vector3d right() const { return rotation.col(0); }
  Eigen::Vector3d up() const { return rotation.col(1); }
  Eigen::Vector3d forward() const { return -rotation.col(2); }

  // Focal length in pixels for an image `width` pixels wide.
  double focal_px(int width) const;
};

CameraFrame pose_to_camera_frame(const CameraPose& pose, double fov_deg = kDefaultFovDeg);

struct SamplingRanges {
  double radius_min = 4.0 / 3.0;
  double radius_max = 2.0;
  double elevation_min = 0.0;
  double elevation_max = kPi / 4.0;
  double pitch_bound = kPi / 12.0;
  double yaw_bound = kPi / 12.0;
  bool full_azimuth = true;
  // Used only when full_azimuth is false.
  double azimuth_min = 0.0;
  double azimuth_max = 0.0;

  // Throws ConfigError.
  void validate() const;
  bool contains(const CameraPose& pose) const;

  bool operator==(const SamplingRanges&) const = default;
};

CameraPose sample_pose(Rng& rng, const SamplingRanges& ranges);

struct RadiusRange {
  double min = 4.0 / 3.0;
  double max = 2.0;
  bool operator==(const RadiusRange&) const = default;
};

// Affine map of radius into [0, 1]; out-of-range radii are clamped (warned once).
double normalize_radius(double radius, const RadiusRange& range);
double denormalize_radius(double r_norm, const RadiusRange& range);

enum class EncodingKind { factorized, sinusoidal, matrix12, plucker };

std::string_view to_string(EncodingKind kind);
EncodingKind encoding_kind_from_string(std::string_view name);

struct ViewpointEncoding {
  EncodingKind kind = EncodingKind::factorized;
  std::vector<double> data;
};

ViewpointEncoding encode_factorized(const CameraPose& pose, const RadiusRange& range = {});
ViewpointEncoding encode_sinusoidal(const CameraPose& pose, int num_freqs = 4,
                                    const RadiusRange& range = {});
ViewpointEncoding encode_matrix12(const CameraPose& pose);
ViewpointEncoding encode_plucker(const CameraPose& pose, int grid_h, int grid_w);

// Everything needed to turn a pose into the MLP input; stored in checkpoints
// so inference reproduces training normalization exactly.
struct EncoderOptions {
  EncodingKind kind = EncodingKind::factorized;
  RadiusRange radius_range;
  int num_freqs = 4;
  int grid_h = 4;
  int grid_w = 4;

  std::size_t encoding_length() const;
  bool operator==(const EncoderOptions&) const = default;
};

ViewpointEncoding encode(const CameraPose& pose, const EncoderOptions& options);

// Inverse of encode_factorized for a unit (sin, cos) pair.
CameraPose decode_factorized(std::span<const double> raw6, const RadiusRange& range = {});

// Minimal circular distance in degrees, in [0, 180].
double angular_difference(double a_deg, double b_deg);

// Metadata records store degrees; memory holds radians.
nlohmann::json pose_to_json(const CameraPose& pose);
CameraPose pose_from_json(const nlohmann::json& j);

nlohmann::json ranges_to_json(const SamplingRanges& ranges);
SamplingRanges ranges_from_json(const nlohmann::json& j);

nlohmann::json encoder_options_to_json(const EncoderOptions& options);
EncoderOptions encoder_options_from_json(const nlohmann::json& j);

}  // namespace viewtok
