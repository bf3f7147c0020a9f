#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "viewtok/camera.hpp"
#include "viewtok/caption.hpp"
#include "viewtok/dataset.hpp"
#include "viewtok/image.hpp"
#include "viewtok/stats.hpp"

namespace viewtok {

class ToyGeneratorImpl;
class PoseRegressorImpl;

// easy: object seen in training; diverse: kind-color combination never trained on.
enum class ObjectGroup { easy, diverse };
// main: poses from the training ranges; back_view: azimuth in [135, 225] deg;
// high_elevation: elevation fixed at high_elevation_deg.
enum class Subset { main, back_view, high_elevation };

std::string_view to_string(ObjectGroup group);
std::string_view to_string(Subset subset);

struct EvalCase {
  ObjectSpec object;
  ObjectGroup group = ObjectGroup::easy;
  Subset subset = Subset::main;
  Caption caption;
  CameraPose requested;
  std::uint64_t seed = 0;  // image noise seed
};

struct TestSpec {
  std::uint64_t seed = 1;
  SamplingRanges ranges;
  std::vector<ObjectSpec> easy;
  std::vector<ObjectSpec> diverse;
  // Background phrases cycled over views; "" means a plain caption.
  std::vector<std::string> backgrounds = {""};
  int views_per_object = 8;
  int back_views_per_object = 4;
  int high_elevation_views_per_object = 4;
  double high_elevation_deg = 40.0;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static TestSpec from_json(const nlohmann::json& j);

  // Deterministic list of cases: per object, main views then back views then
  // high-elevation views.
  std::vector<EvalCase> cases() const;
};

struct ComponentErrors {
  double azimuth = 0.0;    // degrees, circular
  double elevation = 0.0;  // degrees
  double radius = 0.0;
  double pitch = 0.0;  // degrees
  double yaw = 0.0;    // degrees
};

struct EvalRecord {
  EvalCase eval_case;
  std::optional<CameraPose> estimated;  // empty when the estimate was degenerate
  ComponentErrors errors;
  std::string note;

  bool excluded() const { return !estimated.has_value(); }
};

ComponentErrors pose_errors(const CameraPose& requested, const CameraPose& estimated);

// Decodes a raw estimate and scores it; degenerate estimates become excluded records.
EvalRecord score_case(const EvalCase& eval_case, std::span<const double> raw6, const RadiusRange& range);

struct MetricsTable {
  std::size_t count = 0;     // scored records
  std::size_t excluded = 0;  // degenerate estimates, not in the statistics
  Summary azimuth, elevation, radius, pitch, yaw;
};

MetricsTable aggregate(std::span<const EvalRecord> records);

using RecordFilter = std::function<bool(const EvalRecord&)>;
struct NamedGroup {
  std::string name;
  RecordFilter filter;
};

struct BreakdownRow {
  std::string group;
  std::optional<MetricsTable> table;  // empty when no record falls in the group
};

std::vector<BreakdownRow> error_breakdown(std::span<const EvalRecord> records, std::span<const NamedGroup> groups);

// whole/easy/diverse over the main subset, then the same over the challenging
// subsets, then back-view and high-elevation alone.
std::vector<NamedGroup> standard_groups();

using ImageSource = std::function<std::vector<Image>(std::span<const EvalCase>)>;
// One raw 6-vector per image.
using PoseEstimator = std::function<std::vector<std::array<double, 6>>(std::span<const Image>, std::span<const EvalCase>)>;

struct EvalResult {
  std::vector<EvalRecord> records;
  MetricsTable metrics;  // main subset
  std::vector<BreakdownRow> breakdown;
  double excluded_fraction = 0.0;
  bool valid = true;  // false when more than 1% of the estimates were degenerate
};

inline constexpr double kMaxExcludedFraction = 0.01;

EvalResult evaluate_viewpoint_accuracy(std::span<const EvalCase> cases, const ImageSource& images,
                                       const PoseEstimator& estimator, const RadiusRange& range,
                                       int batch_size = 64);

// Adapters for the learned models and the reference renderer.
ImageSource generator_source(std::shared_ptr<ToyGeneratorImpl> model);
ImageSource render_source(int image_size);
PoseEstimator regressor_estimator(std::shared_ptr<PoseRegressorImpl> model);

// metrics.csv, breakdown.csv and records.jsonl.
void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
void write_breakdown_csv(const std::filesystem::path& path, std::span<const BreakdownRow> rows);
void write_records_jsonl(const std::filesystem::path& path, std::span<const EvalRecord> records);
void write_eval_outputs(const std::filesystem::path& dir, const EvalResult& result);

}  // namespace viewtok
