#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "viewtok/camera.hpp"
#include "viewtok/caption.hpp"
#include "viewtok/renderer.hpp"
#include "viewtok/rng.hpp"

namespace viewtok {

struct ObjectSpec {
  ObjectKind kind = ObjectKind::arrow_car;
  std::string color = "red";

  std::string id() const;  // e.g. "red_car"
  bool operator==(const ObjectSpec&) const = default;
};

enum class Split { rendered, augmented };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Sample {
  std::string id;
  std::filesystem::path image_path;  // relative to the split directory
  ObjectSpec object;
  CameraPose pose;
  Caption caption;
  Split split = Split::rendered;
};

nlohmann::json sample_to_json(const Sample& sample, const Vocabulary& vocab);
Sample sample_from_json(const nlohmann::json& j, const Vocabulary& vocab);

struct SplitConfig {
  std::vector<ObjectSpec> objects;
  int views_per_object = 0;
  int appearance_variants = 1;  // augmented split only
};

struct DatasetConfig {
  std::string version = "1";
  int image_size = 64;
  std::uint64_t seed = 0;
  SamplingRanges ranges;
  SplitConfig rendered;
  SplitConfig augmented;

  static DatasetConfig from_json(const nlohmann::json& j);  // throws ConfigError
  nlohmann::json to_json() const;
};

struct SplitSummary {
  std::size_t count = 0;
  int views_per_object = 0;
  int appearance_variants = 1;
  std::vector<std::pair<std::string, int>> per_object;  // object id -> record count
  bool operator==(const SplitSummary&) const = default;
};

struct DatasetManifest {
  std::string version;
  int image_size = 64;
  std::uint64_t seed = 0;
  SamplingRanges ranges;
  SplitSummary rendered;
  SplitSummary augmented;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  // Canonical text form; load -> serialize is byte-identical.
  std::string serialize() const;
};

// Options shared by both generators.
struct GenerationOptions {
  int image_size = 64;
  SamplingRanges ranges;
  std::uint64_t seed = 0;
};

// Clean renders with transparent background; `views_per_object` poses i.i.d.
// from the ranges per object. Writes <root>/rendered/{images/, meta.jsonl}.
std::vector<Sample> generate_rendered_split(const std::vector<ObjectSpec>& objects, int views_per_object,
                                            const GenerationOptions& options,
                                            const std::filesystem::path& root);

// Appearance-augmented renders: background (flat or procedural floor), jittered
// object color and a background phrase in the caption. The pose is always the
// one of the underlying clean render (see augmented_source_pose).
std::vector<Sample> generate_augmented_split(const std::vector<ObjectSpec>& objects, int views_per_object,
                                             int appearance_variants, const GenerationOptions& options,
                                             const std::filesystem::path& root);

// Pose of the clean render underlying augmented view `view` of object `object_index`.
CameraPose augmented_source_pose(const GenerationOptions& options, std::size_t object_index, int view);

// Full pipeline: both splits plus manifest.json.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& root);

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  std::vector<Sample> rendered;
  std::vector<Sample> augmented;

  const std::vector<Sample>& split(Split s) const { return s == Split::rendered ? rendered : augmented; }
  std::filesystem::path image_file(const Sample& sample) const;
};

// Throws IoError for missing files, InputError when counts disagree with the manifest.
Dataset load_dataset(const std::filesystem::path& root);

enum class MixingMode {
  exact_per_batch,        // exactly batch_size / 2 from each split
  per_sample_probability  // each slot picks a split with probability 1/2
};

struct SampleRef {
  Split split = Split::rendered;
  std::size_t index = 0;
  bool operator==(const SampleRef&) const = default;
};

// Draws batches mixing the two splits; each split is walked in a fresh
// shuffled order per epoch. A plain value: copy it to checkpoint its state.
class MixedBatchSampler {
 public:
  MixedBatchSampler(std::size_t rendered_count, std::size_t augmented_count, int batch_size,
                    std::uint64_t seed, MixingMode mode = MixingMode::exact_per_batch);
  MixedBatchSampler(const Dataset& dataset, int batch_size, std::uint64_t seed,
                    MixingMode mode = MixingMode::exact_per_batch);

  std::vector<SampleRef> next_batch();
  std::size_t epochs_completed(Split split) const;

 private:
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t position = 0;
    std::size_t epochs = 0;
  };
  std::size_t draw(Cursor& cursor);

  int batch_size_;
  MixingMode mode_;
  Rng rng_;
  Cursor rendered_;
  Cursor augmented_;
};

// True when no pose of `b` appears in `a` (compared on stored degrees) and the seeds differ.
bool poses_disjoint(const std::vector<Sample>& a, std::uint64_t seed_a, const std::vector<CameraPose>& b,
                    std::uint64_t seed_b);

}  // namespace viewtok
