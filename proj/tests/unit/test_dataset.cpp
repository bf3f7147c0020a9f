#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "../support/fixtures.hpp"
#include "viewtok/caption.hpp"
#include "viewtok/dataset.hpp"
#include "viewtok/errors.hpp"
#include "viewtok/image.hpp"

using namespace viewtok;
namespace fs = std::filesystem;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

DatasetConfig small_config() {
  DatasetConfig c;
  c.image_size = 16;
  c.seed = 42;
  c.rendered.objects = {{ObjectKind::arrow_car, "red"}, {ObjectKind::chevron_animal, "blue"},
                        {ObjectKind::wedge_chair, "green"}};
  c.rendered.views_per_object = 5;
  c.augmented.objects = {{ObjectKind::arrow_car, "red"}, {ObjectKind::wedge_chair, "green"}};
  c.augmented.views_per_object = 3;
  c.augmented.appearance_variants = 2;
  return c;
}

}  // namespace

TEST_CASE("caption grammar") {
  const Vocabulary vocab;
  CHECK(vocab.word(Vocabulary::kPadId) == "<pad>");
  const Caption plain = make_caption(vocab, "red", ObjectKind::arrow_car);
  CHECK(caption_text(vocab, plain) == "a photo of red car");
  CHECK(plain.object_span_end == 5);
  CHECK_FALSE(has_background_phrase(plain));
  CHECK(parse_caption(vocab, "a photo of red car") == plain);

  const Caption bg = make_caption(vocab, "blue", ObjectKind::wedge_chair, background_phrases()[0]);
  CHECK(has_background_phrase(bg));
  CHECK(bg.object_span_end == 5);
  CHECK(parse_caption(vocab, caption_text(vocab, bg)) == bg);

  CHECK_THROWS_AS(parse_caption(vocab, ""), InputError);
  CHECK_THROWS_AS(parse_caption(vocab, "a photo of red boat"), InputError);
  CHECK_THROWS_AS(parse_caption(vocab, "photo of red car"), InputError);
  CHECK_THROWS_AS(parse_caption(vocab, "a photo of red car on teal"), InputError);
  CHECK_THROWS_AS(vocab.id("zebra"), InputError);
  CHECK_THROWS_AS(vocab.word(999), InputError);
  CHECK(Vocabulary().fingerprint() == vocab.fingerprint());
}

TEST_CASE("dataset generation, loading and manifest round trip") {
  TempDir dir("dataset");
  const DatasetConfig config = small_config();
  const DatasetManifest manifest = generate_dataset(config, dir.path);
  CHECK(manifest.rendered.count == 15);
  CHECK(manifest.augmented.count == 12);
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::exists(dir.path / "rendered" / "meta.jsonl"));
  CHECK(fs::exists(dir.path / "augmented" / "meta.jsonl"));

  const Dataset ds = load_dataset(dir.path);
  REQUIRE(ds.rendered.size() == 15);
  REQUIRE(ds.augmented.size() == 12);
  CHECK(ds.manifest.serialize() == slurp(dir.path / "manifest.json"));
  CHECK(DatasetManifest::from_json(nlohmann::json::parse(ds.manifest.serialize())).serialize() ==
        ds.manifest.serialize());

  const Vocabulary vocab;
  for (const auto& s : ds.rendered) {
    CHECK(config.ranges.contains(s.pose));
    CHECK_FALSE(has_background_phrase(s.caption));
    CHECK(parse_caption(vocab, caption_text(vocab, s.caption)) == s.caption);
    const Image img = read_png(ds.image_file(s));
    CHECK(img.channels == 4);
    CHECK(img.width == 16);
  }
  GenerationOptions opts{config.image_size, config.ranges, config.seed};
  for (std::size_t i = 0; i < ds.augmented.size(); ++i) {
    const auto& s = ds.augmented[i];
    CHECK(has_background_phrase(s.caption));
    CHECK(read_png(ds.image_file(s)).channels == 3);
    // Object index and view follow the generation order: object, view, variant.
    const std::size_t object_index = i / 6;
    const int view = static_cast<int>((i % 6) / 2);
    const CameraPose src = augmented_source_pose(opts, object_index, view);
    // Files hold degrees, so a loaded pose matches to rounding.
    CHECK(s.pose.azimuth() == doctest::Approx(src.azimuth()).epsilon(1e-12));
    CHECK(s.pose.elevation() == doctest::Approx(src.elevation()).epsilon(1e-12));
    CHECK(s.pose.radius() == doctest::Approx(src.radius()).epsilon(1e-12));
    CHECK(s.pose.pitch() == doctest::Approx(src.pitch()).epsilon(1e-12));
    CHECK(s.pose.yaw() == doctest::Approx(src.yaw()).epsilon(1e-12));
  }
  TempDir again("dataset_mem");
  const auto fresh = generate_augmented_split(config.augmented.objects, 3, 2, opts, again.path);
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    CHECK(fresh[i].pose == augmented_source_pose(opts, i / 6, static_cast<int>((i % 6) / 2)));
  }
}

TEST_CASE("dataset generation is byte-reproducible") {
  TempDir a("repro_a"), b("repro_b");
  generate_dataset(small_config(), a.path);
  generate_dataset(small_config(), b.path);
  CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
  for (const char* split : {"rendered", "augmented"}) {
    CHECK(slurp(a.path / split / "meta.jsonl") == slurp(b.path / split / "meta.jsonl"));
    for (const auto& entry : fs::directory_iterator(a.path / split / "images")) {
      CHECK(slurp(entry.path()) == slurp(b.path / split / "images" / entry.path().filename()));
    }
  }
}

TEST_CASE("split sizes: 10 objects x 120 views, 8 x 20 augmented") {
  TempDir dir("sizes");
  GenerationOptions opts{8, SamplingRanges{}, 1};
  std::vector<ObjectSpec> ten;
  for (int i = 0; i < 10; ++i) ten.push_back({kAllObjectKinds[i % 3], std::string(object_palette()[i % 6].name)});
  CHECK(generate_rendered_split(ten, 120, opts, dir.path).size() == 1200);
  std::vector<ObjectSpec> eight(ten.begin(), ten.begin() + 8);
  const auto aug = generate_augmented_split(eight, 20, 1, opts, dir.path);
  CHECK(aug.size() == 160);
  for (const auto& s : aug) CHECK(s.split == Split::augmented);
}

TEST_CASE("dataset errors") {
  TempDir dir("errors");
  GenerationOptions opts{16, SamplingRanges{}, 1};
  CHECK_THROWS_AS(generate_augmented_split({}, 2, 1, opts, dir.path), ConfigError);
  CHECK_THROWS_AS(generate_rendered_split({{ObjectKind::arrow_car, "red"}}, 0, opts, dir.path), ConfigError);
  CHECK_THROWS_AS(load_dataset(dir.path / "nothing"), IoError);
  CHECK_THROWS_AS(DatasetConfig::from_json(nlohmann::json{{"image_size", 4}}), ConfigError);
  CHECK_THROWS_AS(generate_rendered_split({{ObjectKind::arrow_car, "red"}}, 1, opts, "/proc/forbidden"), IoError);

  // Counts that disagree with the manifest are rejected.
  TempDir ds("tamper");
  generate_dataset(small_config(), ds.path);
  {
    std::ofstream meta(ds.path / "augmented" / "meta.jsonl", std::ios::trunc);
  }
  CHECK_THROWS_AS(load_dataset(ds.path), InputError);
}

TEST_CASE("mixed batch sampler") {
  MixedBatchSampler s(37, 11, 8, 5);
  std::size_t rendered = 0, augmented = 0;
  std::set<std::size_t> aug_seen;
  for (int b = 0; b < 1000; ++b) {
    const auto batch = s.next_batch();
    REQUIRE(batch.size() == 8);
    std::size_t r = 0;
    for (const auto& ref : batch) {
      if (ref.split == Split::rendered) {
        ++r;
        CHECK(ref.index < 37);
      } else {
        CHECK(ref.index < 11);
        if (b < 3) aug_seen.insert(ref.index);
      }
    }
    CHECK(r == 4);
    rendered += r;
    augmented += batch.size() - r;
  }
  CHECK(rendered == 4000);
  CHECK(augmented == 4000);
  // Three batches draw 12 augmented samples: the first 11 are one full epoch.
  CHECK(aug_seen.size() == 11);
  CHECK(s.epochs_completed(Split::augmented) == 4000 / 11);

  MixedBatchSampler x(20, 20, 6, 9), y(20, 20, 6, 9);
  for (int i = 0; i < 50; ++i) CHECK(x.next_batch() == y.next_batch());
  // Copying the sampler checkpoints its state.
  MixedBatchSampler saved = x;
  const auto next = x.next_batch();
  CHECK(saved.next_batch() == next);

  CHECK_THROWS_AS(MixedBatchSampler(0, 5, 4, 1), ConfigError);
  CHECK_THROWS_AS(MixedBatchSampler(5, 0, 4, 1), ConfigError);
  CHECK_THROWS_AS(MixedBatchSampler(5, 5, 7, 1), ConfigError);

  MixedBatchSampler p(30, 30, 8, 3, MixingMode::per_sample_probability);
  std::size_t pr = 0, total = 0;
  for (int b = 0; b < 500; ++b) {
    for (const auto& ref : p.next_batch()) {
      pr += ref.split == Split::rendered;
      ++total;
    }
  }
  CHECK(static_cast<double>(pr) / total == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("pose leakage check") {
  TempDir dir("leak");
  GenerationOptions opts{8, SamplingRanges{}, 3};
  const auto train = generate_rendered_split({{ObjectKind::arrow_car, "red"}}, 20, opts, dir.path);
  std::vector<CameraPose> fresh;
  Rng rng(77);
  for (int i = 0; i < 20; ++i) fresh.push_back(sample_pose(rng, SamplingRanges{}));
  CHECK(poses_disjoint(train, 3, fresh, 77));
  CHECK_FALSE(poses_disjoint(train, 3, fresh, 3));
  std::vector<CameraPose> leaked = fresh;
  leaked.push_back(train[4].pose);
  CHECK_FALSE(poses_disjoint(train, 3, leaked, 77));
}
