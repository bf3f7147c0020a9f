#include "viewtok/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "viewtok/errors.hpp"
#include "viewtok/image.hpp"

namespace viewtok {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kRenderedStream = 1;
constexpr std::uint64_t kAugmentedPoseStream = 2;
constexpr std::uint64_t kAppearanceStream = 3;

std::uint64_t view_seed(std::uint64_t seed, std::uint64_t stream, std::size_t object_index, int view) {
  return mix_seed(mix_seed(seed, stream), object_index * 1'000'003ULL + static_cast<std::uint64_t>(view));
}

std::string numbered_id(Split split, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%06zu", n);
  return std::string(to_string(split)) + buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_meta(const fs::path& split_dir, const std::vector<Sample>& samples, const Vocabulary& vocab) {
  std::string text;
  for (const auto& s : samples) {
    text += sample_to_json(s, vocab).dump();
    text += '\n';
  }
  write_text(split_dir / "meta.jsonl", text);
}

std::uint8_t jitter_channel(std::uint8_t v, Rng& rng, double amount) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v + uniform(rng, -amount, amount)), 0L, 255L));
}

Rgb jitter(Rgb c, Rng& rng, double amount) {
  return {jitter_channel(c.r, rng, amount), jitter_channel(c.g, rng, amount), jitter_channel(c.b, rng, amount)};
}

Background background_for(const BackgroundPhrase& phrase, Rng& rng) {
  Background bg;
  const std::string_view name = phrase.name;
  if (name == "teal" || name == "beige" || name == "pink") {
    bg.kind = BackgroundKind::flat_color;
    const Rgb base = name == "teal" ? Rgb{40, 130, 130} : name == "beige" ? Rgb{210, 190, 150} : Rgb{220, 150, 170};
    bg.color = jitter(base, rng, 12.0);
    return bg;
  }
  bg.kind = BackgroundKind::procedural_texture;
  if (name == "checkered") {
    bg.pattern = FloorPattern::checker;
    bg.color = jitter({205, 205, 200}, rng, 12.0);
    bg.color2 = jitter({105, 105, 110}, rng, 12.0);
  } else {
    bg.pattern = FloorPattern::stripes;
    bg.color = jitter({190, 165, 120}, rng, 12.0);
    bg.color2 = jitter({120, 95, 65}, rng, 12.0);
  }
  bg.tile = uniform(rng, 0.3, 0.6);
  bg.phase = uniform(rng, 0.0, 1.0);
  bg.sky = jitter(bg.sky, rng, 10.0);
  return bg;
}

SplitSummary summarize(const std::vector<ObjectSpec>& objects, std::size_t count, int views, int variants) {
  SplitSummary s;
  s.count = count;
  s.views_per_object = views;
  s.appearance_variants = variants;
  for (const auto& o : objects) s.per_object.emplace_back(o.id(), views * variants);
  return s;
}

nlohmann::json summary_to_json(const SplitSummary& s) {
  nlohmann::json per_object = nlohmann::json::array();
  for (const auto& [id, n] : s.per_object) per_object.push_back({{"object", id}, {"records", n}});
  return {{"count", s.count},
          {"views_per_object", s.views_per_object},
          {"appearance_variants", s.appearance_variants},
          {"per_object", per_object}};
}

SplitSummary summary_from_json(const nlohmann::json& j) {
  SplitSummary s;
  s.count = j.at("count").get<std::size_t>();
  s.views_per_object = j.at("views_per_object").get<int>();
  s.appearance_variants = j.at("appearance_variants").get<int>();
  for (const auto& e : j.at("per_object")) {
    s.per_object.emplace_back(e.at("object").get<std::string>(), e.at("records").get<int>());
  }
  return s;
}

ObjectSpec object_from_json(const nlohmann::json& j) {
  ObjectSpec o;
  o.kind = object_kind_from_string(j.at("kind").get<std::string>());
  o.color = j.at("color").get<std::string>();
  object_color(o.color);
  return o;
}

nlohmann::json object_to_json(const ObjectSpec& o) {
  return {{"kind", std::string(to_string(o.kind))}, {"color", o.color}};
}

SplitConfig split_config_from_json(const nlohmann::json& j) {
  SplitConfig s;
  for (const auto& o : j.at("objects")) s.objects.push_back(object_from_json(o));
  s.views_per_object = j.at("views_per_object").get<int>();
  s.appearance_variants = j.value("appearance_variants", 1);
  return s;
}

nlohmann::json split_config_to_json(const SplitConfig& s) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : s.objects) objects.push_back(object_to_json(o));
  return {{"objects", objects},
          {"views_per_object", s.views_per_object},
          {"appearance_variants", s.appearance_variants}};
}

std::vector<Sample> read_meta(const fs::path& split_dir, Split expected, const Vocabulary& vocab) {
  std::ifstream in(split_dir / "meta.jsonl");
  if (!in) throw IoError("missing " + (split_dir / "meta.jsonl").string());
  std::vector<Sample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Sample s = sample_from_json(nlohmann::json::parse(line), vocab);
    if (s.split != expected) throw InputError("record " + s.id + " listed under the wrong split");
    if (!fs::exists(split_dir / s.image_path)) throw IoError("missing image for record " + s.id);
    samples.push_back(std::move(s));
  }
  return samples;
}

void check_against_summary(const std::vector<Sample>& samples, const SplitSummary& summary, Split split) {
  if (samples.size() != summary.count) {
    throw InputError(std::string(to_string(split)) + ": manifest count " + std::to_string(summary.count) +
                     " but " + std::to_string(samples.size()) + " records on disk");
  }
  std::map<std::string, int> seen;
  for (const auto& s : samples) ++seen[s.object.id()];
  for (const auto& [id, n] : summary.per_object) {
    if (seen[id] != n) throw InputError(std::string(to_string(split)) + ": per-object count mismatch for " + id);
  }
}

}  // namespace

std::string ObjectSpec::id() const { return color + "_" + std::string(object_noun(kind)); }

std::string_view to_string(Split split) { return split == Split::rendered ? "rendered" : "augmented"; }

Split split_from_string(std::string_view name) {
  if (name == "rendered") return Split::rendered;
  if (name == "augmented") return Split::augmented;
  throw InputError("unknown split: " + std::string(name));
}

nlohmann::json sample_to_json(const Sample& s, const Vocabulary& vocab) {
  return {{"id", s.id},
          {"image", s.image_path.generic_string()},
          {"object", object_to_json(s.object)},
          {"pose", pose_to_json(s.pose)},
          {"caption", caption_text(vocab, s.caption)},
          {"caption_ids", s.caption.ids},
          {"object_span_end", s.caption.object_span_end},
          {"split", std::string(to_string(s.split))}};
}

Sample sample_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  try {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.image_path = j.at("image").get<std::string>();
    s.object = object_from_json(j.at("object"));
    s.pose = pose_from_json(j.at("pose"));
    s.caption = parse_caption(vocab, j.at("caption").get<std::string>());
    if (s.caption.ids != j.at("caption_ids").get<std::vector<int>>() ||
        s.caption.object_span_end != j.at("object_span_end").get<int>()) {
      throw InputError("caption ids disagree with caption text in record " + s.id);
    }
    s.split = split_from_string(j.at("split").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed sample record: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("malformed sample record: ") + e.what());
  }
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  try {
    c.version = j.value("version", c.version);
    c.image_size = j.value("image_size", c.image_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("ranges")) c.ranges = ranges_from_json(j.at("ranges"));
    c.rendered = split_config_from_json(j.at("rendered"));
    if (j.contains("augmented")) c.augmented = split_config_from_json(j.at("augmented"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset config: ") + e.what());
  }
  if (c.image_size < 8) throw ConfigError("image_size must be at least 8");
  return c;
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"version", version},
          {"image_size", image_size},
          {"seed", seed},
          {"ranges", ranges_to_json(ranges)},
          {"rendered", split_config_to_json(rendered)},
          {"augmented", split_config_to_json(augmented)}};
}

nlohmann::json DatasetManifest::to_json() const {
  return {{"version", version},
          {"image_size", image_size},
          {"seed", seed},
          {"ranges", ranges_to_json(ranges)},
          {"splits", {{"rendered", summary_to_json(rendered)}, {"augmented", summary_to_json(augmented)}}}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.version = j.at("version").get<std::string>();
    m.image_size = j.at("image_size").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ranges = ranges_from_json(j.at("ranges"));
    m.rendered = summary_from_json(j.at("splits").at("rendered"));
    m.augmented = summary_from_json(j.at("splits").at("augmented"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
}

std::string DatasetManifest::serialize() const { return to_json().dump(2) + "\n"; }

std::vector<Sample> generate_rendered_split(const std::vector<ObjectSpec>& objects, int views_per_object,
                                            const GenerationOptions& options, const fs::path& root) {
  if (views_per_object < 1) throw ConfigError("views_per_object must be at least 1");
  options.ranges.validate();
  const Vocabulary vocab;
  const fs::path split_dir = root / "rendered";
  ensure_dir(split_dir / "images");

  RenderSpec spec;
  spec.width = spec.height = options.image_size;
  spec.background.kind = BackgroundKind::transparent;

  std::vector<Sample> samples;
  samples.reserve(objects.size() * static_cast<std::size_t>(views_per_object));
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const ObjectSpec& spec_obj = objects[oi];
    const ToyObject mesh = make_object(spec_obj.kind, object_color(spec_obj.color));
    for (int v = 0; v < views_per_object; ++v) {
      Rng rng(view_seed(options.seed, kRenderedStream, oi, v));
      Sample s;
      s.split = Split::rendered;
      s.id = numbered_id(Split::rendered, samples.size());
      s.image_path = fs::path("images") / (s.id + ".png");
      s.object = spec_obj;
      s.pose = sample_pose(rng, options.ranges);
      s.caption = make_caption(vocab, spec_obj.color, spec_obj.kind);
      write_png(split_dir / s.image_path, render(mesh, s.pose, spec));
      samples.push_back(std::move(s));
    }
  }
  write_meta(split_dir, samples, vocab);
  return samples;
}

CameraPose augmented_source_pose(const GenerationOptions& options, std::size_t object_index, int view) {
  Rng rng(view_seed(options.seed, kAugmentedPoseStream, object_index, view));
  return sample_pose(rng, options.ranges);
}

std::vector<Sample> generate_augmented_split(const std::vector<ObjectSpec>& objects, int views_per_object,
                                             int appearance_variants, const GenerationOptions& options,
                                             const fs::path& root) {
  if (objects.empty()) throw ConfigError("augmented split needs a non-empty object subset");
  if (views_per_object < 1 || appearance_variants < 1) {
    throw ConfigError("augmented split needs views_per_object >= 1 and appearance_variants >= 1");
  }
  options.ranges.validate();
  const Vocabulary vocab;
  const fs::path split_dir = root / "augmented";
  ensure_dir(split_dir / "images");
  const auto phrases = background_phrases();

  std::vector<Sample> samples;
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const ObjectSpec& spec_obj = objects[oi];
    for (int v = 0; v < views_per_object; ++v) {
      const CameraPose source_pose = augmented_source_pose(options, oi, v);
      for (int variant = 0; variant < appearance_variants; ++variant) {
        Rng rng(mix_seed(view_seed(options.seed, kAppearanceStream, oi, v), static_cast<std::uint64_t>(variant)));
        const BackgroundPhrase& phrase = phrases[uniform_index(rng, phrases.size())];
        RenderSpec spec;
        spec.width = spec.height = options.image_size;
        spec.background = background_for(phrase, rng);
        const ToyObject mesh = make_object(spec_obj.kind, jitter(object_color(spec_obj.color), rng, 20.0));

        Sample s;
        s.split = Split::augmented;
        s.id = numbered_id(Split::augmented, samples.size());
        s.image_path = fs::path("images") / (s.id + ".png");
        s.object = spec_obj;
        s.pose = source_pose;
        s.caption = make_caption(vocab, spec_obj.color, spec_obj.kind, phrase);
        write_png(split_dir / s.image_path, render(mesh, s.pose, spec));
        samples.push_back(std::move(s));
      }
    }
  }
  write_meta(split_dir, samples, vocab);
  return samples;
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& root) {
  ensure_dir(root);
  GenerationOptions options{config.image_size, config.ranges, config.seed};
  const auto rendered = generate_rendered_split(config.rendered.objects, config.rendered.views_per_object,
                                                options, root);
  std::vector<Sample> augmented;
  if (!config.augmented.objects.empty()) {
    augmented = generate_augmented_split(config.augmented.objects, config.augmented.views_per_object,
                                         config.augmented.appearance_variants, options, root);
  }

  DatasetManifest manifest;
  manifest.version = config.version;
  manifest.image_size = config.image_size;
  manifest.seed = config.seed;
  manifest.ranges = config.ranges;
  manifest.rendered = summarize(config.rendered.objects, rendered.size(), config.rendered.views_per_object, 1);
  manifest.augmented = summarize(config.augmented.objects, augmented.size(), config.augmented.views_per_object,
                                 config.augmented.appearance_variants);
  write_text(root / "manifest.json", manifest.serialize());
  return manifest;
}

fs::path Dataset::image_file(const Sample& sample) const {
  return root / to_string(sample.split) / sample.image_path;
}

Dataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw IoError("missing manifest.json under " + root.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Dataset ds;
  ds.root = root;
  try {
    ds.manifest = DatasetManifest::from_json(nlohmann::json::parse(buf.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("manifest.json: ") + e.what());
  }
  const Vocabulary vocab;
  ds.rendered = read_meta(root / "rendered", Split::rendered, vocab);
  if (ds.manifest.augmented.count > 0 || fs::exists(root / "augmented" / "meta.jsonl")) {
    ds.augmented = read_meta(root / "augmented", Split::augmented, vocab);
  }
  check_against_summary(ds.rendered, ds.manifest.rendered, Split::rendered);
  check_against_summary(ds.augmented, ds.manifest.augmented, Split::augmented);
  return ds;
}

MixedBatchSampler::MixedBatchSampler(std::size_t rendered_count, std::size_t augmented_count, int batch_size,
                                     std::uint64_t seed, MixingMode mode)
    : batch_size_(batch_size), mode_(mode), rng_(seed) {
  if (rendered_count == 0 || augmented_count == 0) {
    throw ConfigError("mixed sampling needs both the rendered and the augmented split");
  }
  if (batch_size <= 0 || batch_size % 2 != 0) throw ConfigError("batch size must be positive and even");
  rendered_.order.resize(rendered_count);
  augmented_.order.resize(augmented_count);
  for (std::size_t i = 0; i < rendered_count; ++i) rendered_.order[i] = i;
  for (std::size_t i = 0; i < augmented_count; ++i) augmented_.order[i] = i;
  shuffle(rendered_.order.begin(), rendered_.order.end(), rng_);
  shuffle(augmented_.order.begin(), augmented_.order.end(), rng_);
}

MixedBatchSampler::MixedBatchSampler(const Dataset& dataset, int batch_size, std::uint64_t seed, MixingMode mode)
    : MixedBatchSampler(dataset.rendered.size(), dataset.augmented.size(), batch_size, seed, mode) {}

std::size_t MixedBatchSampler::draw(Cursor& cursor) {
  if (cursor.position == cursor.order.size()) {
    shuffle(cursor.order.begin(), cursor.order.end(), rng_);
    cursor.position = 0;
    ++cursor.epochs;
  }
  return cursor.order[cursor.position++];
}

std::vector<SampleRef> MixedBatchSampler::next_batch() {
  std::vector<SampleRef> batch;
  batch.reserve(static_cast<std::size_t>(batch_size_));
  if (mode_ == MixingMode::exact_per_batch) {
    for (int i = 0; i < batch_size_ / 2; ++i) batch.push_back({Split::rendered, draw(rendered_)});
    for (int i = 0; i < batch_size_ / 2; ++i) batch.push_back({Split::augmented, draw(augmented_)});
  } else {
    for (int i = 0; i < batch_size_; ++i) {
      if (uniform01(rng_) < 0.5) {
        batch.push_back({Split::rendered, draw(rendered_)});
      } else {
        batch.push_back({Split::augmented, draw(augmented_)});
      }
    }
  }
  return batch;
}

std::size_t MixedBatchSampler::epochs_completed(Split split) const {
  return split == Split::rendered ? rendered_.epochs : augmented_.epochs;
}

bool poses_disjoint(const std::vector<Sample>& a, std::uint64_t seed_a, const std::vector<CameraPose>& b,
                    std::uint64_t seed_b) {
  if (seed_a == seed_b) return false;
  std::set<std::string> seen;
  for (const auto& s : a) seen.insert(pose_to_json(s.pose).dump());
  return std::none_of(b.begin(), b.end(), [&](const CameraPose& p) { return seen.count(pose_to_json(p).dump()) > 0; });
}

}  // namespace viewtok
