#include "viewtok/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "viewtok/errors.hpp"
#include "viewtok/generator.hpp"
#include "viewtok/regressor.hpp"
#include "viewtok/renderer.hpp"
#include "viewtok/rng.hpp"
#include "viewtok/tensors.hpp"

namespace viewtok {

std::string_view to_string(ObjectGroup group) { return group == ObjectGroup::easy ? "easy" : "diverse"; }

std::string_view to_string(Subset subset) {
  switch (subset) {
    case Subset::main: return "main";
    case Subset::back_view: return "back-view";
    case Subset::high_elevation: return "high-elevation";
  }
  return "main";
}

namespace {

std::optional<BackgroundPhrase> phrase_from_text(const std::string& text) {
  if (text.empty()) return std::nullopt;
  for (const auto& p : background_phrases()) {
    if (text == std::string(p.name) + " " + std::string(p.noun)) return p;
  }
  throw ConfigError("unknown background phrase: " + text);
}

nlohmann::json object_to_json(const ObjectSpec& o) { return {{"kind", to_string(o.kind)}, {"color", o.color}}; }

ObjectSpec object_from_json(const nlohmann::json& j) {
  ObjectSpec o;
  o.kind = object_kind_from_string(j.at("kind").get<std::string>());
  o.color = j.at("color").get<std::string>();
  object_color(o.color);  // validates
  return o;
}

}  // namespace

void TestSpec::validate() const {
  ranges.validate();
  if (easy.empty() && diverse.empty()) throw ConfigError("test spec lists no objects");
  if (backgrounds.empty()) throw ConfigError("backgrounds must hold at least one entry (\"\" for none)");
  for (const auto& b : backgrounds) phrase_from_text(b);
  if (views_per_object < 0 || back_views_per_object < 0 || high_elevation_views_per_object < 0) {
    throw ConfigError("view counts must be >= 0");
  }
  if (!(std::abs(high_elevation_deg) < 90.0)) throw ConfigError("high_elevation_deg must be inside (-90, 90)");
  for (const auto& e : easy) {
    for (const auto& d : diverse) {
      if (e == d) throw ConfigError("object " + e.id() + " is both easy and diverse");
    }
  }
}

nlohmann::json TestSpec::to_json() const {
  nlohmann::json e = nlohmann::json::array(), d = nlohmann::json::array();
  for (const auto& o : easy) e.push_back(object_to_json(o));
  for (const auto& o : diverse) d.push_back(object_to_json(o));
  return {{"seed", seed},
          {"ranges", ranges_to_json(ranges)},
          {"easy", e},
          {"diverse", d},
          {"backgrounds", backgrounds},
          {"views_per_object", views_per_object},
          {"back_views_per_object", back_views_per_object},
          {"high_elevation_views_per_object", high_elevation_views_per_object},
          {"high_elevation_deg", high_elevation_deg}};
}

TestSpec TestSpec::from_json(const nlohmann::json& j) {
  TestSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("ranges")) s.ranges = ranges_from_json(j.at("ranges"));
    for (const auto& o : j.value("easy", nlohmann::json::array())) s.easy.push_back(object_from_json(o));
    for (const auto& o : j.value("diverse", nlohmann::json::array())) s.diverse.push_back(object_from_json(o));
    s.backgrounds = j.value("backgrounds", s.backgrounds);
    s.views_per_object = j.value("views_per_object", s.views_per_object);
    s.back_views_per_object = j.value("back_views_per_object", s.back_views_per_object);
    s.high_elevation_views_per_object = j.value("high_elevation_views_per_object", s.high_elevation_views_per_object);
    s.high_elevation_deg = j.value("high_elevation_deg", s.high_elevation_deg);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed test spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<EvalCase> TestSpec::cases() const {
  validate();
  const Vocabulary vocab;
  SamplingRanges back = ranges;
  back.full_azimuth = false;
  back.azimuth_min = 3.0 * kPi / 4.0;
  back.azimuth_max = 5.0 * kPi / 4.0;
  const double high_el = deg_to_rad(high_elevation_deg);

  std::vector<EvalCase> out;
  std::uint64_t object_index = 0;
  for (ObjectGroup group : {ObjectGroup::easy, ObjectGroup::diverse}) {
    for (const auto& object : group == ObjectGroup::easy ? easy : diverse) {
      Rng rng(mix_seed(seed, object_index++));
      int view = 0;
      auto add = [&](Subset subset, const CameraPose& pose) {
        EvalCase c;
        c.object = object;
        c.group = group;
        c.subset = subset;
        const auto phrase = phrase_from_text(backgrounds[static_cast<std::size_t>(view) % backgrounds.size()]);
        c.caption = make_caption(vocab, object.color, object.kind, phrase);
        c.requested = pose;
        c.seed = mix_seed(seed ^ 0x5eedULL, out.size());
        out.push_back(c);
        ++view;
      };
      for (int v = 0; v < views_per_object; ++v) add(Subset::main, sample_pose(rng, ranges));
      for (int v = 0; v < back_views_per_object; ++v) add(Subset::back_view, sample_pose(rng, back));
      for (int v = 0; v < high_elevation_views_per_object; ++v) {
        const CameraPose p = sample_pose(rng, ranges);
        add(Subset::high_elevation, CameraPose(p.azimuth(), high_el, p.radius(), p.pitch(), p.yaw()));
      }
    }
  }
  return out;
}

ComponentErrors pose_errors(const CameraPose& requested, const CameraPose& estimated) {
  ComponentErrors e;
  e.azimuth = angular_difference(rad_to_deg(requested.azimuth()), rad_to_deg(estimated.azimuth()));
  e.elevation = rad_to_deg(std::abs(requested.elevation() - estimated.elevation()));
  e.radius = std::abs(requested.radius() - estimated.radius());
  e.pitch = rad_to_deg(std::abs(requested.pitch() - estimated.pitch()));
  e.yaw = rad_to_deg(std::abs(requested.yaw() - estimated.yaw()));
  return e;
}

EvalRecord score_case(const EvalCase& eval_case, std::span<const double> raw6, const RadiusRange& range) {
  EvalRecord r;
  r.eval_case = eval_case;
  try {
    r.estimated = decode_estimate(raw6, range);
    r.errors = pose_errors(eval_case.requested, *r.estimated);
  } catch (const DegenerateEstimateError& e) {
    r.note = e.what();
  }
  return r;
}

MetricsTable aggregate(std::span<const EvalRecord> records) {
  MetricsTable t;
  std::vector<double> az, el, rad, pitch, yaw;
  for (const auto& r : records) {
    if (r.excluded()) {
      ++t.excluded;
      continue;
    }
    az.push_back(r.errors.azimuth);
    el.push_back(r.errors.elevation);
    rad.push_back(r.errors.radius);
    pitch.push_back(r.errors.pitch);
    yaw.push_back(r.errors.yaw);
  }
  t.count = az.size();
  t.azimuth = summarize(std::move(az));
  t.elevation = summarize(std::move(el));
  t.radius = summarize(std::move(rad));
  t.pitch = summarize(std::move(pitch));
  t.yaw = summarize(std::move(yaw));
  return t;
}

std::vector<BreakdownRow> error_breakdown(std::span<const EvalRecord> records, std::span<const NamedGroup> groups) {
  std::vector<BreakdownRow> rows;
  for (const auto& g : groups) {
    std::vector<EvalRecord> members;
    for (const auto& r : records) {
      if (g.filter(r)) members.push_back(r);
    }
    rows.push_back({g.name, members.empty() ? std::nullopt : std::optional(aggregate(members))});
  }
  return rows;
}

std::vector<NamedGroup> standard_groups() {
  auto is_main = [](const EvalRecord& r) { return r.eval_case.subset == Subset::main; };
  auto is_easy = [](const EvalRecord& r) { return r.eval_case.group == ObjectGroup::easy; };
  return {
      {"whole", is_main},
      {"easy", [=](const EvalRecord& r) { return is_main(r) && is_easy(r); }},
      {"diverse", [=](const EvalRecord& r) { return is_main(r) && !is_easy(r); }},
      {"challenging", [=](const EvalRecord& r) { return !is_main(r); }},
      {"challenging-easy", [=](const EvalRecord& r) { return !is_main(r) && is_easy(r); }},
      {"challenging-diverse", [=](const EvalRecord& r) { return !is_main(r) && !is_easy(r); }},
      {"back-view", [](const EvalRecord& r) { return r.eval_case.subset == Subset::back_view; }},
      {"high-elevation", [](const EvalRecord& r) { return r.eval_case.subset == Subset::high_elevation; }},
  };
}

EvalResult evaluate_viewpoint_accuracy(std::span<const EvalCase> cases, const ImageSource& images,
                                       const PoseEstimator& estimator, const RadiusRange& range, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  EvalResult result;
  for (std::size_t start = 0; start < cases.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto chunk = cases.subspan(start, std::min(cases.size() - start, static_cast<std::size_t>(batch_size)));
    const auto imgs = images(chunk);
    if (imgs.size() != chunk.size()) throw ShapeError("image source returned the wrong number of images");
    const auto raws = estimator(imgs, chunk);
    if (raws.size() != chunk.size()) throw ShapeError("estimator returned the wrong number of estimates");
    for (std::size_t i = 0; i < chunk.size(); ++i) result.records.push_back(score_case(chunk[i], raws[i], range));
  }
  std::vector<EvalRecord> main;
  std::size_t excluded = 0;
  for (const auto& r : result.records) {
    if (r.eval_case.subset == Subset::main) main.push_back(r);
    excluded += r.excluded() ? 1 : 0;
  }
  result.metrics = aggregate(main);
  const auto groups = standard_groups();
  result.breakdown = error_breakdown(result.records, groups);
  result.excluded_fraction =
      result.records.empty() ? 0.0 : static_cast<double>(excluded) / static_cast<double>(result.records.size());
  result.valid = result.excluded_fraction <= kMaxExcludedFraction;
  return result;
}

ImageSource generator_source(std::shared_ptr<ToyGeneratorImpl> model) {
  return [model](std::span<const EvalCase> cases) {
    std::vector<Caption> captions;
    std::vector<CameraPose> poses;
    std::vector<std::uint64_t> seeds;
    for (const auto& c : cases) {
      captions.push_back(c.caption);
      poses.push_back(c.requested);
      seeds.push_back(c.seed);
    }
    ToyGenerator handle(model);
    return generate_images(handle, captions, poses, seeds);
  };
}

ImageSource render_source(int image_size) {
  return [image_size](std::span<const EvalCase> cases) {
    RenderSpec spec;
    spec.width = spec.height = image_size;
    std::vector<Image> out;
    for (const auto& c : cases) {
      const ToyObject object = make_object(c.object.kind, object_color(c.object.color));
      out.push_back(composite_over(render(object, c.requested, spec), kNetworkBackdrop));
    }
    return out;
  };
}

PoseEstimator regressor_estimator(std::shared_ptr<PoseRegressorImpl> model) {
  return [model](std::span<const Image> images, std::span<const EvalCase>) {
    PoseRegressor handle(model);
    const torch::Tensor raw = predict_raw(handle, images);
    auto acc = raw.accessor<double, 2>();
    std::vector<std::array<double, 6>> out(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (int k = 0; k < 6; ++k) out[i][k] = acc[static_cast<std::int64_t>(i)][k];
    }
    return out;
  };
}

namespace {

const char* kTableColumns =
    "azimuth_mean,azimuth_median,elevation_mean,elevation_median,radius_mean,radius_median,"
    "yaw_mean,yaw_median,pitch_mean,pitch_median";

void write_table_values(std::ostream& out, const MetricsTable& t) {
  out << t.azimuth.mean << ',' << t.azimuth.median << ',' << t.elevation.mean << ',' << t.elevation.median << ','
      << t.radius.mean << ',' << t.radius.median << ',' << t.yaw.mean << ',' << t.yaw.median << ',' << t.pitch.mean
      << ',' << t.pitch.median;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(8);
  return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  auto out = open_out(path);
  out << kTableColumns << ",count,excluded\n";
  write_table_values(out, table);
  out << ',' << table.count << ',' << table.excluded << '\n';
}

void write_breakdown_csv(const std::filesystem::path& path, std::span<const BreakdownRow> rows) {
  auto out = open_out(path);
  out << "group," << kTableColumns << ",count,excluded\n";
  for (const auto& row : rows) {
    out << row.group << ',';
    if (row.table) {
      write_table_values(out, *row.table);
      out << ',' << row.table->count << ',' << row.table->excluded << '\n';
    } else {
      out << "NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,0,0\n";
    }
  }
}

void write_records_jsonl(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  auto out = open_out(path);
  const Vocabulary vocab;
  for (const auto& r : records) {
    nlohmann::json j = {{"object", r.eval_case.object.id()},
                        {"group", to_string(r.eval_case.group)},
                        {"subset", to_string(r.eval_case.subset)},
                        {"caption", caption_text(vocab, r.eval_case.caption)},
                        {"seed", r.eval_case.seed},
                        {"requested", pose_to_json(r.eval_case.requested)},
                        {"excluded", r.excluded()}};
    if (r.estimated) {
      j["estimated"] = pose_to_json(*r.estimated);
      j["errors"] = {{"azimuth_deg", r.errors.azimuth},
                     {"elevation_deg", r.errors.elevation},
                     {"radius", r.errors.radius},
                     {"pitch_deg", r.errors.pitch},
                     {"yaw_deg", r.errors.yaw}};
    } else {
      j["estimated"] = nullptr;
      j["note"] = r.note;
    }
    out << j.dump() << '\n';
  }
}

void write_eval_outputs(const std::filesystem::path& dir, const EvalResult& result) {
  std::filesystem::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", result.metrics);
  write_breakdown_csv(dir / "breakdown.csv", result.breakdown);
  write_records_jsonl(dir / "records.jsonl", result.records);
}

}  // namespace viewtok
