// Command-line front end: dataset generation, training, sampling, evaluation.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "viewtok/camera.hpp"
#include "viewtok/dataset.hpp"
#include "viewtok/errors.hpp"
#include "viewtok/eval.hpp"
#include "viewtok/generator.hpp"
#include "viewtok/regressor.hpp"

namespace fs = std::filesystem;
using namespace viewtok;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

fs::path sibling(const fs::path& out, const std::string& suffix) { return fs::path(out.string() + suffix); }

int dataset_gen(const fs::path& config_path, const fs::path& out) {
  const DatasetConfig config = DatasetConfig::from_json(read_json(config_path));
  const DatasetManifest manifest = generate_dataset(config, out);
  std::cout << "wrote " << manifest.rendered.count << " rendered and " << manifest.augmented.count
            << " augmented samples to " << out << "\n";
  return 0;
}

int train_generator_cmd(const fs::path& config_path, const fs::path& data, const fs::path& out) {
  GeneratorTrainOptions options = GeneratorTrainOptions::from_json(read_json(config_path));
  options.loss_csv = sibling(out, ".loss.csv");
  options.progress = [](int it, double loss) { std::cout << "iter " << it << " loss " << loss << std::endl; };
  const Dataset dataset = load_dataset(data);
  train_generator(dataset, options, out);
  std::cout << "checkpoint " << out << ", loss curve " << options.loss_csv << "\n";
  return 0;
}

int train_regressor_cmd(const fs::path& config_path, const fs::path& data, const fs::path& out) {
  const nlohmann::json j = read_json(config_path);
  const RegressorConfig model = RegressorConfig::from_json(j.value("model", nlohmann::json::object()));
  const RegressorTrainConfig train = RegressorTrainConfig::from_json(j.value("train", nlohmann::json::object()));
  const Dataset dataset = load_dataset(data);
  const auto sources = regressor_sources(dataset, model.radius_range, model.image_size);
  const fs::path validation_csv = sibling(out, ".validation.csv");
  const auto result = train_regressor(sources, model, train, out, sibling(out, ".loss.csv"), validation_csv,
                                      [](int it, double loss) { std::cout << "iter " << it << " loss " << loss << std::endl; });
  for (const auto& r : result.validation) {
    std::cout << r.source << " " << r.component << " mean " << r.mean << " median " << r.median << "\n";
  }
  std::cout << "checkpoint " << out << ", validation report " << validation_csv << "\n";
  return 0;
}

int generate_cmd(const fs::path& ckpt, const std::string& caption_text, double az, double el, double r, double pitch,
                 double yaw, std::uint64_t seed, const fs::path& out) {
  LoadedGenerator gen = load_generator(ckpt);
  const Vocabulary vocab;
  const Caption caption = parse_caption(vocab, caption_text);
  const CameraPose pose = CameraPose::from_degrees(az, el, r, pitch, yaw);
  write_png(out, generate_image(gen.model, caption, pose, seed));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int eval_cmd(const fs::path& gen_ckpt, const fs::path& reg_ckpt, const fs::path& spec_path, const fs::path& out) {
  const TestSpec spec = TestSpec::from_json(read_json(spec_path));
  LoadedGenerator gen = load_generator(gen_ckpt);
  LoadedRegressor reg = load_regressor(reg_ckpt);
  const auto cases = spec.cases();
  const EvalResult result = evaluate_viewpoint_accuracy(cases, generator_source(gen.model.ptr()),
                                                        regressor_estimator(reg.model.ptr()),
                                                        reg.model->config().radius_range);
  write_eval_outputs(out, result);
  const auto& m = result.metrics;
  std::cout << "azimuth mean " << m.azimuth.mean << " median " << m.azimuth.median << ", elevation mean "
            << m.elevation.mean << " median " << m.elevation.median << " (" << m.count << " views)\n";
  if (!result.valid) {
    std::cerr << "invalid run: " << result.excluded_fraction * 100 << "% degenerate estimates (limit "
              << kMaxExcludedFraction * 100 << "%)\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint-token toy text-to-image pipeline"};
  app.require_subcommand(1);

  auto* dataset = app.add_subcommand("dataset", "Dataset tools");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Render a dataset from a config");
  fs::path ds_config, ds_out;
  gen->add_option("--config", ds_config, "Dataset config JSON")->required();
  gen->add_option("--out", ds_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->require_subcommand(1);
  fs::path tr_config, tr_data, tr_out;
  auto* train_gen = train->add_subcommand("generator", "Train the text-to-image generator");
  auto* train_reg = train->add_subcommand("regressor", "Train the pose regressor");
  for (auto* sub : {train_gen, train_reg}) {
    sub->add_option("--config", tr_config, "Training config JSON")->required();
    sub->add_option("--data", tr_data, "Dataset directory")->required();
    sub->add_option("--out", tr_out, "Checkpoint path")->required();
  }

  auto* generate = app.add_subcommand("generate", "Sample one image");
  fs::path g_ckpt, g_out;
  std::string g_caption;
  double g_az = 0, g_el = 0, g_r = 1.5, g_pitch = 0, g_yaw = 0;
  std::uint64_t g_seed = 0;
  generate->add_option("--ckpt", g_ckpt, "Generator checkpoint")->required();
  generate->add_option("--caption", g_caption, "Caption text")->required();
  generate->add_option("--az", g_az, "Azimuth, degrees")->required();
  generate->add_option("--el", g_el, "Elevation, degrees")->required();
  generate->add_option("--r", g_r, "Radius, object diameters")->required();
  generate->add_option("--pitch", g_pitch, "Pitch, degrees");
  generate->add_option("--yaw", g_yaw, "Yaw, degrees");
  generate->add_option("--seed", g_seed, "Noise seed");
  generate->add_option("--out", g_out, "Output PNG")->required();

  auto* eval = app.add_subcommand("eval", "Score viewpoint accuracy of generated images");
  fs::path e_gen, e_reg, e_spec, e_out;
  eval->add_option("--gen", e_gen, "Generator checkpoint")->required();
  eval->add_option("--reg", e_reg, "Regressor checkpoint")->required();
  eval->add_option("--spec", e_spec, "Test spec JSON")->required();
  eval->add_option("--out", e_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return dataset_gen(ds_config, ds_out);
    if (*train_gen) return train_generator_cmd(tr_config, tr_data, tr_out);
    if (*train_reg) return train_regressor_cmd(tr_config, tr_data, tr_out);
    if (*generate) return generate_cmd(g_ckpt, g_caption, g_az, g_el, g_r, g_pitch, g_yaw, g_seed, g_out);
    if (*eval) return eval_cmd(e_gen, e_reg, e_spec, e_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
