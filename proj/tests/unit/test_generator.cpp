#include "../support/doctest_torch.hpp"

#include <algorithm>
#include <cmath>

#include "../support/fixtures.hpp"
#include "viewtok/errors.hpp"
#include "viewtok/generator.hpp"
#include "viewtok/tensors.hpp"

using namespace viewtok;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

GeneratorConfig tiny_model() {
  GeneratorConfig c;
  c.image_size = 16;
  c.channels = 8;
  c.width = 16;
  c.heads = 2;
  c.vmlp_hidden = 32;
  c.sample_steps = 4;
  return c;
}

// 2 x 12 rendered + 1 x 4 x 2 augmented = 32 samples.
DatasetConfig tiny_data() {
  DatasetConfig c;
  c.image_size = 16;
  c.seed = 9;
  c.rendered.objects = {{ObjectKind::arrow_car, "red"}, {ObjectKind::wedge_chair, "blue"}};
  c.rendered.views_per_object = 12;
  c.augmented.objects = {{ObjectKind::chevron_animal, "green"}};
  c.augmented.views_per_object = 4;
  c.augmented.appearance_variants = 2;
  return c;
}

GeneratorTrainOptions tiny_options(int iterations) {
  GeneratorTrainOptions o;
  o.model = tiny_model();
  o.train.iterations = iterations;
  o.train.batch_size = 8;
  o.train.lr_new = 2e-3;
  o.train.lr_backbone = 1e-3;
  o.train.log_every = 10;
  o.seed = 3;
  return o;
}

ToyGenerator fresh_model(std::uint64_t seed = 1, GeneratorConfig config = tiny_model()) {
  const Vocabulary vocab;
  ToyGenerator g(config, static_cast<int>(vocab.size()));
  g->reset_parameters(seed);
  g->eval();
  return g;
}

std::vector<Caption> captions(int n) {
  const Vocabulary vocab;
  std::vector<Caption> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(i % 2 == 0 ? make_caption(vocab, "red", ObjectKind::arrow_car)
                             : make_caption(vocab, "blue", ObjectKind::wedge_chair, background_phrases()[0]));
  }
  return out;
}

std::vector<CameraPose> poses(int n) {
  std::vector<CameraPose> out;
  for (int i = 0; i < n; ++i) out.emplace_back(0.7 * i, 0.1 * (i % 5), 1.5, 0.0, 0.05 * (i % 3));
  return out;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("config validation and round trip") {
  const GeneratorConfig def;
  CHECK(def.vmlp_hidden == 1024);
  CHECK(def.vmlp_layers == 3);
  CHECK(GeneratorConfig::from_json(tiny_model().to_json()).to_json() == tiny_model().to_json());
  GeneratorConfig bad = tiny_model();
  bad.image_size = 18;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_model();
  bad.channels = 12;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  nlohmann::json j = tiny_model().to_json();
  j["viewpoint_mode"] = "sideways";
  CHECK_THROWS_AS(GeneratorConfig::from_json(j), ConfigError);

  GeneratorConfig sin = tiny_model();
  sin.encoder.kind = EncodingKind::sinusoidal;
  CHECK(sin.vmlp_config().input_dim == 80);
  CHECK(tiny_model().vmlp_config().input_dim == 6);
  CHECK(tiny_model().vmlp_config().output_dim == 16);
}

TEST_CASE("noise schedule") {
  const torch::Tensor ab = alpha_bar(torch::linspace(0, 1, 101, torch::kFloat64));
  CHECK(ab[0].item<double>() > 0.999);
  CHECK(ab[100].item<double>() < 1e-3);
  CHECK((ab.slice(0, 1) <= ab.slice(0, 0, 100)).all().item<bool>());
}

TEST_CASE("forward shapes and input errors") {
  ToyGenerator g = fresh_model();
  const auto ctx = g->context(captions(3), poses(3));
  CHECK(ctx.embeddings.sizes() == torch::IntArrayRef({3, 9, 16}));
  const torch::Tensor out = g->forward(torch::randn({3, 3, 16, 16}), torch::rand({3}), ctx);
  CHECK(out.sizes() == torch::IntArrayRef({3, 3, 16, 16}));
  CHECK_THROWS_AS(g->forward(torch::randn({3, 3, 8, 8}), torch::rand({3}), ctx), ShapeError);
  CHECK_THROWS_AS(g->context(captions(2), poses(3)), ShapeError);

  const Vocabulary vocab;
  Caption too_long = make_caption(vocab, "red", ObjectKind::arrow_car, background_phrases()[0]);
  too_long.ids.push_back(too_long.ids.back());
  std::vector<Caption> caps = {too_long};
  const std::vector<CameraPose> one = {CameraPose()};
  CHECK_THROWS_AS(g->context(caps, one), InputError);
}

TEST_CASE("parameter groups partition the model") {
  ToyGenerator g = fresh_model();
  const auto added = g->new_parameters();
  const auto backbone = g->backbone_parameters();
  CHECK(added.size() == 6);  // 3 layers x (weight, bias)
  CHECK(added.size() + backbone.size() == g->parameters().size());
  CHECK_NOTHROW(make_two_group_adamw(added, backbone, g->parameters(), TrainConfig{}));
}

TEST_CASE("initialization and sampling are deterministic") {
  ToyGenerator a = fresh_model(5);
  ToyGenerator b = fresh_model(5);
  ToyGenerator c = fresh_model(6);
  const auto pa = a->parameters();
  const auto pb = b->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
  CHECK_FALSE(torch::equal(pa[0], c->parameters()[0]));

  const auto caps = captions(4);
  const auto ps = poses(4);
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  const torch::Tensor s1 = a->sample(caps, ps, seeds);
  const torch::Tensor s2 = a->sample(caps, ps, seeds);
  CHECK(torch::equal(s1, s2));
  CHECK(s1.abs().max().item<double>() <= 1.0);
  const std::vector<std::uint64_t> other = {9, 2, 3, 4};
  const torch::Tensor s3 = a->sample(caps, ps, other);
  CHECK_FALSE(torch::equal(s1[0], s3[0]));

  // A sample does not depend on its batch neighbours.
  const std::vector<Caption> cap0 = {caps[0]};
  const std::vector<CameraPose> pose0 = {ps[0]};
  const std::vector<std::uint64_t> seed0 = {1};
  CHECK(torch::allclose(a->sample(cap0, pose0, seed0)[0], s1[0], 1e-4, 1e-5));

  const Image i1 = generate_image(a, caps[1], ps[1], 77);
  const Image i2 = generate_image(a, caps[1], ps[1], 77);
  CHECK(i1.pixels == i2.pixels);
}

TEST_CASE("the viewpoint token reaches the loss") {
  ToyGenerator g = fresh_model();
  g->train();
  for (auto& p : g->parameters()) p.requires_grad_(false);
  const int n = 6;
  const auto caps = captions(n);
  const auto ps = poses(n);
  for (int trial = 0; trial < 3; ++trial) {
    torch::Tensor enc = encode_batch(ps, g->config().encoder).requires_grad_(true);
    const TokenBatch ctx = assemble_batch(caps, g->viewpoint_mlp()->forward(enc), g->backbone()->token_table());
    const torch::Tensor x0 = torch::rand({n, 3, 16, 16}) * 2 - 1;
    const torch::Tensor t = torch::rand({n});
    const torch::Tensor ab = alpha_bar(t).view({n, 1, 1, 1});
    const torch::Tensor noisy = ab.sqrt() * x0 + (1 - ab).sqrt() * torch::randn_like(x0);
    torch::mse_loss(g->forward(noisy, t, ctx), x0).backward();
    CHECK(enc.grad().abs().sum().item<double>() > 0.0);
  }
}

TEST_CASE("constant-token mode ignores the pose") {
  GeneratorConfig cfg = tiny_model();
  cfg.viewpoint_mode = ViewpointTokenMode::constant;
  ToyGenerator g = fresh_model(1, cfg);
  const auto ctx = g->context(captions(2), poses(2));
  CHECK(torch::equal(ctx.embeddings[0][ctx.viewpoint_index[0]], ctx.embeddings[1][ctx.viewpoint_index[1]]));
  ToyGenerator m = fresh_model(1);
  const auto live = m->context(captions(2), poses(2));
  CHECK_FALSE(torch::equal(live.embeddings[0][live.viewpoint_index[0]], live.embeddings[1][live.viewpoint_index[1]]));
}

TEST_CASE("one step moves both parameter groups") {
  ToyGenerator g = fresh_model();
  g->train();
  auto opt = make_two_group_adamw(g->new_parameters(), g->backbone_parameters(), g->parameters(), TrainConfig{});
  std::vector<torch::Tensor> before;
  for (auto& p : g->parameters()) before.push_back(p.detach().clone());
  const auto ctx = g->context(captions(4), poses(4));
  const torch::Tensor x0 = torch::rand({4, 3, 16, 16}) * 2 - 1;
  torch::mse_loss(g->forward(torch::randn({4, 3, 16, 16}), torch::full({4}, 0.5), ctx), x0).backward();
  opt->step();
  auto moved = [&](const std::vector<torch::Tensor>& group) {
    for (const auto& p : group) {
      const auto all = g->parameters();
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].is_same(p) && !torch::equal(p, before[i])) return true;
      }
    }
    return false;
  };
  CHECK(moved(g->new_parameters()));
  CHECK(moved(g->backbone_parameters()));
}

TEST_CASE("training: curves, checkpoints, reproducibility, errors") {
  TempDir dir("generator_train");
  generate_dataset(tiny_data(), dir.path / "data");
  const Dataset data = load_dataset(dir.path / "data");

  GeneratorTrainOptions opts = tiny_options(20);
  opts.loss_csv = dir.path / "loss.csv";
  const auto result = train_generator(data, opts, dir.path / "a.pt");
  CHECK(result.losses.size() == 20);
  CHECK(slurp(dir.path / "loss.csv").rfind("iteration,loss,lr_new,lr_backbone,grad_norm\n", 0) == 0);

  opts.loss_csv.clear();
  train_generator(data, opts, dir.path / "b.pt");
  CHECK(slurp(dir.path / "a.pt") == slurp(dir.path / "b.pt"));

  auto loaded = load_generator(dir.path / "a.pt");
  CHECK(loaded.meta.at("iterations") == 20);
  const auto caps = captions(2);
  const auto ps = poses(2);
  const std::vector<std::uint64_t> seeds = {4, 5};
  auto again = load_generator(dir.path / "b.pt");
  CHECK(torch::equal(loaded.model->sample(caps, ps, seeds), again.model->sample(caps, ps, seeds)));

  // Vocabulary mismatch.
  ToyGenerator g = fresh_model();
  nlohmann::json meta = loaded.meta;
  meta["vocab_fingerprint"] = "something-else";
  save_checkpoint(dir.path / "bad_vocab.pt", *g, meta);
  CHECK_THROWS_AS(load_generator(dir.path / "bad_vocab.pt"), ConfigError);

  GeneratorTrainOptions wrong = opts;
  wrong.model.image_size = 32;
  CHECK_THROWS_AS(train_generator(data, wrong, dir.path / "c.pt"), ConfigError);

  GeneratorTrainOptions diverging = opts;
  diverging.train.divergence_loss = 1e-12;
  CHECK_THROWS_AS(train_generator(data, diverging, dir.path / "d.pt"), DivergenceError);
  CHECK(std::filesystem::exists(dir.path / "d.pt.diverged"));
  CHECK_FALSE(std::filesystem::exists(dir.path / "d.pt"));
}

TEST_CASE("overfits 32 samples and the loss decreases") {
  TempDir dir("generator_overfit");
  generate_dataset(tiny_data(), dir.path / "data");
  const Dataset data = load_dataset(dir.path / "data");
  REQUIRE(data.rendered.size() + data.augmented.size() == 32);

  const auto result = train_generator(data, tiny_options(2000), dir.path / "g.pt");
  const auto& l = result.losses;
  const std::size_t tenth = l.size() / 10;
  const std::vector<double> first(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(tenth));
  const std::vector<double> last(l.end() - static_cast<std::ptrdiff_t>(tenth), l.end());
  double tail = 0.0;
  for (std::size_t i = l.size() - 50; i < l.size(); ++i) tail += l[i] / 50.0;
  MESSAGE("initial loss " << l.front() << ", mean of last 50 " << tail);
  CHECK(median_of(last) < median_of(first));
  CHECK(tail < 0.1 * l.front());
}
