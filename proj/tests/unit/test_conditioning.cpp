#include "../support/doctest_torch.hpp"

#include "../support/mlp_oracle.hpp"
#include "viewtok/conditioning.hpp"
#include "viewtok/errors.hpp"

using namespace viewtok;

namespace {

ViewpointMlpConfig small(int layers, int in = 6, int hidden = 16, int out = 8) {
  ViewpointMlpConfig c;
  c.input_dim = in;
  c.hidden_dim = hidden;
  c.num_layers = layers;
  c.output_dim = out;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ViewpointMlp(small(0)), ConfigError);
  CHECK_THROWS_AS(ViewpointMlp(small(2, 0)), ConfigError);
  CHECK_THROWS_AS(ViewpointMlp(small(2, 6, 0)), ConfigError);
  const ViewpointMlpConfig def;
  CHECK(def.hidden_dim == 1024);
  CHECK(def.num_layers == 3);
  CHECK(ViewpointMlpConfig::from_json(small(2).to_json()) == small(2));
}

TEST_CASE("forward examples") {
  ViewpointMlp zero(small(3));
  CHECK(zero->forward(torch::randn({6})).abs().max().item<double>() == 0.0);

  ViewpointMlp single(small(1, 6, 16, 6));
  torch::NoGradGuard ng;
  single->weights()[0].copy_(torch::randn({6, 6}));
  const torch::Tensor x = torch::tensor({0.f, 1.f, 0.f, 0.f, 0.f, 0.f});
  CHECK(torch::allclose(single->forward(x), single->weights()[0].select(1, 1)));

  CHECK_THROWS_AS(single->forward(torch::zeros({5})), ShapeError);
  CHECK_THROWS_AS(single->forward(torch::zeros({2, 7})), ShapeError);
}

TEST_CASE("forward matches the plain-loop reference and is deterministic") {
  Rng rng(4);
  for (int layers = 1; layers <= 4; ++layers) {
    const auto cfg = oracle::random_config(rng, layers);
    ViewpointMlp mlp(cfg);
    mlp->to(torch::kFloat64);
    {
      torch::NoGradGuard ng;
      for (auto& p : mlp->parameters()) p.uniform_(-1, 1);
    }
    const torch::Tensor x = torch::rand({cfg.input_dim}, torch::kFloat64) * 2 - 1;
    const torch::Tensor y = mlp->forward(x);
    const auto ref = oracle::forward(oracle::snapshot(mlp), std::vector<double>(x.data_ptr<double>(), x.data_ptr<double>() + x.numel()));
    for (int k = 0; k < cfg.output_dim; ++k) CHECK(y[k].item<double>() == doctest::Approx(ref[static_cast<std::size_t>(k)]).epsilon(1e-12));
    CHECK(torch::equal(y, mlp->forward(x)));

    // Batched rows equal single-row results.
    const torch::Tensor batch = torch::rand({5, cfg.input_dim}, torch::kFloat64);
    const torch::Tensor yb = mlp->forward(batch);
    for (int i = 0; i < 5; ++i) CHECK(torch::allclose(yb[i], mlp->forward(batch[i])));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  for (int layers = 1; layers <= 4; ++layers) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto result = oracle::gradient_check(oracle::random_config(rng, layers), rng);
      CHECK(result.checked > 0);
      CHECK(result.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("gradients flow to both the weights and the encoding") {
  ViewpointMlp mlp(small(3));
  at::Generator gen = at::detail::createCPUGenerator(1);
  mlp->reset_parameters(gen);
  const torch::Tensor x = torch::randn({4, 6}).requires_grad_(true);
  mlp->forward(x).square().sum().backward();
  CHECK(x.grad().abs().sum().item<double>() > 0);
  for (auto& p : mlp->parameters()) CHECK(p.grad().defined());
}

TEST_CASE("small encoding perturbations give bounded output changes") {
  Rng rng(8);
  ViewpointMlp mlp(small(3, 6, 64, 32));
  at::Generator gen = at::detail::createCPUGenerator(3);
  mlp->reset_parameters(gen);
  torch::NoGradGuard ng;
  const double eps = 1e-3;
  for (int trial = 0; trial < 50; ++trial) {
    torch::Tensor x = torch::rand({6}) * 2 - 1;
    torch::Tensor xp = x.clone();
    xp[static_cast<std::int64_t>(uniform_index(rng, 6))] += eps;
    CHECK((mlp->forward(xp) - mlp->forward(x)).norm().item<double>() <= 1e3 * eps);
  }
}

TEST_CASE("initialization") {
  ViewpointMlp mlp(small(3, 6, 1024, 256));
  at::Generator gen = at::detail::createCPUGenerator(5);
  mlp->reset_parameters(gen);
  const auto& w = mlp->weights();
  CHECK(w[2].std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
  CHECK(w[0].abs().max().item<double>() <= 1.0 / std::sqrt(6.0));
  CHECK(w[1].abs().max().item<double>() <= 1.0 / std::sqrt(1024.0));
  for (auto& b : mlp->biases()) CHECK(b.abs().max().item<double>() == 0.0);

  ViewpointMlp other(small(3, 6, 1024, 256));
  at::Generator gen2 = at::detail::createCPUGenerator(5);
  other->reset_parameters(gen2);
  for (std::size_t l = 0; l < 3; ++l) CHECK(torch::equal(mlp->weights()[l], other->weights()[l]));
}

TEST_CASE("encode_batch matches per-pose encodings") {
  EncoderOptions o;
  o.kind = EncodingKind::sinusoidal;
  std::vector<CameraPose> poses = {CameraPose(0.1, 0.2, 1.5, 0, 0), CameraPose(3.0, 0.5, 1.9, 0.1, -0.2)};
  const torch::Tensor t = encode_batch(poses, o, torch::kFloat64);
  REQUIRE(t.size(1) == 80);
  for (int i = 0; i < 2; ++i) {
    const auto e = encode(poses[static_cast<std::size_t>(i)], o).data;
    for (int k = 0; k < 80; ++k) CHECK(t[i][k].item<double>() == e[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("assemble_sequence inserts the viewpoint token after the object span") {
  const torch::Tensor table = torch::arange(10 * 4, torch::kFloat32).view({10, 4});
  const torch::Tensor v = torch::full({4}, -1.0f);
  const std::vector<int> ids = {3, 5, 7};
  auto seq = assemble_sequence(ids, 2, v, table);
  CHECK(seq.length == 4);
  CHECK(seq.viewpoint_index == 2);
  CHECK(torch::equal(seq.embeddings[0], table[3]));
  CHECK(torch::equal(seq.embeddings[1], table[5]));
  CHECK(torch::equal(seq.embeddings[2], v));
  CHECK(torch::equal(seq.embeddings[3], table[7]));

  seq = assemble_sequence(ids, 3, v, table);
  CHECK(seq.viewpoint_index == 3);
  CHECK(torch::equal(seq.embeddings[3], v));
  seq = assemble_sequence(ids, 0, v, table);
  CHECK(torch::equal(seq.embeddings[0], v));

  CHECK_THROWS_AS(assemble_sequence(std::vector<int>{}, 0, v, table), InputError);
  CHECK_THROWS_AS(assemble_sequence(std::vector<int>{3, 10}, 1, v, table), InputError);
  CHECK_THROWS_AS(assemble_sequence(std::vector<int>{3, 0}, 1, v, table), InputError);
  CHECK_THROWS_AS(assemble_sequence(ids, 4, v, table), InputError);
  CHECK_THROWS_AS(assemble_sequence(ids, -1, v, table), InputError);
  CHECK_THROWS_AS(assemble_sequence(ids, 1, torch::zeros({5}), table), ShapeError);
}

TEST_CASE("assembly preserves caption order on fuzzed captions") {
  Rng rng(31);
  const torch::Tensor table = torch::randn({20, 6});
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 1 + static_cast<int>(uniform_index(rng, 9));
    std::vector<int> ids(static_cast<std::size_t>(len));
    for (auto& id : ids) id = 1 + static_cast<int>(uniform_index(rng, 19));
    const int span = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(len) + 1));
    const auto seq = assemble_sequence(ids, span, torch::randn({6}), table);
    REQUIRE(seq.length == len + 1);
    CHECK(seq.viewpoint_index >= 0);
    CHECK(seq.viewpoint_index < seq.length);
    int k = 0;
    for (int pos = 0; pos < seq.length; ++pos) {
      if (pos == seq.viewpoint_index) continue;
      CHECK(torch::equal(seq.embeddings[pos], table[ids[static_cast<std::size_t>(k++)]]));
    }
  }
}

TEST_CASE("batched assembly pads and matches single assembly") {
  const Vocabulary vocab;
  const torch::Tensor table = torch::randn({static_cast<std::int64_t>(vocab.size()), 5});
  std::vector<Caption> caps = {make_caption(vocab, "red", ObjectKind::arrow_car),
                               make_caption(vocab, "blue", ObjectKind::wedge_chair, background_phrases()[3])};
  const torch::Tensor v = torch::randn({2, 5});
  const TokenBatch batch = assemble_batch(caps, v, table);
  const auto max_len = static_cast<std::int64_t>(caps[1].ids.size()) + 1;
  REQUIRE(batch.embeddings.sizes() == torch::IntArrayRef({2, max_len, 5}));
  for (int i = 0; i < 2; ++i) {
    const auto& c = caps[static_cast<std::size_t>(i)];
    const auto single = assemble_sequence(c.ids, c.object_span_end, v[i], table);
    CHECK(batch.viewpoint_index[static_cast<std::size_t>(i)] == single.viewpoint_index);
    CHECK(torch::equal(batch.embeddings[i].slice(0, 0, single.length), single.embeddings));
    for (std::int64_t k = 0; k < max_len; ++k) CHECK(batch.padding_mask[i][k].item<bool>() == (k >= single.length));
  }
  CHECK_THROWS_AS(assemble_batch(caps, torch::randn({3, 5}), table), ShapeError);
}
