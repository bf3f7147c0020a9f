#include "../support/doctest_torch.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "viewtok/errors.hpp"
#include "viewtok/training.hpp"

using namespace viewtok;

TEST_CASE("default rates and config validation") {
  const TrainConfig def;
  CHECK(def.lr_new == 2e-4);
  CHECK(def.lr_backbone == 2e-5);
  CHECK(def.warmup_fraction == 0.01);
  CHECK(def.grad_clip_norm == 1.0);

  TrainConfig bad = def;
  bad.lr_backbone = def.lr_new;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = def;
  bad.warmup_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = def;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const TrainConfig round = TrainConfig::from_json(def.to_json());
  CHECK(round.to_json() == def.to_json());
}

TEST_CASE("warmup then cosine decay") {
  const int total = 20000;
  const int warm = 200;
  double peak = 0.0;
  int peak_at = -1;
  double prev = 0.0;
  for (int it = 0; it < total; ++it) {
    const double f = warmup_cosine_factor(it, total, 0.01);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    if (it <= warm) CHECK(f >= prev);
    if (it > warm) CHECK(f <= prev);
    if (f > peak) {
      peak = f;
      peak_at = it;
    }
    prev = f;
  }
  CHECK(peak == 1.0);
  CHECK(peak_at == warm);
  CHECK(warmup_cosine_factor(total - 1, total, 0.01) <= 0.01 * peak);
  CHECK(warmup_cosine_factor(total, total, 0.01) == 0.0);
  CHECK(warmup_cosine_factor(warm / 2, total, 0.01) == doctest::Approx(0.5).epsilon(0.01));
}

namespace {

struct Params {
  torch::Tensor a = torch::zeros({3}, torch::requires_grad());
  torch::Tensor b = torch::zeros({2, 2}, torch::requires_grad());
  torch::Tensor c = torch::zeros({4}, torch::requires_grad());
};

}  // namespace

TEST_CASE("two parameter groups carry their own rates") {
  Params p;
  const TrainConfig cfg;
  auto opt = make_two_group_adamw({p.a}, {p.b, p.c}, {p.a, p.b, p.c}, cfg);
  REQUIRE(opt->param_groups().size() == 2);
  CHECK(opt->param_groups()[0].params().size() == 1);
  CHECK(opt->param_groups()[1].params().size() == 2);
  CHECK(opt->param_groups()[0].options().get_lr() == 2e-4);
  CHECK(opt->param_groups()[1].options().get_lr() == 2e-5);

  apply_schedule(*opt, {cfg.lr_new, cfg.lr_backbone}, 0.5);
  CHECK(opt->param_groups()[0].options().get_lr() == 1e-4);
  CHECK(opt->param_groups()[1].options().get_lr() == 1e-5);

  CHECK_THROWS_AS(make_two_group_adamw({p.a, p.b}, {p.b, p.c}, {p.a, p.b, p.c}, cfg), ConfigError);
  CHECK_THROWS_AS(make_two_group_adamw({p.a}, {p.b}, {p.a, p.b, p.c}, cfg), ConfigError);
}

TEST_CASE("one step moves both groups") {
  Params p;
  auto opt = make_two_group_adamw({p.a}, {p.b, p.c}, {p.a, p.b, p.c}, TrainConfig{});
  const torch::Tensor loss = (p.a - 1).square().sum() + (p.b - 1).square().sum() + (p.c - 1).square().sum();
  loss.backward();
  opt->step();
  CHECK(p.a.abs().min().item<double>() > 0);
  CHECK(p.b.abs().min().item<double>() > 0);
  // Adam's first step moves each weight by about its group's rate.
  CHECK(p.a[0].item<double>() == doctest::Approx(2e-4).epsilon(1e-3));
  CHECK(p.b[0][0].item<double>() == doctest::Approx(2e-5).epsilon(1e-3));
}

TEST_CASE("gradient clipping") {
  Params p;
  p.a.mutable_grad() = torch::tensor({6.0f, 0.0f, 0.0f});
  p.b.mutable_grad() = torch::tensor({{0.0f, 8.0f}, {0.0f, 0.0f}});
  p.c.mutable_grad() = torch::zeros({4});
  const double before = clip_gradients({p.a, p.b, p.c}, 1.0);
  CHECK(before == doctest::Approx(10.0));
  const double after = std::sqrt(p.a.grad().square().sum().item<double>() + p.b.grad().square().sum().item<double>());
  CHECK(after == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(p.a.grad()[0].item<double>() == doctest::Approx(0.6).epsilon(1e-5));

  // Below the threshold nothing changes.
  p.a.mutable_grad() = torch::tensor({0.3f, 0.0f, 0.0f});
  p.b.mutable_grad() = torch::zeros({2, 2});
  clip_gradients({p.a, p.b, p.c}, 1.0);
  CHECK(p.a.grad()[0].item<float>() == 0.3f);
}

TEST_CASE("csv log") {
  const auto path = std::filesystem::temp_directory_path() / "viewtok_csvlog_test.csv";
  {
    CsvLog log(path, {"iteration", "loss"});
    log.row({0, 0.5});
    log.row({1, 0.25});
    CHECK_THROWS_AS(log.row({1}), InputError);
  }
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().rfind("iteration,loss\n0,0.5\n1,0.25\n", 0) == 0);
  std::filesystem::remove(path);
}
