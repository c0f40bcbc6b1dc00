#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "akseg/phantom.hpp"
#include "akseg/train.hpp"

using namespace akseg;

namespace {

std::vector<Sample> tiny_dataset(std::size_t n, std::uint64_t seed) {
  PhantomSpec spec;
  spec.size = 16;
  spec.organ_axis_min = 0.30;
  spec.organ_axis_max = 0.42;
  spec.lesion_radius_min = 1.2;
  spec.lesion_radius_max = 2.2;
  spec.seed = seed;
  return generate(spec, n);
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
  TrainConfig cfg;
  cfg.lr_max = 1e-4;
  cfg.lr_min = 1e-5;
  cfg.epochs = 200;
  CHECK(cosine_lr(0, cfg) == 1e-4);
  CHECK(cosine_lr(200, cfg) == doctest::Approx(1e-5).epsilon(1e-18));
  CHECK(std::fabs(cosine_lr(100, cfg) - 5.5e-5) <= 1e-18);
  CHECK_THROWS_AS(cosine_lr(201, cfg), ValueError);

  // monotone decreasing over the whole horizon
  double prev = cosine_lr(0, cfg);
  for (std::size_t t = 1; t <= 200; ++t) {
    double lr = cosine_lr(t, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.lr_min = 2e-4;  // above lr_max
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.lr_min = 0.0;
  cfg.lr_max = 1e-4;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.lr_max = 0.0;  // frozen diagnostic schedule is the one allowed zero
  cfg.validate();
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  std::vector<std::pair<std::string, Tensor>> ps{{"x", x}};
  AdamState st;
  adam_init(st, ps);
  x.zero_grad();
  adam_step(ps, st, 1e-2, AdamConfig{});
  CHECK(x.at(0) == 1.0);
  CHECK(x.at(1) == -2.0);
  CHECK(x.at(2) == 0.5);
}

TEST_CASE("adam first step moves by -lr * sign(g)") {
  Tensor x = Tensor::from_data({2}, {1.0, 1.0}, true);
  std::vector<std::pair<std::string, Tensor>> ps{{"x", x}};
  AdamState st;
  adam_init(st, ps);
  x.grad() = {0.3, -7.0};
  adam_step(ps, st, 1e-2, AdamConfig{});
  // bias-corrected m/sqrt(v) = sign(g) on step one (up to eps)
  CHECK(x.at(0) == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
  CHECK(x.at(1) == doctest::Approx(1.0 + 1e-2).epsilon(1e-6));
}

TEST_CASE("adam minimizes x^2 in 50 steps") {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  std::vector<std::pair<std::string, Tensor>> ps{{"x", x}};
  AdamState st;
  adam_init(st, ps);
  for (int i = 0; i < 50; ++i) {
    x.zero_grad();
    Tensor loss = mul(x, x);
    backward(sum(loss));
    adam_step(ps, st, 0.2, AdamConfig{});
  }
  CHECK(std::fabs(x.at(0)) < 0.5);
}

TEST_CASE("frozen schedule: lr 0 leaves parameters and loss unchanged") {
  auto data = tiny_dataset(4, 11);
  ModelConfig mc;
  mc.base_channels = 2;
  SegModel model(mc);
  auto before = model.parameters();
  std::vector<std::vector<double>> snap;
  for (auto& [n, p] : before) snap.push_back(p.vec());

  TrainConfig tc;
  tc.lr_max = 0.0;
  tc.lr_min = 0.0;
  tc.epochs = 2;
  tc.batch_size = 4;
  TrainResult res = train(model, data, data, tc);
  auto after = model.parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(after[i].second.vec() == snap[i]);
  CHECK(res.rows[0].train_loss == doctest::Approx(res.rows[1].train_loss));
}

TEST_CASE("training is deterministic: identical logs and parameters") {
  auto data = tiny_dataset(6, 21);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 3;
  tc.lr_max = 1e-3;
  tc.lr_min = 1e-4;
  tc.seed = 5;
  ModelConfig mc;
  mc.base_channels = 2;
  mc.init_seed = 5;

  SegModel m1(mc), m2(mc);
  TrainResult r1 = train(m1, data, data, tc);
  TrainResult r2 = train(m2, data, data, tc);
  CHECK(r1.log_csv() == r2.log_csv());
  auto p1 = m1.parameters(), p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i].second.vec() == p2[i].second.vec());
}

TEST_CASE("loss decreases over a short run") {
  auto data = tiny_dataset(6, 31);
  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 6;
  tc.lr_max = 3e-3;
  tc.lr_min = 1e-3;
  ModelConfig mc;
  mc.base_channels = 2;
  SegModel model(mc);
  TrainResult res = train(model, data, data, tc);
  CHECK(res.rows.back().train_loss < res.rows.front().train_loss);
  CHECK(res.rows.size() == tc.epochs);
}

TEST_CASE("log csv has one data row per epoch") {
  auto data = tiny_dataset(3, 41);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 3;
  ModelConfig mc;
  mc.base_channels = 2;
  SegModel model(mc);
  TrainResult res = train(model, data, data, tc);
  std::string csv = res.log_csv();
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == tc.epochs + 1);  // header + epochs
}

TEST_CASE("ablation rows are the six standard configurations") {
  auto rows = ablation_rows();
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].name == "Baseline");
  CHECK_FALSE(rows[0].use_focal);
  CHECK_FALSE(rows[0].use_sa1);
  CHECK(rows[1].name == "Focal Loss (FL)");
  CHECK(rows[1].use_focal);
  CHECK_FALSE(rows[1].use_topk);
  CHECK(rows[2].name == "PAM (SA_1 & Top_k & SA_2)");
  CHECK(rows[2].use_sa1);
  CHECK(rows[2].use_sa2);
  CHECK_FALSE(rows[2].use_focal);
  CHECK(rows[3].name == "FL & PAM (SA_1 & Top_k)");
  CHECK(rows[3].use_focal);
  CHECK(rows[3].use_sa1);
  CHECK_FALSE(rows[3].use_sa2);
  CHECK(rows[4].name == "FL & PAM (Top_k & SA_2)");
  CHECK_FALSE(rows[4].use_sa1);
  CHECK(rows[4].use_sa2);
  CHECK(rows[5].name == "Ours (all)");
  CHECK(rows[5].use_focal);
  CHECK(rows[5].use_sa1);
  CHECK(rows[5].use_topk);
  CHECK(rows[5].use_sa2);
}
