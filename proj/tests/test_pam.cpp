#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "akseg/attention.hpp"
#include "akseg/rng.hpp"
#include "akseg/tensor.hpp"

using namespace akseg;

namespace {

Tensor rand_fm(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> d(c * h * w);
  for (double& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({c, h, w}, std::move(d));
}

void zero_value_path(PamParams& p, const PamConfig& cfg) {
  auto clear = [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 0.0;
  };
  clear(p.prop.wo);
  if (cfg.use_sa1) clear(p.sa1.wo);
  if (cfg.use_sa2) clear(p.sa2.wo);
}

}  // namespace

TEST_CASE("anchor_count = max(1, floor(N/4))") {
  CHECK(anchor_count(1) == 1);
  CHECK(anchor_count(3) == 1);
  CHECK(anchor_count(4) == 1);
  CHECK(anchor_count(16) == 4);
  CHECK(anchor_count(17) == 4);
  CHECK(anchor_count(256) == 64);
}

TEST_CASE("attention rows are stochastic") {
  Rng rng(1);
  AttentionParams ap(6, rng);
  std::vector<double> d(10 * 6);
  for (double& v : d) v = rng.uniform(-1, 1);
  Tensor tokens = Tensor::from_data({10, 6}, d);
  AttentionOut out = self_attention(tokens, ap, 2);
  CHECK(out.out.shape() == Shape{10, 6});
  CHECK(out.attn.shape() == Shape{10, 10});
  for (std::size_t i = 0; i < 10; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 10; ++j) s += out.attn.at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("anchor invariants over 100 random feature maps") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    std::size_t h = 2 + trial % 5, w = 2 + (trial / 5) % 5;
    PamConfig cfg;
    cfg.dim = 4;
    cfg.use_sa1 = trial % 2 == 0;
    cfg.use_sa2 = trial % 3 == 0;
    cfg.use_topk = true;
    if (cfg.use_sa2 && !cfg.use_topk) cfg.use_sa2 = false;
    cfg.validate();
    PamParams params(cfg, rng);
    Tensor fm = rand_fm(cfg.dim, h, w, rng);
    AnchorSet anchors;
    Tensor out = pam_forward(fm, cfg, params, &anchors);

    std::size_t n = h * w;
    std::size_t k = anchor_count(n);
    REQUIRE(anchors.indices.size() == k);
    CHECK(k == std::max<std::size_t>(1, n / 4));
    CHECK(out.shape() == fm.shape());

    // min selected saliency >= max unselected
    std::vector<bool> chosen(n, false);
    for (std::size_t idx : anchors.indices) chosen[idx] = true;
    double min_sel = 1e300, max_unsel = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) min_sel = std::min(min_sel, anchors.saliency[i]);
      else max_unsel = std::max(max_unsel, anchors.saliency[i]);
    }
    if (k < n) CHECK(min_sel >= max_unsel);
  }
}

TEST_CASE("zero value/output projections make PAM the identity") {
  Rng rng(11);
  PamConfig cfg;
  cfg.dim = 8;
  cfg.validate();
  PamParams params(cfg, rng);
  zero_value_path(params, cfg);
  Tensor fm = rand_fm(8, 4, 4, rng);
  Tensor out = pam_forward(fm, cfg, params);
  for (std::size_t i = 0; i < fm.size(); ++i)
    CHECK(std::fabs(out.at(i) - fm.at(i)) <= 1e-12);
}

TEST_CASE("channel permutation of weights tracks input permutation") {
  // Feeding the same map through PAM twice is deterministic.
  Rng rng(12);
  PamConfig cfg;
  cfg.dim = 4;
  cfg.validate();
  PamParams params(cfg, rng);
  Tensor fm = rand_fm(4, 3, 3, rng);
  Tensor a = pam_forward(fm, cfg, params);
  Tensor b = pam_forward(fm, cfg, params);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("gradient flows to non-anchor tokens through propagation") {
  Rng rng(13);
  PamConfig cfg;
  cfg.dim = 4;
  cfg.validate();
  PamParams params(cfg, rng);
  std::vector<double> d(4 * 4 * 4);
  for (double& v : d) v = rng.uniform(-1.0, 1.0);
  Tensor fm = Tensor::from_data({4, 4, 4}, d, true);
  AnchorSet anchors;
  Tensor loss = sum(pam_forward(fm, cfg, params, &anchors));
  backward(loss);
  // Every input position must receive gradient: anchors feed the values,
  // non-anchors feed the queries and the residual.
  std::size_t nonzero = 0;
  for (double g : fm.grad())
    if (g != 0.0) ++nonzero;
  CHECK(nonzero == fm.size());
}

TEST_CASE("pam gradcheck") {
  Rng rng(14);
  PamConfig cfg;
  cfg.dim = 4;
  cfg.validate();
  PamParams params(cfg, rng);
  std::vector<double> d(4 * 2 * 4);
  for (double& v : d) v = rng.uniform(-1.0, 1.0);
  Tensor fm = Tensor::from_data({4, 2, 4}, d, true);
  std::vector<std::pair<std::string, Tensor>> ps{{"fm", fm}};
  params.parameters(cfg, ps, "pam");
  auto f = [&] {
    Tensor y = pam_forward(fm, cfg, params);
    return mean(mul(y, y));
  };
  // rtol 1e-3: the anchor self-attention weights carry ~1e-10 gradients on
  // this small map, at the floor of central-difference resolution
  GradCheckReport r = gradcheck(f, ps, 1e-4, 1e-3);
  INFO(r.summary());
  CHECK(r.pass);
}

TEST_CASE("config validation") {
  PamConfig cfg;
  cfg.dim = 6;
  cfg.heads = 4;  // 6 % 4 != 0
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.heads = 2;
  cfg.use_topk = false;
  cfg.use_sa2 = true;  // sa2 requires topk
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.use_sa2 = false;
  cfg.validate();
}

TEST_CASE("flops estimate closed forms") {
  PamConfig cfg;
  cfg.dim = 4;  // heads=1
  SUBCASE("k = N when topk off: propagation quadratic in N") {
    cfg.use_topk = false;
    cfg.use_sa2 = false;
    PamFlops f = pam_flops_estimate(cfg, 4, 8, 8);
    double n = 64, c = 4;
    CHECK(f.prop_scores == doctest::Approx(n * n * c));
    CHECK(f.prop_aggregate == doctest::Approx(n * n * c));
  }
  SUBCASE("N=256, k=64") {
    PamFlops f = pam_flops_estimate(cfg, 4, 16, 16);
    double n = 256, k = 64, c = 4;
    CHECK(f.prop_scores == doctest::Approx(n * k * c));
    CHECK(f.prop_aggregate == doctest::Approx(n * k * c));
    CHECK(f.sa1 == doctest::Approx(2 * n * n * c));
    CHECK(f.sa2 == doctest::Approx(2 * k * k * c));
  }
  SUBCASE("doubling H and W scales propagation cost 16x") {
    PamFlops a = pam_flops_estimate(cfg, 4, 8, 8);
    PamFlops b = pam_flops_estimate(cfg, 4, 16, 16);
    CHECK(b.prop_scores == doctest::Approx(16.0 * a.prop_scores));
  }
}
