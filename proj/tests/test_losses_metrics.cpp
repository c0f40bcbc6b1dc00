#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "akseg/losses.hpp"
#include "akseg/metrics.hpp"
#include "akseg/rng.hpp"

using namespace akseg;

namespace {

Mask random_mask(std::size_t h, std::size_t w, double p, Rng& rng) {
  Mask m(h, w);
  for (auto& v : m.v) v = rng.uniform01() < p ? 1 : 0;
  return m;
}

double focal_ref(double p, double y, double alpha, double gamma) {
  double pt = y == 1.0 ? p : 1.0 - p;
  double at = y == 1.0 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

}  // namespace

TEST_CASE("ce of uniform logits is ln 2") {
  Tensor logits({2, 4, 4}, 0.0);
  Tensor mask({4, 4}, 0.0);
  for (std::size_t i = 0; i < 16; ++i) mask.at(i) = i % 2 ? 1.0 : 0.0;
  Tensor loss = ce_loss(logits, onehot_from_mask(mask));
  CHECK(std::fabs(loss.item() - std::log(2.0)) <= 1e-9);
}

TEST_CASE("focal closed form at p_t = 0.5") {
  // alpha 0.25, gamma 2, positive pixel at p = 0.5:
  // 0.25 * 0.25 * ln 2 = 0.043321698...
  Tensor p = Tensor::from_data({1, 1}, {0.5});
  Tensor y = Tensor::from_data({1, 1}, {1.0});
  LossConfig lc;
  Tensor loss = focal_loss(p, y, lc);
  CHECK(std::fabs(loss.item() - 0.0433217) <= 1e-6);
  CHECK(loss.item() ==
        doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("focal with gamma 0, alpha 1 equals ce on positive pixels") {
  Rng rng(2);
  LossConfig lc;
  lc.gamma = 0.0;
  lc.alpha = 1.0;
  Tensor logits({2, 3, 3}, 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits.at(i) = rng.uniform(-2.0, 2.0);
  Tensor mask({3, 3}, 1.0);  // all positive: alpha_t = 1 everywhere
  Tensor p1 = select_channel(softmax(logits, 0), 1);
  Tensor fl = focal_loss(p1, mask, lc);
  Tensor ce = ce_loss(logits, onehot_from_mask(mask));
  CHECK(std::fabs(fl.item() - ce.item()) <= 1e-12);
}

TEST_CASE("focal never exceeds ce and decreases with gamma") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    double p = rng.uniform(0.05, 0.95);
    double y = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    double pt = y == 1.0 ? p : 1.0 - p;
    double ce = -std::log(pt);
    double prev = focal_ref(p, y, 0.25, 0.0);
    for (double gamma : {0.5, 1.0, 2.0, 4.0}) {
      double f = focal_ref(p, y, 0.25, gamma);
      CHECK(f <= prev + 1e-15);  // monotone in gamma
      prev = f;
    }
    // alpha_t <= 1 and (1-p_t)^gamma <= 1, so focal never exceeds ce
    CHECK(focal_ref(p, y, 0.25, 2.0) <= ce + 1e-15);
  }
}

TEST_CASE("focal matches elementwise reference") {
  Rng rng(4);
  std::vector<double> ps(12), ys(12);
  for (std::size_t i = 0; i < 12; ++i) {
    ps[i] = rng.uniform(0.01, 0.99);
    ys[i] = rng.uniform01() < 0.5 ? 1.0 : 0.0;
  }
  LossConfig lc;  // 0.25 / 2
  Tensor loss = focal_loss(Tensor::from_data({3, 4}, ps),
                           Tensor::from_data({3, 4}, ys), lc);
  double ref = 0;
  for (std::size_t i = 0; i < 12; ++i)
    ref += focal_ref(ps[i], ys[i], lc.alpha, lc.gamma);
  ref /= 12;
  CHECK(loss.item() == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("total_loss composition and focal toggle") {
  Rng rng(5);
  Tensor logits({2, 4, 4}, 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits.at(i) = rng.uniform(-1.0, 1.0);
  Tensor mask({4, 4}, 0.0);
  for (std::size_t i = 0; i < 16; ++i) mask.at(i) = i < 6 ? 1.0 : 0.0;
  Tensor onehot = onehot_from_mask(mask);

  LossConfig on;  // use_focal defaults true
  LossConfig off = on;
  off.use_focal = false;
  double ce = ce_loss(logits, onehot).item();
  Tensor p1 = select_channel(softmax(logits, 0), 1);
  double fl = focal_loss(p1, mask, on).item();
  CHECK(total_loss(logits, onehot, on).item() ==
        doctest::Approx(ce + fl).epsilon(1e-12));
  CHECK(total_loss(logits, onehot, off).item() ==
        doctest::Approx(ce).epsilon(1e-12));
}

TEST_CASE("loss rejects non-onehot targets") {
  Tensor logits({2, 2, 2}, 0.0);
  Tensor bad({2, 2, 2}, 0.4);
  CHECK_THROWS_AS(ce_loss(logits, bad), ValueError);
}

TEST_CASE("gradcheck total_loss on 2x4x4 logits") {
  Rng rng(6);
  std::vector<double> d(2 * 4 * 4);
  for (double& v : d) v = rng.uniform(-1.5, 1.5);
  Tensor logits = Tensor::from_data({2, 4, 4}, d, true);
  Tensor mask({4, 4}, 0.0);
  for (std::size_t i = 0; i < 16; ++i)
    mask.at(i) = rng.uniform01() < 0.4 ? 1.0 : 0.0;
  Tensor onehot = onehot_from_mask(mask);
  LossConfig lc;
  std::vector<std::pair<std::string, Tensor>> ps{{"logits", logits}};
  auto f = [&] { return total_loss(logits, onehot, lc); };
  GradCheckReport r = gradcheck(f, ps, 1e-6, 1e-4);
  INFO(r.summary());
  CHECK(r.pass);
}

// ---- metrics ----

TEST_CASE("pixel metrics match the brute-force confusion oracle, 1000 pairs") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    Mask pred = random_mask(16, 16, rng.uniform(0.0, 1.0), rng);
    Mask truth = random_mask(16, 16, rng.uniform(0.0, 1.0), rng);
    MetricsRecord r = compute_metrics(pred, truth);

    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < 256; ++i) {
      if (pred.v[i] && truth.v[i]) ++tp;
      else if (pred.v[i]) ++fp;
      else if (truth.v[i]) ++fn;
      else ++tn;
    }
    REQUIRE(r.tp == tp);
    REQUIRE(r.fp == fp);
    REQUIRE(r.tn == tn);
    REQUIRE(r.fn == fn);

    double iou = tp + fp + fn == 0 ? 100.0 : 100.0 * tp / (tp + fp + fn);
    double dice =
        tp + fp + fn == 0 ? 100.0 : 100.0 * 2 * tp / (2.0 * tp + fp + fn);
    double spec = fp + tn == 0 ? 100.0 : 100.0 * tn / (tn + fp);
    CHECK(std::fabs(r.iou - iou) <= 1e-12);
    CHECK(std::fabs(r.dice - dice) <= 1e-12);
    CHECK(std::fabs(r.specificity - spec) <= 1e-12);
    CHECK(std::fabs(r.f1_pixel - dice) <= 1e-12);

    // dice = 2 iou / (1 + iou) with both as fractions
    double iou_f = iou / 100.0;
    CHECK(std::fabs(r.dice / 100.0 - 2 * iou_f / (1 + iou_f)) <= 1e-12);
    CHECK(std::fabs(r.specificity + r.fpr - 100.0) <= 1e-12);
  }
}

TEST_CASE("empty-empty conventions give 100") {
  Mask a(8, 8), b(8, 8);
  MetricsRecord r = compute_metrics(a, b);
  CHECK(r.iou == 100.0);
  CHECK(r.dice == 100.0);
  CHECK(r.f1_lesion == 100.0);
  CHECK(r.specificity == 100.0);
  CHECK(r.fpr == 0.0);
}

TEST_CASE("connected components 4-connectivity") {
  // Diagonal pixels are separate components under 4-connectivity.
  Mask m(3, 3);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  m.at(2, 2) = 1;
  int count = 0;
  std::vector<int> labels = connected_components(m, count);
  CHECK(count == 3);
  CHECK(labels[0] != labels[4]);

  Mask line(3, 3);
  line.at(1, 0) = line.at(1, 1) = line.at(1, 2) = 1;
  connected_components(line, count);
  CHECK(count == 1);
}

TEST_CASE("lesion f1 detection at IoU >= 0.1") {
  Mask truth(8, 8), pred(8, 8);
  // one 2x2 lesion
  truth.at(2, 2) = truth.at(2, 3) = truth.at(3, 2) = truth.at(3, 3) = 1;
  // prediction overlaps 1 of 4 pixels, union 7 -> IoU 1/7 >= 0.1: detected
  pred.at(3, 3) = pred.at(3, 4) = pred.at(4, 3) = pred.at(4, 4) = 1;
  MetricsRecord hit = compute_metrics(pred, truth);
  CHECK(hit.f1_lesion == doctest::Approx(100.0));

  // far-away prediction: one miss, one false detection -> F1 = 0
  Mask far(8, 8);
  far.at(6, 6) = 1;
  MetricsRecord miss = compute_metrics(far, truth);
  CHECK(miss.f1_lesion == doctest::Approx(0.0));
}

TEST_CASE("relabeling symmetry: swapping pred/truth swaps fn/fp") {
  Rng rng(8);
  Mask a = random_mask(12, 12, 0.3, rng);
  Mask b = random_mask(12, 12, 0.3, rng);
  MetricsRecord ab = compute_metrics(a, b);
  MetricsRecord ba = compute_metrics(b, a);
  CHECK(ab.tp == ba.tp);
  CHECK(ab.tn == ba.tn);
  CHECK(ab.fp == ba.fn);
  CHECK(ab.fn == ba.fp);
  CHECK(ab.iou == doctest::Approx(ba.iou));
  CHECK(ab.dice == doctest::Approx(ba.dice));
}

TEST_CASE("macro average of identical records is the record") {
  Mask a(4, 4), b(4, 4);
  a.at(1, 1) = b.at(1, 1) = 1;
  a.at(2, 2) = 1;
  MetricsRecord r = compute_metrics(a, b);
  MetricsRecord avg = macro_average({r, r, r});
  CHECK(avg.iou == doctest::Approx(r.iou));
  CHECK(avg.dice == doctest::Approx(r.dice));
  CHECK(avg.f1_lesion == doctest::Approx(r.f1_lesion));
}

TEST_CASE("csv row format") {
  CHECK(metrics_csv_header().substr(0, 8) == "image_id");
  Mask a(2, 2), b(2, 2);
  a.at(0, 0) = b.at(0, 0) = 1;
  std::string row = metrics_csv_row("x", compute_metrics(a, b));
  CHECK(row.substr(0, 2) == "x,");
  CHECK(row.back() == '\n');
}
