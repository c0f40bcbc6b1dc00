#include "akseg/losses.hpp"

#include <cmath>

namespace akseg {

namespace {
constexpr double kLogClamp = 1e-12;
}

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ValueError("LossConfig: alpha must be in (0,1]");
  if (gamma < 0.0) throw ValueError("LossConfig: gamma must be >= 0");
}

static void check_onehot(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("target must be n_classes×H×W");
  std::size_t c = t.extent(0), hw = t.extent(1) * t.extent(2);
  for (std::size_t p = 0; p < hw; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double v = t.at(k * hw + p);
      if (v != 0.0 && v != 1.0)
        throw ValueError("target is not one-hot: value " + std::to_string(v));
      s += v;
    }
    if (s != 1.0)
      throw ValueError("target is not one-hot at pixel " + std::to_string(p));
  }
}

// -(1/N) Σ_i Σ_c y·log(max(p, 1e-12)) on softmax probabilities.
static Tensor nll_onehot(const Tensor& probs, const Tensor& target) {
  std::size_t c = probs.extent(0), hw = probs.extent(1) * probs.extent(2);
  double invn = 1.0 / static_cast<double>(hw);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target.at(i) != 0.0)
      acc -= std::log(std::max(probs.at(i), kLogClamp));
  }
  acc *= invn;
  auto pn = probs.node();
  auto tn = target.node();
  (void)c;
  return make_op("nll_onehot", {1}, {acc}, {probs, target},
                 [pn, tn, invn](Node& self) {
                   pn->ensure_grad();
                   double g = self.grad[0];
                   for (std::size_t i = 0; i < pn->data.size(); ++i) {
                     if (tn->data[i] == 0.0) continue;
                     double p = pn->data[i];
                     if (p > kLogClamp) pn->grad[i] -= g * invn / p;
                   }
                 });
}

Tensor ce_loss(const Tensor& logits, const Tensor& target_onehot) {
  if (logits.shape() != target_onehot.shape()) {
    throw ShapeError("ce_loss: logits " + shape_str(logits.shape()) +
                     " vs target " + shape_str(target_onehot.shape()));
  }
  check_onehot(target_onehot);
  return nll_onehot(softmax(logits, 0), target_onehot);
}

Tensor focal_loss(const Tensor& p, const Tensor& y, const LossConfig& cfg) {
  cfg.validate();
  if (p.shape() != y.shape())
    throw ShapeError("focal_loss: probability/target shape mismatch");
  std::size_t n = p.size();
  double invn = 1.0 / static_cast<double>(n);
  double alpha = cfg.alpha, gamma = cfg.gamma;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bool pos = y.at(i) != 0.0;
    double pt = pos ? p.at(i) : 1.0 - p.at(i);
    double at = pos ? alpha : 1.0 - alpha;
    double ptc = std::max(pt, kLogClamp);
    acc += -at * std::pow(1.0 - pt, gamma) * std::log(ptc);
  }
  acc *= invn;
  auto pn = p.node();
  auto ynode = y.node();
  return make_op(
      "focal_loss", {1}, {acc}, {p, y},
      [pn, ynode, invn, alpha, gamma](Node& self) {
        pn->ensure_grad();
        double g = self.grad[0] * invn;
        for (std::size_t i = 0; i < pn->data.size(); ++i) {
          bool pos = ynode->data[i] != 0.0;
          double pt = pos ? pn->data[i] : 1.0 - pn->data[i];
          double at = pos ? alpha : 1.0 - alpha;
          double ptc = std::max(pt, kLogClamp);
          // d/dpt [ -a(1-pt)^γ ln pt ] = aγ(1-pt)^(γ-1) ln pt - a(1-pt)^γ/pt
          double dpt = -at * std::pow(1.0 - pt, gamma) / ptc;
          if (gamma > 0.0 && pt < 1.0)
            dpt += at * gamma * std::pow(1.0 - pt, gamma - 1.0) *
                   std::log(ptc);
          pn->grad[i] += g * (pos ? dpt : -dpt);
        }
      });
}

Tensor total_loss(const Tensor& logits, const Tensor& target_onehot,
                  const LossConfig& cfg) {
  Tensor ce = ce_loss(logits, target_onehot);
  if (!cfg.use_focal) return ce;
  if (logits.extent(0) != 2)
    throw ShapeError("total_loss: focal term requires 2 classes");
  Tensor p1 = select_channel(softmax(logits, 0), 1);
  Tensor y = select_channel(target_onehot, 1);
  return add(ce, focal_loss(p1, y, cfg));
}

Tensor onehot_from_mask(const Tensor& mask) {
  if (mask.rank() != 2) throw ShapeError("onehot_from_mask: expected H×W");
  std::size_t hw = mask.size();
  std::vector<double> out(2 * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    double v = mask.at(i);
    if (v != 0.0 && v != 1.0)
      throw ValueError("onehot_from_mask: mask must be binary");
    out[i] = 1.0 - v;
    out[hw + i] = v;
  }
  return Tensor::from_data({2, mask.extent(0), mask.extent(1)},
                           std::move(out));
}

}  // namespace akseg
