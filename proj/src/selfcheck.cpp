#include "akseg/selfcheck.hpp"

#include <utility>
#include <vector>

#include "akseg/attention.hpp"
#include "akseg/losses.hpp"
#include "akseg/network.hpp"
#include "akseg/rng.hpp"
#include "akseg/spline.hpp"

namespace akseg {
namespace {

Tensor random_param(Shape shape, Rng& rng, double lo = -0.9, double hi = 0.9) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(d), true);
}

using Params = std::vector<std::pair<std::string, Tensor>>;

}  // namespace

std::vector<CheckCase> gradcheck_ops(double rtol) {
  std::vector<CheckCase> cases;
  Rng rng(20240901);

  {
    Tensor a = random_param({3, 4}, rng);
    Tensor b = random_param({4, 5}, rng);
    Params ps{{"a", a}, {"b", b}};
    auto f = [&] { return sum(matmul(a, b)); };
    cases.push_back({"matmul", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor x = random_param({2, 6, 6}, rng);
    Tensor w = random_param({3, 2, 3, 3}, rng);
    Tensor b = random_param({3}, rng);
    Params ps{{"x", x}, {"w", w}, {"b", b}};
    auto f = [&] { return sum(conv2d(x, w, b, 1, 1)); };
    cases.push_back({"conv2d", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor x = random_param({3, 5, 5}, rng);
    Tensor w = random_param({3, 3, 3}, rng);
    Tensor b = random_param({3}, rng);
    Params ps{{"x", x}, {"w", w}, {"b", b}};
    auto f = [&] { return sum(mul(dwconv2d(x, w, b, 1), x)); };
    cases.push_back({"dwconv2d", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor x = random_param({4, 6}, rng);
    Tensor g = random_param({6}, rng, 0.5, 1.5);
    Tensor b = random_param({6}, rng);
    Params ps{{"x", x}, {"gamma", g}, {"beta", b}};
    auto f = [&] {
      Tensor y = layer_norm(x, g, b, 1e-5);
      return sum(mul(y, y));  // quadratic head so x gradients survive
    };
    cases.push_back({"layer_norm", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor x = random_param({4, 5}, rng, -2.0, 2.0);
    Tensor w = random_param({4, 5}, rng);
    Params ps{{"x", x}};
    auto f = [&] { return sum(mul(softmax(x, 1), w)); };
    cases.push_back({"softmax", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Rng prng(7);
    AttentionParams ap(4, prng);
    Tensor tokens = random_param({6, 4}, rng);
    Params ps{{"tokens", tokens}, {"wq", ap.wq}, {"wk", ap.wk},
              {"wv", ap.wv},      {"wo", ap.wo}};
    auto f = [&] { return sum(self_attention(tokens, ap, 2).out); };
    cases.push_back({"attention", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Rng prng(9);
    BSplineBasis grid(-1.0, 1.0, 5, 3);
    SplineFunction fn(grid, true, prng);
    Tensor x = random_param({8}, rng);  // inside the grid, clamp inactive
    Params ps{{"x", x},
              {"coeffs", fn.coeffs},
              {"base_weight", fn.base_weight}};
    auto f = [&] { return sum(spline_eval(fn, x)); };
    cases.push_back({"spline_eval", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Rng prng(11);
    KanGridConfig gc;
    std::vector<KanLayer> stack;
    stack.emplace_back(3, 4, gc, prng);
    stack.emplace_back(4, 2, gc, prng);
    Tensor x = random_param({5, 3}, rng);
    Params ps{{"x", x}};
    for (std::size_t l = 0; l < stack.size(); ++l)
      stack[l].parameters(ps, "layer" + std::to_string(l));
    auto f = [&] { return sum(kan_forward(stack, x)); };
    cases.push_back({"kan_forward", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor logits = random_param({2, 3, 3}, rng, -1.5, 1.5);
    Tensor mask({3, 3}, 0.0);
    for (std::size_t i = 0; i < 9; ++i) mask.at(i) = (i % 3 == 0) ? 1.0 : 0.0;
    Tensor onehot = onehot_from_mask(mask);
    Params ps{{"logits", logits}};
    auto f = [&] { return ce_loss(logits, onehot); };
    cases.push_back({"ce_loss", gradcheck(f, ps, 1e-5, rtol)});
  }
  {
    Tensor logits = random_param({2, 3, 3}, rng, -1.5, 1.5);
    Tensor y({3, 3}, 0.0);
    for (std::size_t i = 0; i < 9; ++i) y.at(i) = (i % 2 == 0) ? 1.0 : 0.0;
    LossConfig lc;
    Params ps{{"logits", logits}};
    auto f = [&] {
      Tensor p1 = select_channel(softmax(logits, 0), 1);
      return focal_loss(p1, y, lc);
    };
    cases.push_back({"focal_loss", gradcheck(f, ps, 1e-5, rtol)});
  }
  return cases;
}

CheckCase gradcheck_model(double rtol) {
  ModelConfig mc;
  mc.base_channels = 4;
  mc.init_seed = 3;
  SegModel model(mc);

  Rng rng(20240902);
  Tensor image = random_param({1, 16, 16}, rng, 0.0, 1.0);
  image.set_requires_grad(false);
  Tensor mask({16, 16}, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.at(i) = rng.uniform01() < 0.3 ? 1.0 : 0.0;
  Tensor onehot = onehot_from_mask(mask);
  LossConfig lc;

  Params ps = model.parameters();
  auto f = [&] { return total_loss(model.forward(image), onehot, lc); };
  // One entry per parameter tensor keeps the finite-difference budget small
  // while still touching every weight in the model.
  return {"model", gradcheck(f, ps, 1e-5, rtol, 1, 42)};
}

}  // namespace akseg
