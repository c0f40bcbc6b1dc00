#include "akseg/spline.hpp"

#include <algorithm>
#include <cmath>

namespace akseg {

void BSplineBasis::build() {
  if (intervals < 1) throw ValueError("BSplineBasis: intervals must be >= 1");
  if (t_max <= t_min) throw ValueError("BSplineBasis: t_max must exceed t_min");
  double h = (t_max - t_min) / static_cast<double>(intervals);
  knots.resize(intervals + 2 * degree + 1);
  for (std::size_t i = 0; i < knots.size(); ++i) {
    knots[i] = t_min + (static_cast<double>(i) -
                        static_cast<double>(degree)) * h;
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (knots[i] <= knots[i - 1])
      throw ValueError("BSplineBasis: knots not strictly increasing");
  }
}

double BSplineBasis::clamp(double x) const {
  return std::min(std::max(x, t_min), t_max);
}

void BSplineBasis::eval(double x, double* basis, double* deriv) const {
  std::size_t nb = n_basis();
  std::fill(basis, basis + nb, 0.0);
  if (deriv) std::fill(deriv, deriv + nb, 0.0);
  bool clamped = (x < t_min) || (x > t_max);
  double xc = clamp(x);
  double h = (t_max - t_min) / static_cast<double>(intervals);

  // knot span index into the full knot vector, restricted to the domain
  std::size_t span = degree + std::min<std::size_t>(
                                  intervals - 1,
                                  static_cast<std::size_t>(std::max(
                                      0.0, (xc - t_min) / h)));

  // Triangular basis recursion (degree raising); keeps the degree-1 row
  // for the derivative formula.
  std::size_t d = degree;
  std::vector<double> N(d + 1, 0.0), Nlow(d, 0.0);
  std::vector<double> left(d + 1), right(d + 1);
  N[0] = 1.0;
  for (std::size_t r = 1; r <= d; ++r) {
    if (r == d) std::copy_n(N.data(), d, Nlow.data());
    left[r] = xc - knots[span + 1 - r];
    right[r] = knots[span + r] - xc;
    double saved = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      double temp = N[k] / (right[k + 1] + left[r - k]);
      N[k] = saved + right[k + 1] * temp;
      saved = left[r - k] * temp;
    }
    N[r] = saved;
  }
  // Degree-d functions with support over the span: indices span-d .. span.
  for (std::size_t k = 0; k <= d; ++k) basis[span - d + k] = N[k];

  if (!deriv || d == 0) return;
  if (clamped) return;  // constant extrapolation: zero slope outside grid
  // B'_{m,d} = d [ B_{m,d-1}/(t_{m+d}-t_m) - B_{m+1,d-1}/(t_{m+d+1}-t_{m+1}) ]
  auto low = [&](std::size_t m) -> double {
    // degree d-1 nonzero functions at this span: span-d+1 .. span
    if (m + d < m) return 0.0;
    if (m < span - d + 1 || m > span) return 0.0;
    return Nlow[m - (span - d + 1)];
  };
  for (std::size_t m = span - d; m <= span; ++m) {
    double a = low(m) / (knots[m + d] - knots[m]);
    double b = low(m + 1) / (knots[m + d + 1] - knots[m + 1]);
    deriv[m] = static_cast<double>(d) * (a - b);
  }
}

SplineFunction::SplineFunction(const BSplineBasis& g, bool base, Rng& rng)
    : grid(g), use_base(base) {
  std::size_t nb = g.n_basis();
  double scale = 0.1 / std::sqrt(static_cast<double>(nb));
  std::vector<double> c(nb);
  for (auto& v : c) v = rng.uniform(-scale, scale);
  coeffs = Tensor::from_data({nb}, std::move(c), true);
  base_weight = Tensor::scalar(base ? 1.0 : 0.0, true);
}

static double silu_val(double x) { return x / (1.0 + std::exp(-x)); }
static double silu_deriv(double x) {
  double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Tensor spline_eval(const SplineFunction& f, const Tensor& x) {
  std::size_t n = x.size();
  std::size_t nb = f.grid.n_basis();
  if (f.coeffs.size() != nb)
    throw ShapeError("spline_eval: coefficient count mismatch");
  std::vector<double> out(n);
  std::vector<double> basis(n * nb), dbasis(n * nb);
  std::vector<double> bval(n), bder(n);
  bool base = f.use_base;
  for (std::size_t i = 0; i < n; ++i) {
    double xi = x.at(i);
    double xc = f.grid.clamp(xi);
    bool inside = (xi >= f.grid.t_min) && (xi <= f.grid.t_max);
    f.grid.eval(xi, basis.data() + i * nb, dbasis.data() + i * nb);
    double s = 0.0;
    for (std::size_t m = 0; m < nb; ++m)
      s += f.coeffs.at(m) * basis[i * nb + m];
    if (base) {
      bval[i] = silu_val(xc);
      bder[i] = inside ? silu_deriv(xc) : 0.0;
      s += f.base_weight.item() * bval[i];
    }
    out[i] = s;
  }
  auto xn = x.node();
  auto cn = f.coeffs.node();
  auto bn = f.base_weight.node();
  return make_op(
      "spline_eval", x.shape(), std::move(out), {x, f.coeffs, f.base_weight},
      [xn, cn, bn, nb, base, basis = std::move(basis),
       dbasis = std::move(dbasis), bval = std::move(bval),
       bder = std::move(bder)](Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (cn->requires_grad) cn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        double bw = bn->data[0];
        for (std::size_t i = 0; i < self.size(); ++i) {
          double g = self.grad[i];
          if (g == 0.0) continue;
          double dx = 0.0;
          for (std::size_t m = 0; m < nb; ++m) {
            dx += cn->data[m] * dbasis[i * nb + m];
            if (cn->requires_grad) cn->grad[m] += g * basis[i * nb + m];
          }
          if (base) {
            dx += bw * bder[i];
            if (bn->requires_grad) bn->grad[0] += g * bval[i];
          }
          if (xn->requires_grad) xn->grad[i] += g * dx;
        }
      });
}

KanLayer::KanLayer(std::size_t in, std::size_t out, const KanGridConfig& cfg,
                   Rng& rng)
    : n_in(in),
      n_out(out),
      grid(cfg.t_min, cfg.t_max, cfg.intervals, cfg.degree),
      use_base(cfg.use_base) {
  if (in == 0 || out == 0) throw ValueError("KanLayer: extents must be positive");
  std::size_t nb = grid.n_basis();
  double cscale = 0.1 / std::sqrt(static_cast<double>(nb));
  std::vector<double> c(out * in * nb);
  for (auto& v : c) v = rng.uniform(-cscale, cscale);
  coeffs = Tensor::from_data({out, in, nb}, std::move(c), true);
  double bscale = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> bw(out * in);
  for (auto& v : bw)
    v = use_base ? rng.uniform(-bscale, bscale) : 0.0;
  base_weights = Tensor::from_data({out, in}, std::move(bw), true);
}

SplineFunction KanLayer::function_at(std::size_t j, std::size_t i) const {
  SplineFunction f;
  f.grid = grid;
  f.use_base = use_base;
  std::size_t nb = grid.n_basis();
  std::vector<double> c(nb);
  for (std::size_t m = 0; m < nb; ++m) c[m] = coeffs.at((j * n_in + i) * nb + m);
  f.coeffs = Tensor::from_data({nb}, std::move(c), false);
  f.base_weight = Tensor::scalar(base_weights.at(j * n_in + i), false);
  return f;
}

void KanLayer::parameters(std::vector<std::pair<std::string, Tensor>>& out,
                          const std::string& prefix) const {
  out.emplace_back(prefix + ".coeffs", coeffs);
  if (use_base) out.emplace_back(prefix + ".base_weights", base_weights);
}

Tensor kan_layer_forward(const KanLayer& layer, const Tensor& x) {
  bool vec_in = x.rank() == 1;
  Tensor xb = vec_in ? reshape(x, {1, x.size()}) : x;
  if (xb.rank() != 2 || xb.extent(1) != layer.n_in) {
    throw ShapeError("kan_layer_forward: input extent " +
                     shape_str(x.shape()) + " does not match n_in=" +
                     std::to_string(layer.n_in));
  }
  std::size_t batch = xb.extent(0);
  std::size_t ni = layer.n_in, no = layer.n_out;
  std::size_t nb = layer.grid.n_basis();
  bool base = layer.use_base;

  // Basis values at each input component are shared across all n_out edges.
  std::vector<double> basis(batch * ni * nb), dbasis(batch * ni * nb);
  std::vector<double> bval(batch * ni, 0.0), bder(batch * ni, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < ni; ++i) {
      double xi = xb.at(b, i);
      std::size_t off = (b * ni + i) * nb;
      layer.grid.eval(xi, basis.data() + off, dbasis.data() + off);
      if (base) {
        double xc = layer.grid.clamp(xi);
        bool inside = (xi >= layer.grid.t_min) && (xi <= layer.grid.t_max);
        bval[b * ni + i] = silu_val(xc);
        bder[b * ni + i] = inside ? silu_deriv(xc) : 0.0;
      }
    }
  }
  std::vector<double> out(batch * no, 0.0);
  const double* C = layer.coeffs.data();
  const double* BW = layer.base_weights.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < no; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ni; ++i) {
        const double* Bm = basis.data() + (b * ni + i) * nb;
        const double* cji = C + (j * ni + i) * nb;
        double s = 0.0;
        for (std::size_t m = 0; m < nb; ++m) s += cji[m] * Bm[m];
        if (base) s += BW[j * ni + i] * bval[b * ni + i];
        acc += s;
      }
      out[b * no + j] = acc;
    }
  }
  auto xn = xb.node();
  auto cn = layer.coeffs.node();
  auto wn = layer.base_weights.node();
  Tensor y = make_op(
      "kan_layer_forward", {batch, no}, std::move(out),
      {xb, layer.coeffs, layer.base_weights},
      [xn, cn, wn, batch, ni, no, nb, base, basis = std::move(basis),
       dbasis = std::move(dbasis), bval = std::move(bval),
       bder = std::move(bder)](Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (cn->requires_grad) cn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < no; ++j) {
            double g = self.grad[b * no + j];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < ni; ++i) {
              std::size_t off = (b * ni + i) * nb;
              const double* cji = cn->data.data() + (j * ni + i) * nb;
              if (xn->requires_grad) {
                double dx = 0.0;
                for (std::size_t m = 0; m < nb; ++m)
                  dx += cji[m] * dbasis[off + m];
                if (base) dx += wn->data[j * ni + i] * bder[b * ni + i];
                xn->grad[b * ni + i] += g * dx;
              }
              if (cn->requires_grad) {
                double* cg = cn->grad.data() + (j * ni + i) * nb;
                for (std::size_t m = 0; m < nb; ++m)
                  cg[m] += g * basis[off + m];
              }
              if (base && wn->requires_grad)
                wn->grad[j * ni + i] += g * bval[b * ni + i];
            }
          }
        }
      });
  return vec_in ? reshape(y, {no}) : y;
}

Tensor kan_forward(const std::vector<KanLayer>& stack, const Tensor& x0) {
  if (stack.empty()) throw ValueError("kan_forward: empty layer stack");
  std::size_t prev = stack.front().n_in;
  for (const auto& l : stack) {
    if (l.n_in != prev) {
      throw ShapeError("kan_forward: layer extent mismatch, expected n_in=" +
                       std::to_string(prev) + " got " +
                       std::to_string(l.n_in));
    }
    prev = l.n_out;
  }
  Tensor x = x0;
  for (const auto& l : stack) x = kan_layer_forward(l, x);
  return x;
}

MlpLayer::MlpLayer(std::size_t in, std::size_t out, Rng& rng) {
  double scale = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(out * in);
  for (auto& v : w) v = rng.uniform(-scale, scale);
  weight = Tensor::from_data({out, in}, std::move(w), true);
  bias = Tensor({out}, 0.0, true);
}

// bias broadcast over the rows of x
static Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  std::size_t rows = x.extent(0), c = x.extent(1);
  if (b.size() != c) throw ShapeError("add_row_bias: width mismatch");
  std::vector<double> out(x.vec());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += b.at(j);
  auto xn = x.node();
  auto bn = b.node();
  return make_op("add_row_bias", x.shape(), std::move(out), {x, b},
                 [xn, bn, rows, c](Node& self) {
                   if (xn->requires_grad) {
                     xn->ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       xn->grad[i] += self.grad[i];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < c; ++j)
                         bn->grad[j] += self.grad[r * c + j];
                   }
                 });
}

static Tensor apply_act(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Identity:
      return x;
    case Activation::Relu:
      return relu(x);
    case Activation::Silu:
      return silu(x);
  }
  throw ValueError("unknown activation");
}

Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& x,
                   Activation act) {
  if (layers.empty()) throw ValueError("mlp_forward: empty layer list");
  bool vec_in = x.rank() == 1;
  Tensor h = vec_in ? reshape(x, {1, x.size()}) : x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ly = layers[l];
    if (h.extent(1) != ly.weight.extent(1)) {
      throw ShapeError("mlp_forward: extent mismatch at layer " +
                       std::to_string(l));
    }
    h = add_row_bias(matmul(h, transpose2d(ly.weight)), ly.bias);
    if (l + 1 < layers.size()) h = apply_act(h, act);
  }
  return vec_in ? reshape(h, {h.extent(1)}) : h;
}

}  // namespace akseg
