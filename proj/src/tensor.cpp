#include "akseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

namespace akseg {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += "x";
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string("non-finite value produced by op '") +
                         op + "' at flat index " + std::to_string(i));
    }
  }
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
  n_ = std::make_shared<Node>();
  n_->shape = std::move(shape);
  n_->data.assign(shape_numel(n_->shape), fill);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.n_ = std::make_shared<Node>();
  t.n_->shape = std::move(shape);
  t.n_->data = std::move(data);
  t.n_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return n_->data[0];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return n_->data[i * n_->shape[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return n_->data[i * n_->shape[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return n_->data[(i * n_->shape[1] + j) * n_->shape[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return n_->data[(i * n_->shape[1] + j) * n_->shape[2] + k];
}

void Tensor::set_requires_grad(bool rg) { n_->requires_grad = rg; }

std::vector<double>& Tensor::grad() {
  n_->ensure_grad();
  return n_->grad;
}
const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() { n_->grad.assign(n_->data.size(), 0.0); }

Tensor Tensor::detach() const {
  return Tensor::from_data(n_->shape, n_->data, false);
}

Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward_fn) {
  check_finite(name, data);
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in.requires_grad();
  if (rg) {
    out.node()->requires_grad = true;
    for (const auto& in : inputs) out.node()->parents.push_back(in.node());
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

static void require_same_shape(const char* op, const Tensor& a,
                               const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Shapes equal, or one operand a true scalar (single element).
static bool scalar_pair(const Tensor& a, const Tensor& b) {
  return a.size() == 1 || b.size() == 1;
}

template <typename Fwd, typename Bwd>
static Tensor binary_pointwise(const char* op, const Tensor& a,
                               const Tensor& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape() && !scalar_pair(a, b)) {
    require_same_shape(op, a, b);
  }
  const Tensor& big = a.size() >= b.size() ? a : b;
  std::size_t n = big.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double av = a.size() == 1 ? a.at(0) : a.at(i);
    double bv = b.size() == 1 ? b.at(0) : b.at(i);
    out[i] = fwd(av, bv);
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(op, big.shape(), std::move(out), {a, b}, [an, bn, bwd](Node& self) {
    std::size_t n = self.size();
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double av = an->data.size() == 1 ? an->data[0] : an->data[i];
      double bv = bn->data.size() == 1 ? bn->data[0] : bn->data[i];
      double da = 0.0, db = 0.0;
      bwd(av, bv, self.grad[i], da, db);
      if (an->requires_grad) an->grad[an->data.size() == 1 ? 0 : i] += da;
      if (bn->requires_grad) bn->grad[bn->data.size() == 1 ? 0 : i] += db;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      "mul_elementwise", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

template <typename Fwd, typename Dfdx>
static Tensor unary_pointwise(const char* op, const Tensor& a, Fwd fwd,
                              Dfdx dfdx) {
  std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a.at(i));
  auto an = a.node();
  return make_op(op, a.shape(), std::move(out), {a}, [an, dfdx](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) {
      an->grad[i] += self.grad[i] * dfdx(an->data[i]);
    }
  });
}

Tensor scalar_mul(const Tensor& a, double s) {
  return unary_pointwise(
      "scalar_mul", a, [s](double x) { return s * x; },
      [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_pointwise(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scalar_mul(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_pointwise(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  return unary_pointwise(
      "silu", a,
      [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x) {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor sum(const Tensor& a) {
  double acc = std::accumulate(a.vec().begin(), a.vec().end(), 0.0);
  auto an = a.node();
  return make_op("sum", {1}, {acc}, {a}, [an](Node& self) {
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double inv = 1.0 / static_cast<double>(a.size());
  double acc = std::accumulate(a.vec().begin(), a.vec().end(), 0.0) * inv;
  auto an = a.node();
  return make_op("mean", {1}, {acc}, {a}, [an, inv](Node& self) {
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0] * inv;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  auto an = a.node();
  return make_op("reshape", std::move(shape), a.vec(), {a}, [an](Node& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      an->grad[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expected rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::size_t m = a.extent(0), k = a.extent(1);
  std::size_t k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dimension mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data();
  const double* B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](Node& self) {
                   const double* G = self.grad.data();
                   if (an->requires_grad) {
                     an->ensure_grad();  // dA = G · Bᵀ
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           acc += G[i * n + j] * bn->data[p * n + j];
                         an->grad[i * k + p] += acc;
                       }
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();  // dB = Aᵀ · G
                     for (std::size_t p = 0; p < k; ++p)
                       for (std::size_t j = 0; j < n; ++j) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < m; ++i)
                           acc += an->data[i * k + p] * G[i * n + j];
                         bn->grad[p * n + j] += acc;
                       }
                   }
                 });
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d: expected rank-2 tensor");
  std::size_t m = a.extent(0), n = a.extent(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  auto an = a.node();
  return make_op("transpose2d", {n, m}, std::move(out), {a},
                 [an, m, n](Node& self) {
                   an->ensure_grad();
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       an->grad[i * n + j] += self.grad[j * m + i];
                 });
}

// Axis softmax over arbitrary rank via (outer, axis, inner) strides.
Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(x.shape()));
  }
  std::size_t L = x.extent(axis);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.extent(i);
  std::vector<double> out(x.size());
  const double* X = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * L * inner + in;
      double mx = X[base];
      for (std::size_t l = 1; l < L; ++l)
        mx = std::max(mx, X[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        double e = std::exp(X[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < L; ++l) out[base + l * inner] /= z;
    }
  }
  auto xn = x.node();
  return make_op("softmax", x.shape(), std::move(out), {x},
                 [xn, L, inner, outer](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t o = 0; o < outer; ++o) {
                     for (std::size_t in = 0; in < inner; ++in) {
                       std::size_t base = o * L * inner + in;
                       double dot = 0.0;
                       for (std::size_t l = 0; l < L; ++l) {
                         std::size_t ix = base + l * inner;
                         dot += self.grad[ix] * self.data[ix];
                       }
                       for (std::size_t l = 0; l < L; ++l) {
                         std::size_t ix = base + l * inner;
                         xn->grad[ix] += self.data[ix] * (self.grad[ix] - dot);
                       }
                     }
                   }
                 });
}

// Rows of x are tokens, the last axis (length C) is normalized.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  std::size_t c = x.extent(x.rank() - 1);
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("layer_norm: gamma/beta length must equal feature axis " +
                     std::to_string(c));
  }
  std::size_t rows = x.size() / c;
  std::vector<double> out(x.size());
  std::vector<double> mu(rows), istd(rows);
  const double* X = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * c;
    double m = 0.0;
    for (std::size_t j = 0; j < c; ++j) m += xr[j];
    m /= static_cast<double>(c);
    double v = 0.0;
    for (std::size_t j = 0; j < c; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= static_cast<double>(c);
    double is = 1.0 / std::sqrt(v + eps);
    mu[r] = m;
    istd[r] = is;
    for (std::size_t j = 0; j < c; ++j)
      out[r * c + j] = (xr[j] - m) * is * gamma.at(j) + beta.at(j);
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, rows, c, mu, istd](Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = xn->data.data() + r * c;
          const double* gr = self.grad.data() + r * c;
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            double xhat = (xr[j] - mu[r]) * istd[r];
            double dxhat = gr[j] * gn->data[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat;
            if (gn->requires_grad) gn->grad[j] += gr[j] * xhat;
            if (bn->requires_grad) bn->grad[j] += gr[j];
          }
          if (!xn->requires_grad) continue;
          mean_dxhat /= static_cast<double>(c);
          mean_dxhat_xhat /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) {
            double xhat = (xr[j] - mu[r]) * istd[r];
            double dxhat = gr[j] * gn->data[j];
            xn->grad[r * c + j] +=
                istd[r] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw ShapeError("conv2d: expected x C×H×W and w Co×Ci×kh×kw");
  }
  std::size_t ci = x.extent(0), h = x.extent(1), wd = x.extent(2);
  std::size_t co = w.extent(0), wci = w.extent(1), kh = w.extent(2),
              kw = w.extent(3);
  if (ci != wci) {
    throw ShapeError("conv2d: input channels " + std::to_string(ci) +
                     " != kernel channels " + std::to_string(wci));
  }
  if (kh > h + 2 * pad || kw > wd + 2 * pad) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " larger than padded input");
  }
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  if (bias.defined() && bias.size() != co) {
    throw ShapeError("conv2d: bias length must equal output channels");
  }
  std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(co * ho * wo, 0.0);
  const double* X = x.data();
  const double* W = w.data();
  for (std::size_t oc = 0; oc < co; ++oc) {
    double b = bias.defined() ? bias.at(oc) : 0.0;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = b;
        for (std::size_t ic = 0; ic < ci; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            long iy = static_cast<long>(oy * stride + ky) -
                      static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              long ix = static_cast<long>(ox * stride + kx) -
                        static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              acc += X[(ic * h + iy) * wd + ix] *
                     W[((oc * ci + ic) * kh + ky) * kw + kx];
            }
          }
        }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
    }
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      "conv2d", {co, ho, wo}, std::move(out), inputs,
      [xn, wn, bn, ci, h, wd, co, kh, kw, ho, wo, stride, pad](Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn && bn->requires_grad) bn->ensure_grad();
        for (std::size_t oc = 0; oc < co; ++oc) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              double g = self.grad[(oc * ho + oy) * wo + ox];
              if (g == 0.0) continue;
              if (bn && bn->requires_grad) bn->grad[oc] += g;
              for (std::size_t ic = 0; ic < ci; ++ic) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  long iy = static_cast<long>(oy * stride + ky) -
                            static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    long ix = static_cast<long>(ox * stride + kx) -
                              static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                    std::size_t xi = (ic * h + iy) * wd + ix;
                    std::size_t wi = ((oc * ci + ic) * kh + ky) * kw + kx;
                    if (xn->requires_grad)
                      xn->grad[xi] += g * wn->data[wi];
                    if (wn->requires_grad)
                      wn->grad[wi] += g * xn->data[xi];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor dwconv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 3) {
    throw ShapeError("dwconv2d: expected x C×H×W and w C×kh×kw");
  }
  std::size_t c = x.extent(0), h = x.extent(1), wd = x.extent(2);
  std::size_t wc = w.extent(0), kh = w.extent(1), kw = w.extent(2);
  if (c != wc) {
    throw ShapeError("dwconv2d: channel count mismatch " + std::to_string(c) +
                     " vs " + std::to_string(wc));
  }
  if (kh > h + 2 * pad || kw > wd + 2 * pad) {
    throw ShapeError("dwconv2d: kernel larger than padded input");
  }
  if (bias.defined() && bias.size() != c) {
    throw ShapeError("dwconv2d: bias length must equal channel count");
  }
  std::size_t ho = h + 2 * pad - kh + 1;
  std::size_t wo = wd + 2 * pad - kw + 1;
  std::vector<double> out(c * ho * wo, 0.0);
  const double* X = x.data();
  const double* W = w.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double b = bias.defined() ? bias.at(ch) : 0.0;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = b;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
            acc += X[(ch * h + iy) * wd + ix] * W[(ch * kh + ky) * kw + kx];
          }
        }
        out[(ch * ho + oy) * wo + ox] = acc;
      }
    }
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      "dwconv2d", {c, ho, wo}, std::move(out), inputs,
      [xn, wn, bn, c, h, wd, kh, kw, ho, wo, pad](Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn && bn->requires_grad) bn->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              double g = self.grad[(ch * ho + oy) * wo + ox];
              if (g == 0.0) continue;
              if (bn && bn->requires_grad) bn->grad[ch] += g;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  long ix = static_cast<long>(ox + kx) -
                            static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                  std::size_t xi = (ch * h + iy) * wd + ix;
                  std::size_t wi = (ch * kh + ky) * kw + kx;
                  if (xn->requires_grad) xn->grad[xi] += g * wn->data[wi];
                  if (wn->requires_grad) wn->grad[wi] += g * xn->data[xi];
                }
              }
            }
          }
        }
      });
}

Tensor maxpool2x2(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool2x2: expected C×H×W");
  std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial size must be even, got " +
                     shape_str(x.shape()));
  }
  std::size_t ho = h / 2, wo = w / 2;
  std::vector<double> out(c * ho * wo);
  std::vector<std::size_t> argmax(c * ho * wo);
  const double* X = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ch * h + 2 * oy) * w + 2 * ox;
        double bv = X[best];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            std::size_t ix = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (X[ix] > bv) {
              bv = X[ix];
              best = ix;
            }
          }
        out[(ch * ho + oy) * wo + ox] = bv;
        argmax[(ch * ho + oy) * wo + ox] = best;
      }
    }
  }
  auto xn = x.node();
  return make_op("maxpool2x2", {c, ho, wo}, std::move(out), {x},
                 [xn, argmax](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < self.size(); ++i)
                     xn->grad[argmax[i]] += self.grad[i];
                 });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("upsample_nearest2x: expected C×H×W");
  std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  std::size_t ho = 2 * h, wo = 2 * w;
  std::vector<double> out(c * ho * wo);
  const double* X = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        out[(ch * ho + oy) * wo + ox] = X[(ch * h + oy / 2) * w + ox / 2];
  auto xn = x.node();
  return make_op("upsample_nearest2x", {c, ho, wo}, std::move(out), {x},
                 [xn, c, h, w, ho, wo](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t oy = 0; oy < ho; ++oy)
                       for (std::size_t ox = 0; ox < wo; ++ox)
                         xn->grad[(ch * h + oy / 2) * w + ox / 2] +=
                             self.grad[(ch * ho + oy) * wo + ox];
                 });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(1) != b.extent(1) ||
      a.extent(2) != b.extent(2)) {
    throw ShapeError("concat_channels: incompatible shapes " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::size_t ca = a.extent(0), cb = b.extent(0);
  std::size_t h = a.extent(1), w = a.extent(2);
  std::vector<double> out;
  out.reserve((ca + cb) * h * w);
  out.insert(out.end(), a.vec().begin(), a.vec().end());
  out.insert(out.end(), b.vec().begin(), b.vec().end());
  auto an = a.node();
  auto bn = b.node();
  std::size_t na = a.size();
  return make_op("concat_channels", {ca + cb, h, w}, std::move(out), {a, b},
                 [an, bn, na](Node& self) {
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < na; ++i)
                       an->grad[i] += self.grad[i];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = na; i < self.size(); ++i)
                       bn->grad[i - na] += self.grad[i];
                   }
                 });
}

Tensor select_channel(const Tensor& x, std::size_t c) {
  if (x.rank() != 3) throw ShapeError("select_channel: expected C×H×W");
  if (c >= x.extent(0)) throw ShapeError("select_channel: channel out of range");
  std::size_t h = x.extent(1), w = x.extent(2), hw = h * w;
  std::vector<double> out(x.vec().begin() + c * hw,
                          x.vec().begin() + (c + 1) * hw);
  auto xn = x.node();
  return make_op("select_channel", {h, w}, std::move(out), {x},
                 [xn, c, hw](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < hw; ++i)
                     xn->grad[c * hw + i] += self.grad[i];
                 });
}

Tensor chw_to_tokens(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("chw_to_tokens: expected C×H×W");
  std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2), n = h * w;
  std::vector<double> out(n * c);
  const double* X = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < n; ++p) out[p * c + ch] = X[ch * n + p];
  auto xn = x.node();
  return make_op("chw_to_tokens", {n, c}, std::move(out), {x},
                 [xn, c, n](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t p = 0; p < n; ++p)
                       xn->grad[ch * n + p] += self.grad[p * c + ch];
                 });
}

Tensor tokens_to_chw(const Tensor& t, std::size_t h, std::size_t w) {
  if (t.rank() != 2) throw ShapeError("tokens_to_chw: expected N×C tokens");
  std::size_t n = t.extent(0), c = t.extent(1);
  if (n != h * w) {
    throw ShapeError("tokens_to_chw: token count " + std::to_string(n) +
                     " != h*w = " + std::to_string(h * w));
  }
  std::vector<double> out(c * n);
  const double* T = t.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < n; ++p) out[ch * n + p] = T[p * c + ch];
  auto tn = t.node();
  return make_op("tokens_to_chw", {c, h, w}, std::move(out), {t},
                 [tn, c, n](Node& self) {
                   tn->ensure_grad();
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t p = 0; p < n; ++p)
                       tn->grad[p * c + ch] += self.grad[ch * n + p];
                 });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected N×C matrix");
  std::size_t n = x.extent(0), c = x.extent(1);
  for (auto i : idx) {
    if (i >= n) throw ValueError("gather_rows: index out of range");
  }
  std::vector<double> out(idx.size() * c);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.data() + idx[r] * c, c, out.data() + r * c);
  auto xn = x.node();
  return make_op("gather_rows", {idx.size(), c}, std::move(out), {x},
                 [xn, idx, c](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (std::size_t j = 0; j < c; ++j)
                       xn->grad[idx[r] * c + j] += self.grad[r * c + j];
                 });
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  if (x.rank() != 2) throw ShapeError("slice_cols: expected N×C matrix");
  std::size_t n = x.extent(0), c = x.extent(1);
  if (c0 >= c1 || c1 > c) throw ShapeError("slice_cols: bad column range");
  std::size_t cw = c1 - c0;
  std::vector<double> out(n * cw);
  for (std::size_t r = 0; r < n; ++r)
    std::copy_n(x.data() + r * c + c0, cw, out.data() + r * cw);
  auto xn = x.node();
  return make_op("slice_cols", {n, cw}, std::move(out), {x},
                 [xn, c0, c, cw, n](Node& self) {
                   xn->ensure_grad();
                   for (std::size_t r = 0; r < n; ++r)
                     for (std::size_t j = 0; j < cw; ++j)
                       xn->grad[r * c + c0 + j] += self.grad[r * cw + j];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: empty input list");
  std::size_t n = parts[0].extent(0), ctot = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.extent(0) != n)
      throw ShapeError("concat_cols: row count mismatch");
    ctot += p.extent(1);
  }
  std::vector<double> out(n * ctot);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t cw = p.extent(1);
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(p.data() + r * cw, cw, out.data() + r * ctot + off);
    off += cw;
  }
  std::vector<std::shared_ptr<Node>> pnodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    pnodes.push_back(p.node());
    widths.push_back(p.extent(1));
  }
  return make_op("concat_cols", {n, ctot}, std::move(out), parts,
                 [pnodes, widths, n, ctot](Node& self) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < pnodes.size(); ++k) {
                     std::size_t cw = widths[k];
                     if (pnodes[k]->requires_grad) {
                       pnodes[k]->ensure_grad();
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t j = 0; j < cw; ++j)
                           pnodes[k]->grad[r * cw + j] +=
                               self.grad[r * ctot + off + j];
                     }
                     off += cw;
                   }
                 });
}

std::vector<std::size_t> topk_indices(const Tensor& scores, std::size_t k) {
  std::size_t n = scores.size();
  if (k < 1 || k > n) {
    throw ValueError("topk_indices: k=" + std::to_string(k) +
                     " out of range [1," + std::to_string(n) + "]");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores.at(a) != scores.at(b))
                       return scores.at(a) > scores.at(b);
                     return a < b;
                   });
  idx.resize(k);
  return idx;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ValueError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  }
  Node* root = loss.node().get();
  if (root->backward_done) {
    throw ValueError(
        "backward: already called on this forward pass; rerun forward before "
        "calling backward again");
  }
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS → topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : topo) n->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%s: checked=%zu max_rel_err=%.3e worst=%s[%zu] "
                "analytic=%.9e numeric=%.9e",
                pass ? "PASS" : "FAIL", checked, max_rel_err,
                worst_param.c_str(), worst_index, worst_analytic,
                worst_numeric);
  return std::string(buf);
}

GradCheckReport gradcheck(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& params, double step,
    double rtol, std::size_t max_entries, std::uint64_t sample_seed) {
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) {
      throw ValueError("gradcheck: parameter '" + name +
                       "' does not require grad");
    }
    Tensor(p).zero_grad();
  }
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  GradCheckReport rep;
  std::uint64_t rng = sample_seed * 0x9E3779B97F4A7C15ULL + 1;
  auto next_u64 = [&rng]() {
    rng ^= rng << 13;
    rng ^= rng >> 7;
    rng ^= rng << 17;
    return rng;
  };
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    std::vector<std::size_t> entries;
    if (max_entries == 0 || p.size() <= max_entries) {
      entries.resize(p.size());
      std::iota(entries.begin(), entries.end(), 0);
    } else {
      std::unordered_set<std::size_t> chosen;
      while (chosen.size() < max_entries)
        chosen.insert(next_u64() % p.size());
      entries.assign(chosen.begin(), chosen.end());
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      double orig = p.at(e);
      p.at(e) = orig + step;
      double fp = f().item();
      p.at(e) = orig - step;
      double fm = f().item();
      p.at(e) = orig;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[pi][e];
      double rel = std::abs(a - numeric) /
                   std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = params[pi].first;
        rep.worst_index = e;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  rep.pass = rep.max_rel_err <= rtol;
  return rep;
}

}  // namespace akseg
