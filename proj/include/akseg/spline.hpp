#ifndef AKSEG_SPLINE_HPP
#define AKSEG_SPLINE_HPP

#include <cstdint>
#include <vector>

#include "akseg/rng.hpp"
#include "akseg/tensor.hpp"

namespace akseg {

// Uniform B-spline basis over `intervals` knot spans on [t_min, t_max],
// extended by `degree` spans on each side, giving intervals+degree basis
// functions. Inputs are clamped to [t_min, t_max] before evaluation, so
// extrapolation is constant.
struct BSplineBasis {
  double t_min = -1.0;
  double t_max = 1.0;
  std::size_t intervals = 5;  // G
  std::size_t degree = 3;     // d
  std::vector<double> knots;  // G + 2d + 1 values, strictly increasing

  BSplineBasis() { build(); }
  BSplineBasis(double lo, double hi, std::size_t g, std::size_t d)
      : t_min(lo), t_max(hi), intervals(g), degree(d) {
    build();
  }
  void build();

  std::size_t n_basis() const { return intervals + degree; }
  double clamp(double x) const;

  // Fills basis[0..n_basis) with B_m(clamp(x)); deriv may be null.
  // Derivatives are zero outside [t_min, t_max] (constant extrapolation).
  void eval(double x, double* basis, double* deriv = nullptr) const;
};

// One learnable univariate function: base_weight·silu(clamp(x)) + spline.
struct SplineFunction {
  BSplineBasis grid;
  Tensor coeffs;       // [n_basis]
  Tensor base_weight;  // scalar
  bool use_base = true;

  SplineFunction() = default;
  SplineFunction(const BSplineBasis& g, bool base, Rng& rng);
};

// Elementwise application of the function; differentiable in x, coeffs and
// base_weight.
Tensor spline_eval(const SplineFunction& f, const Tensor& x);

struct KanGridConfig {
  double t_min = -1.0;
  double t_max = 1.0;
  std::size_t intervals = 5;
  std::size_t degree = 3;
  bool use_base = true;
};

// One KAN layer: output j = Σ_i φ_{j,i}(x_i). Coefficients are packed into
// one tensor [n_out, n_in, n_basis] plus base weights [n_out, n_in]; the
// per-edge functions are exposed through function_at() for tests.
struct KanLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  BSplineBasis grid;
  bool use_base = true;
  Tensor coeffs;        // [n_out, n_in, n_basis]
  Tensor base_weights;  // [n_out, n_in]

  KanLayer() = default;
  KanLayer(std::size_t in, std::size_t out, const KanGridConfig& cfg,
           Rng& rng);

  // Copy of edge (j,i) as a standalone SplineFunction (detached values).
  SplineFunction function_at(std::size_t j, std::size_t i) const;
  void parameters(std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix) const;
};

// x is [n_in] or [batch, n_in]; batched over the leading axis.
Tensor kan_layer_forward(const KanLayer& layer, const Tensor& x);
Tensor kan_forward(const std::vector<KanLayer>& stack, const Tensor& x0);

enum class Activation { Identity, Relu, Silu };

struct MlpLayer {
  Tensor weight;  // [n_out, n_in]
  Tensor bias;    // [n_out]
  MlpLayer() = default;
  MlpLayer(std::size_t in, std::size_t out, Rng& rng);
};

// W_{L-1}(σ(...σ(W_0 x)...)): activation between layers, none after the last.
Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& x,
                   Activation act);

}  // namespace akseg

#endif
