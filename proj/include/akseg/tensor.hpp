#ifndef AKSEG_TENSOR_HPP
#define AKSEG_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace akseg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ValueError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// One autodiff graph node. Activations own their parents via shared_ptr,
// so the subgraph of a forward pass is freed when the loss goes out of
// scope; leaf parameters carry no backward function and persist.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  bool backward_done = false;  // latch: backward() may run once per forward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill, bool requires_grad = false);
  explicit Tensor(Shape shape) : Tensor(std::move(shape), 0.0, false) {}

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->data.size(); }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return n_->shape[axis]; }

  double* data() { return n_->data.data(); }
  const double* data() const { return n_->data.data(); }
  std::vector<double>& vec() { return n_->data; }
  const std::vector<double>& vec() const { return n_->data; }

  double item() const;
  double& at(std::size_t i) { return n_->data[i]; }
  double at(std::size_t i) const { return n_->data[i]; }
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg);
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Same values, no graph history, no gradient.
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return n_; }
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

// Builds an op output node: checks the result for NaN/Inf (naming the op),
// and wires parents + backward closure when any input requires grad.
Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward_fn);

void check_finite(const char* op, const std::vector<double>& v);

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);

// ---- reductions / shape ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

// ---- nonlinearities with structure ----
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

// ---- spatial ops on C×H×W feature maps ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad);
Tensor dwconv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                std::size_t pad);
Tensor maxpool2x2(const Tensor& x);
Tensor upsample_nearest2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor select_channel(const Tensor& x, std::size_t c);

// CHW → (H·W)×C token matrix and back.
Tensor chw_to_tokens(const Tensor& x);
Tensor tokens_to_chw(const Tensor& t, std::size_t h, std::size_t w);

// ---- token ops ----
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

// k largest entries, descending score, ties by ascending flat index.
// Pure index selection: no gradient flows through the choice.
std::vector<std::size_t> topk_indices(const Tensor& scores, std::size_t k);

// Reverse-mode sweep from a scalar loss. Populates .grad on every
// requires_grad tensor in the history. A second call on the same forward
// pass is an error (no silent double accumulation).
void backward(const Tensor& loss);

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::string summary() const;
};

// Central finite differences against analytic gradients.
// rel err = |a-n| / max(1e-8, |a|+|n|), elementwise. max_entries==0 means
// check every entry; otherwise a deterministic subsample per parameter.
GradCheckReport gradcheck(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& params,
    double step = 1e-5, double rtol = 1e-4, std::size_t max_entries = 0,
    std::uint64_t sample_seed = 0);

}  // namespace akseg

#endif
