#ifndef AKSEG_LOSSES_HPP
#define AKSEG_LOSSES_HPP

#include "akseg/tensor.hpp"

namespace akseg {

struct LossConfig {
  double alpha = 0.25;  // focal balance weight for the positive class
  double gamma = 2.0;   // focusing exponent
  bool use_focal = true;
  void validate() const;
};

// Mean per-pixel cross-entropy over softmaxed logits; log clamped at 1e-12.
// logits and target are n_classes×H×W; target is one-hot per pixel.
Tensor ce_loss(const Tensor& logits, const Tensor& target_onehot);

// Mean of -α_t (1-p_t)^γ log(p_t) with p_t = p if y==1 else 1-p and
// α_t = alpha if y==1 else 1-alpha. p is the predicted probability of the
// positive class per pixel, y the binary ground truth.
Tensor focal_loss(const Tensor& p, const Tensor& y, const LossConfig& cfg);

// ce + focal (focal term dropped when use_focal is off). Binary (2-class).
Tensor total_loss(const Tensor& logits, const Tensor& target_onehot,
                  const LossConfig& cfg);

// One-hot [2,H,W] from a binary mask [H,W].
Tensor onehot_from_mask(const Tensor& mask);

}  // namespace akseg

#endif
