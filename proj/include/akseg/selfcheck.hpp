#ifndef AKSEG_SELFCHECK_HPP
#define AKSEG_SELFCHECK_HPP

#include <string>
#include <vector>

#include "akseg/tensor.hpp"

namespace akseg {

struct CheckCase {
  std::string name;
  GradCheckReport report;
};

// Finite-difference gradient checks for every differentiable primitive:
// matmul, conv2d, dwconv2d, layer_norm, softmax, attention, spline_eval,
// kan_forward, ce_loss, focal_loss. Deterministic inputs.
std::vector<CheckCase> gradcheck_ops(double rtol);

// End-to-end check of the full segmentation model on a 1×16×16 input,
// subsampling entries from every parameter tensor.
CheckCase gradcheck_model(double rtol);

}  // namespace akseg

#endif
