#ifndef AKSEG_NETWORK_HPP
#define AKSEG_NETWORK_HPP

#include <string>
#include <vector>

#include "akseg/attention.hpp"
#include "akseg/metrics.hpp"
#include "akseg/spline.hpp"
#include "akseg/tensor.hpp"

namespace akseg {

struct ModelConfig {
  std::size_t base_channels = 8;  // C: encoder ramp C, 2C, 4C, 8C
  std::size_t n_classes = 2;
  std::size_t heads = 1;
  KanGridConfig kan;
  bool use_sa1 = true;
  bool use_topk = true;
  bool use_sa2 = true;
  std::uint64_t init_seed = 0;

  std::string canonical() const;     // stable textual form
  std::uint64_t config_hash() const; // FNV-1a of canonical()
};

// conv3×3 + token layer-norm + relu, twice
struct ConvStage {
  Tensor w1, b1, g1, be1;
  Tensor w2, b2, g2, be2;
  ConvStage() = default;
  ConvStage(std::size_t cin, std::size_t cout, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void parameters(std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix) const;
};

// tokenize → norm → KAN per token → unflatten → dwconv → norm → PAM →
// residual with the block input; channels and spatial extents preserved.
struct AnchorKanBlock {
  std::size_t channels = 0;
  Tensor tok_w, tok_b;   // 1×1 patch-embedding conv
  Tensor ln1_g, ln1_b;
  KanLayer kan;
  Tensor dw_w, dw_b;     // depthwise 3×3
  Tensor ln2_g, ln2_b;
  PamConfig pam_cfg;
  PamParams pam;

  AnchorKanBlock() = default;
  AnchorKanBlock(std::size_t c, const KanGridConfig& kan_cfg,
                 const PamConfig& pcfg, Rng& rng);
  Tensor forward(const Tensor& fm, AnchorSet* anchors = nullptr) const;
  void parameters(std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix) const;
};

// U-shaped model: encoder ramp C/2C/4C with 2× pooling, an 8C bottleneck
// carrying four Anchor-KAN blocks, mirrored decoder with skip concatenation,
// 1×1 classification head.
struct SegModel {
  ModelConfig cfg;
  ConvStage enc1, enc2, enc3, bott;
  std::vector<AnchorKanBlock> blocks;  // exactly 4
  // decoder stage d: conv after upsample, then 1×1 fuse after skip concat
  Tensor d3_w, d3_b, d3_g, d3_be, f3_w, f3_b;
  Tensor d2_w, d2_b, d2_g, d2_be, f2_w, f2_b;
  Tensor d1_w, d1_b, d1_g, d1_be, f1_w, f1_b;
  Tensor head_w, head_b;

  SegModel() = default;
  explicit SegModel(const ModelConfig& cfg);

  // image is 1×H×W with H, W divisible by 8; returns n_classes×H×W logits.
  Tensor forward(const Tensor& image) const;
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  void zero_grads() const;
};

// Per-pixel argmax; ties go to class 0 (background). n_classes must be 2.
Mask predict_mask(const Tensor& logits);

// Checkpoint: directory with manifest.json (tensor name/shape/dtype/offset,
// config hash) and params.bin (raw little-endian f64 blob). Bit-exact.
void save_checkpoint(const SegModel& m, const std::string& dir);
void load_checkpoint(SegModel& m, const std::string& dir);
std::string checkpoint_manifest_text(const SegModel& m);
ModelConfig read_checkpoint_config(const std::string& dir);

}  // namespace akseg

#endif
