#ifndef AKSEG_ATTENTION_HPP
#define AKSEG_ATTENTION_HPP

#include <optional>
#include <vector>

#include "akseg/rng.hpp"
#include "akseg/tensor.hpp"

namespace akseg {

// Learned projections of one scaled dot-product attention stage.
struct AttentionParams {
  Tensor wq, wk, wv, wo;  // each [C, C]
  AttentionParams() = default;
  AttentionParams(std::size_t dim, Rng& rng);
  void parameters(std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix) const;
};

struct AttentionOut {
  Tensor out;   // N×C
  Tensor attn;  // N×M row-stochastic map (head-averaged), detachable
};

// Scaled dot-product self-attention over N×C tokens; scale 1/sqrt(C/heads).
AttentionOut self_attention(const Tensor& tokens, const AttentionParams& p,
                            std::size_t heads);

// Queries from `queries` (N×C), keys/values from `context` (k×C).
AttentionOut cross_attention(const Tensor& queries, const Tensor& context,
                             const AttentionParams& p, std::size_t heads);

// score_j = mean over rows of attn[:, j] (attention received). A 1×N or
// plain N-vector input is returned as-is. Detached: selection is discrete.
std::vector<double> saliency_scores(const Tensor& attn);

struct PamConfig {
  bool use_sa1 = true;
  bool use_topk = true;
  bool use_sa2 = true;
  std::size_t heads = 1;
  std::size_t dim = 0;  // C
  void validate() const;
};

struct PamParams {
  AttentionParams sa1;   // present iff use_sa1
  AttentionParams sa2;   // present iff use_sa2
  AttentionParams prop;  // anchor-to-grid propagation stage, always present
  Tensor score_w;        // [C,1], present iff !use_sa1
  Tensor score_b;        // scalar, present iff !use_sa1
  PamParams() = default;
  PamParams(const PamConfig& cfg, Rng& rng);
  void parameters(const PamConfig& cfg,
                  std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix) const;
};

struct AnchorSet {
  std::vector<std::size_t> indices;  // k indices, by (-saliency, index)
  std::vector<double> saliency;      // N selection scores
  Tensor refined;                    // k×C anchor features
};

std::size_t anchor_count(std::size_t n_tokens);  // max(1, floor(0.25·N))

// Pixel Anchor Module forward pass on a C×H×W feature map; preserves shape.
Tensor pam_forward(const Tensor& fm, const PamConfig& cfg,
                   const PamParams& params, AnchorSet* anchors_out = nullptr);

struct PamFlops {
  double projections = 0;     // q/k/v/o linear maps across all stages
  double sa1 = 0;             // pre-Top-k self-attention score+aggregate
  double sa2 = 0;             // anchor self-attention score+aggregate
  double prop_scores = 0;     // N·k·C propagation attention scores
  double prop_aggregate = 0;  // N·k·C propagation value aggregation
  double total() const {
    return projections + sa1 + sa2 + prop_scores + prop_aggregate;
  }
};

// Closed-form multiply-accumulate estimate of one PAM forward pass.
PamFlops pam_flops_estimate(const PamConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w);

}  // namespace akseg

#endif
