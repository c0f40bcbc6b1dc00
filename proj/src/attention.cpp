#include "akseg/attention.hpp"

#include <cmath>

namespace akseg {

AttentionParams::AttentionParams(std::size_t dim, Rng& rng) {
  double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  auto make = [&]() {
    std::vector<double> w(dim * dim);
    for (auto& v : w) v = rng.uniform(-scale, scale);
    return Tensor::from_data({dim, dim}, std::move(w), true);
  };
  wq = make();
  wk = make();
  wv = make();
  wo = make();
}

void AttentionParams::parameters(
    std::vector<std::pair<std::string, Tensor>>& out,
    const std::string& prefix) const {
  out.emplace_back(prefix + ".wq", wq);
  out.emplace_back(prefix + ".wk", wk);
  out.emplace_back(prefix + ".wv", wv);
  out.emplace_back(prefix + ".wo", wo);
}

static AttentionOut attention_impl(const Tensor& queries,
                                   const Tensor& context,
                                   const AttentionParams& p,
                                   std::size_t heads) {
  std::size_t c = queries.extent(1);
  if (context.extent(1) != c)
    throw ShapeError("attention: query/context dim mismatch");
  if (heads == 0 || c % heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(c) +
                     " not divisible by heads " + std::to_string(heads));
  }
  std::size_t hd = c / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor q = matmul(queries, p.wq);
  Tensor k = matmul(context, p.wk);
  Tensor v = matmul(context, p.wv);

  std::vector<Tensor> head_outs;
  Tensor attn_avg;
  for (std::size_t hh = 0; hh < heads; ++hh) {
    Tensor qh = heads == 1 ? q : slice_cols(q, hh * hd, (hh + 1) * hd);
    Tensor kh = heads == 1 ? k : slice_cols(k, hh * hd, (hh + 1) * hd);
    Tensor vh = heads == 1 ? v : slice_cols(v, hh * hd, (hh + 1) * hd);
    Tensor scores = scalar_mul(matmul(qh, transpose2d(kh)), scale);
    Tensor attn = softmax(scores, 1);
    head_outs.push_back(matmul(attn, vh));
    attn_avg = attn_avg.defined() ? add(attn_avg, attn) : attn;
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  AttentionOut res;
  res.out = matmul(merged, p.wo);
  res.attn = heads == 1 ? attn_avg
                        : scalar_mul(attn_avg, 1.0 / static_cast<double>(heads));
  return res;
}

AttentionOut self_attention(const Tensor& tokens, const AttentionParams& p,
                            std::size_t heads) {
  return attention_impl(tokens, tokens, p, heads);
}

AttentionOut cross_attention(const Tensor& queries, const Tensor& context,
                             const AttentionParams& p, std::size_t heads) {
  return attention_impl(queries, context, p, heads);
}

std::vector<double> saliency_scores(const Tensor& attn) {
  if (attn.rank() == 1) return attn.vec();
  std::size_t rows = attn.extent(0), n = attn.extent(1);
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) s[j] += attn.at(i, j);
  for (auto& v : s) v /= static_cast<double>(rows);
  return s;
}

void PamConfig::validate() const {
  if (use_sa2 && !use_topk)
    throw ValueError("PamConfig: use_sa2 requires use_topk");
  if (dim == 0) throw ValueError("PamConfig: dim must be set");
  if (heads == 0 || dim % heads != 0)
    throw ValueError("PamConfig: dim must be divisible by heads");
}

PamParams::PamParams(const PamConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.use_sa1) sa1 = AttentionParams(cfg.dim, rng);
  if (cfg.use_sa2) sa2 = AttentionParams(cfg.dim, rng);
  prop = AttentionParams(cfg.dim, rng);
  if (!cfg.use_sa1) {
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::vector<double> w(cfg.dim);
    for (auto& v : w) v = rng.uniform(-scale, scale);
    score_w = Tensor::from_data({cfg.dim, 1}, std::move(w), true);
    score_b = Tensor::scalar(0.0, true);
  }
}

void PamParams::parameters(const PamConfig& cfg,
                           std::vector<std::pair<std::string, Tensor>>& out,
                           const std::string& prefix) const {
  if (cfg.use_sa1) sa1.parameters(out, prefix + ".sa1");
  if (cfg.use_sa2) sa2.parameters(out, prefix + ".sa2");
  prop.parameters(out, prefix + ".prop");
  if (!cfg.use_sa1) {
    out.emplace_back(prefix + ".score_w", score_w);
    out.emplace_back(prefix + ".score_b", score_b);
  }
}

std::size_t anchor_count(std::size_t n_tokens) {
  return std::max<std::size_t>(1, n_tokens / 4);
}

Tensor pam_forward(const Tensor& fm, const PamConfig& cfg,
                   const PamParams& params, AnchorSet* anchors_out) {
  cfg.validate();
  if (fm.rank() != 3) throw ShapeError("pam_forward: expected C×H×W");
  std::size_t h = fm.extent(1), w = fm.extent(2);
  std::size_t n = h * w;

  Tensor tokens = chw_to_tokens(fm);  // N×C

  // Stage 1: central-point scoring. Either a full self-attention pass whose
  // row-stochastic map provides the scores, or a lightweight per-token
  // projection softmaxed over all tokens.
  std::vector<double> saliency;
  if (cfg.use_sa1) {
    AttentionOut sa = self_attention(tokens, params.sa1, cfg.heads);
    tokens = sa.out;
    saliency = saliency_scores(Tensor(sa.attn).detach());
  } else {
    Tensor logits = add(matmul(tokens, params.score_w), params.score_b);
    Tensor a = softmax(reshape(logits, {n}), 0);
    saliency = saliency_scores(a.detach());
  }

  // Stage 2: hard Top-k anchor selection (discrete, no gradient through
  // the choice, only through gathered values).
  Tensor anchors = tokens;
  std::vector<std::size_t> indices;
  if (cfg.use_topk) {
    std::size_t k = anchor_count(n);
    indices = topk_indices(Tensor::from_data({n}, saliency), k);
    anchors = gather_rows(tokens, indices);
  }

  // Stage 3: anchor refinement.
  if (cfg.use_sa2) {
    anchors = self_attention(anchors, params.sa2, cfg.heads).out;
  }

  if (anchors_out) {
    anchors_out->indices = indices;
    anchors_out->saliency = saliency;
    anchors_out->refined = anchors;
  }

  // Stage 4: propagate anchor features to every token (cross-attention with
  // all tokens as queries), then residual to the block input.
  Tensor prop = cross_attention(tokens, anchors, params.prop, cfg.heads).out;
  return add(fm, tokens_to_chw(prop, h, w));
}

PamFlops pam_flops_estimate(const PamConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w) {
  double N = static_cast<double>(h * w);
  double C = static_cast<double>(c);
  double k = cfg.use_topk ? static_cast<double>(anchor_count(h * w)) : N;
  PamFlops f;
  if (cfg.use_sa1) {
    f.projections += 4.0 * N * C * C;  // q,k,v,o
    f.sa1 = 2.0 * N * N * C;           // scores + aggregation
  } else {
    f.projections += N * C;  // score projection
  }
  if (cfg.use_sa2) {
    f.projections += 4.0 * k * C * C;
    f.sa2 = 2.0 * k * k * C;
  }
  // propagation: queries over N tokens, keys/values over k anchors
  f.projections += N * C * C + 2.0 * k * C * C + N * C * C;
  f.prop_scores = N * k * C;
  f.prop_aggregate = N * k * C;
  return f;
}

}  // namespace akseg
