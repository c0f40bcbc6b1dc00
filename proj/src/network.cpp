#include "akseg/network.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "akseg/config.hpp"

namespace akseg {

namespace {
constexpr double kLnEps = 1e-5;

Tensor conv_weight(std::size_t co, std::size_t ci, std::size_t k, Rng& rng) {
  double scale = 1.0 / std::sqrt(static_cast<double>(ci * k * k));
  std::vector<double> w(co * ci * k * k);
  for (auto& v : w) v = rng.uniform(-scale, scale);
  return Tensor::from_data({co, ci, k, k}, std::move(w), true);
}

// layer norm over the channel axis of a C×H×W map (token-wise)
Tensor norm_chw(const Tensor& x, const Tensor& g, const Tensor& b) {
  std::size_t h = x.extent(1), w = x.extent(2);
  return tokens_to_chw(layer_norm(chw_to_tokens(x), g, b, kLnEps), h, w);
}
}  // namespace

std::string ModelConfig::canonical() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "base_channels=%zu;n_classes=%zu;heads=%zu;"
                "kan_grid=%zu;kan_degree=%zu;kan_tmin=%.17g;kan_tmax=%.17g;"
                "kan_base=%d;use_sa1=%d;use_topk=%d;use_sa2=%d;init_seed=%"
                PRIu64,
                base_channels, n_classes, heads, kan.intervals, kan.degree,
                kan.t_min, kan.t_max, kan.use_base ? 1 : 0, use_sa1 ? 1 : 0,
                use_topk ? 1 : 0, use_sa2 ? 1 : 0, init_seed);
  return std::string(buf);
}

std::uint64_t ModelConfig::config_hash() const { return fnv1a(canonical()); }

ConvStage::ConvStage(std::size_t cin, std::size_t cout, Rng& rng) {
  w1 = conv_weight(cout, cin, 3, rng);
  b1 = Tensor({cout}, 0.0, true);
  g1 = Tensor({cout}, 1.0, true);
  be1 = Tensor({cout}, 0.0, true);
  w2 = conv_weight(cout, cout, 3, rng);
  b2 = Tensor({cout}, 0.0, true);
  g2 = Tensor({cout}, 1.0, true);
  be2 = Tensor({cout}, 0.0, true);
}

Tensor ConvStage::forward(const Tensor& x) const {
  Tensor h = relu(norm_chw(conv2d(x, w1, b1, 1, 1), g1, be1));
  return relu(norm_chw(conv2d(h, w2, b2, 1, 1), g2, be2));
}

void ConvStage::parameters(std::vector<std::pair<std::string, Tensor>>& out,
                           const std::string& prefix) const {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".g1", g1);
  out.emplace_back(prefix + ".be1", be1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
  out.emplace_back(prefix + ".g2", g2);
  out.emplace_back(prefix + ".be2", be2);
}

AnchorKanBlock::AnchorKanBlock(std::size_t c, const KanGridConfig& kan_cfg,
                               const PamConfig& pcfg, Rng& rng)
    : channels(c), pam_cfg(pcfg) {
  tok_w = conv_weight(c, c, 1, rng);
  tok_b = Tensor({c}, 0.0, true);
  ln1_g = Tensor({c}, 1.0, true);
  ln1_b = Tensor({c}, 0.0, true);
  kan = KanLayer(c, c, kan_cfg, rng);
  double dscale = 1.0 / 3.0;
  std::vector<double> dw(c * 9);
  for (auto& v : dw) v = rng.uniform(-dscale, dscale);
  dw_w = Tensor::from_data({c, 3, 3}, std::move(dw), true);
  dw_b = Tensor({c}, 0.0, true);
  ln2_g = Tensor({c}, 1.0, true);
  ln2_b = Tensor({c}, 0.0, true);
  pam_cfg.dim = c;
  pam = PamParams(pam_cfg, rng);
}

Tensor AnchorKanBlock::forward(const Tensor& fm, AnchorSet* anchors) const {
  if (fm.extent(0) != channels) {
    throw ShapeError("AnchorKanBlock: expected " + std::to_string(channels) +
                     " channels, got " + std::to_string(fm.extent(0)));
  }
  std::size_t h = fm.extent(1), w = fm.extent(2);
  Tensor t = conv2d(fm, tok_w, tok_b, 1, 0);          // tokenize
  Tensor tokens = layer_norm(chw_to_tokens(t), ln1_g, ln1_b, kLnEps);
  tokens = kan_layer_forward(kan, tokens);            // per-token KAN
  Tensor z = dwconv2d(tokens_to_chw(tokens, h, w), dw_w, dw_b, 1);
  z = norm_chw(z, ln2_g, ln2_b);
  z = pam_forward(z, pam_cfg, pam, anchors);
  return add(fm, z);
}

void AnchorKanBlock::parameters(
    std::vector<std::pair<std::string, Tensor>>& out,
    const std::string& prefix) const {
  out.emplace_back(prefix + ".tok_w", tok_w);
  out.emplace_back(prefix + ".tok_b", tok_b);
  out.emplace_back(prefix + ".ln1_g", ln1_g);
  out.emplace_back(prefix + ".ln1_b", ln1_b);
  kan.parameters(out, prefix + ".kan");
  out.emplace_back(prefix + ".dw_w", dw_w);
  out.emplace_back(prefix + ".dw_b", dw_b);
  out.emplace_back(prefix + ".ln2_g", ln2_g);
  out.emplace_back(prefix + ".ln2_b", ln2_b);
  pam.parameters(pam_cfg, out, prefix + ".pam");
}

SegModel::SegModel(const ModelConfig& c) : cfg(c) {
  Rng rng(cfg.init_seed);
  std::size_t C = cfg.base_channels;
  enc1 = ConvStage(1, C, rng);
  enc2 = ConvStage(C, 2 * C, rng);
  enc3 = ConvStage(2 * C, 4 * C, rng);
  bott = ConvStage(4 * C, 8 * C, rng);
  PamConfig pcfg;
  pcfg.use_sa1 = cfg.use_sa1;
  pcfg.use_topk = cfg.use_topk;
  pcfg.use_sa2 = cfg.use_sa2;
  pcfg.heads = cfg.heads;
  pcfg.dim = 8 * C;
  for (int i = 0; i < 4; ++i)
    blocks.emplace_back(8 * C, cfg.kan, pcfg, rng);
  auto dec = [&](std::size_t cin, std::size_t cout, Tensor& w, Tensor& b,
                 Tensor& g, Tensor& be, Tensor& fw, Tensor& fb) {
    w = conv_weight(cout, cin, 3, rng);
    b = Tensor({cout}, 0.0, true);
    g = Tensor({cout}, 1.0, true);
    be = Tensor({cout}, 0.0, true);
    fw = conv_weight(cout, 2 * cout, 1, rng);
    fb = Tensor({cout}, 0.0, true);
  };
  dec(8 * C, 4 * C, d3_w, d3_b, d3_g, d3_be, f3_w, f3_b);
  dec(4 * C, 2 * C, d2_w, d2_b, d2_g, d2_be, f2_w, f2_b);
  dec(2 * C, C, d1_w, d1_b, d1_g, d1_be, f1_w, f1_b);
  head_w = conv_weight(cfg.n_classes, C, 1, rng);
  head_b = Tensor({cfg.n_classes}, 0.0, true);
}

Tensor SegModel::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.extent(0) != 1)
    throw ShapeError("SegModel: expected 1×H×W input, got " +
                     shape_str(image.shape()));
  std::size_t h = image.extent(1), w = image.extent(2);
  if (h % 8 != 0 || w % 8 != 0) {
    throw ShapeError("SegModel: spatial size " + std::to_string(h) + "x" +
                     std::to_string(w) + " not divisible by 8 (3 stages)");
  }
  Tensor e1 = enc1.forward(image);
  Tensor e2 = enc2.forward(maxpool2x2(e1));
  Tensor e3 = enc3.forward(maxpool2x2(e2));
  Tensor b = bott.forward(maxpool2x2(e3));
  for (const auto& blk : blocks) b = blk.forward(b);

  auto up = [&](const Tensor& x, const Tensor& skip, const Tensor& cw,
                const Tensor& cb, const Tensor& g, const Tensor& be,
                const Tensor& fw, const Tensor& fb) {
    Tensor u = relu(norm_chw(
        conv2d(upsample_nearest2x(x), cw, cb, 1, 1), g, be));
    return relu(conv2d(concat_channels(u, skip), fw, fb, 1, 0));
  };
  Tensor d3 = up(b, e3, d3_w, d3_b, d3_g, d3_be, f3_w, f3_b);
  Tensor d2 = up(d3, e2, d2_w, d2_b, d2_g, d2_be, f2_w, f2_b);
  Tensor d1 = up(d2, e1, d1_w, d1_b, d1_g, d1_be, f1_w, f1_b);
  return conv2d(d1, head_w, head_b, 1, 0);
}

std::vector<std::pair<std::string, Tensor>> SegModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  enc1.parameters(out, "enc1");
  enc2.parameters(out, "enc2");
  enc3.parameters(out, "enc3");
  bott.parameters(out, "bott");
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].parameters(out, "block" + std::to_string(i));
  auto add_dec = [&](const std::string& p, const Tensor& w, const Tensor& b,
                     const Tensor& g, const Tensor& be, const Tensor& fw,
                     const Tensor& fb) {
    out.emplace_back(p + ".w", w);
    out.emplace_back(p + ".b", b);
    out.emplace_back(p + ".g", g);
    out.emplace_back(p + ".be", be);
    out.emplace_back(p + ".fw", fw);
    out.emplace_back(p + ".fb", fb);
  };
  add_dec("dec3", d3_w, d3_b, d3_g, d3_be, f3_w, f3_b);
  add_dec("dec2", d2_w, d2_b, d2_g, d2_be, f2_w, f2_b);
  add_dec("dec1", d1_w, d1_b, d1_g, d1_be, f1_w, f1_b);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

void SegModel::zero_grads() const {
  for (auto& [name, p] : parameters()) Tensor(p).zero_grad();
}

Mask predict_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.extent(0) != 2)
    throw ShapeError("predict_mask: expected 2×H×W logits");
  std::size_t h = logits.extent(1), w = logits.extent(2), hw = h * w;
  Mask m(h, w);
  for (std::size_t i = 0; i < hw; ++i)
    m.v[i] = logits.at(hw + i) > logits.at(i) ? 1 : 0;
  return m;
}

static std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

std::string checkpoint_manifest_text(const SegModel& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = {
      {"base_channels", m.cfg.base_channels},
      {"n_classes", m.cfg.n_classes},
      {"heads", m.cfg.heads},
      {"kan_grid", m.cfg.kan.intervals},
      {"kan_degree", m.cfg.kan.degree},
      {"kan_tmin", m.cfg.kan.t_min},
      {"kan_tmax", m.cfg.kan.t_max},
      {"kan_base", m.cfg.kan.use_base},
      {"use_sa1", m.cfg.use_sa1},
      {"use_topk", m.cfg.use_topk},
      {"use_sa2", m.cfg.use_sa2},
      {"init_seed", m.cfg.init_seed},
  };
  j["config_hash"] = hash_hex(m.cfg.config_hash());
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  auto params = m.parameters();
  for (auto& [name, p] : params) {
    tensors.push_back({{"name", name},
                       {"shape", p.shape()},
                       {"dtype", "f64"},
                       {"offset", offset}});
    offset += p.size() * sizeof(double);
  }
  j["tensors"] = tensors;
  j["param_count"] = params.size();
  j["total_bytes"] = offset;
  // Hash of the trained values, not just the structure: checkpoints of
  // structurally identical models trained differently stay distinguishable.
  std::string bytes;
  bytes.reserve(offset);
  for (auto& [name, p] : params)
    bytes.append(reinterpret_cast<const char*>(p.data()),
                 p.size() * sizeof(double));
  j["params_hash"] = hash_hex(fnv1a(bytes));
  return j.dump(2) + "\n";
}

void save_checkpoint(const SegModel& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/manifest.json", checkpoint_manifest_text(m));
  std::ofstream blob(dir + "/params.bin", std::ios::binary);
  if (!blob) throw IoError("cannot write checkpoint blob in " + dir);
  for (auto& [name, p] : m.parameters()) {
    blob.write(reinterpret_cast<const char*>(p.data()),
               static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!blob) throw IoError("checkpoint blob write failed in " + dir);
}

static nlohmann::json read_manifest(const std::string& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest in " + dir + ": " + e.what());
  }
  if (!j.contains("tensors") || !j.contains("config"))
    throw IoError("corrupt checkpoint manifest in " + dir +
                  ": missing tensors/config");
  return j;
}

ModelConfig read_checkpoint_config(const std::string& dir) {
  nlohmann::json j = read_manifest(dir);
  const auto& c = j["config"];
  ModelConfig cfg;
  cfg.base_channels = c.at("base_channels").get<std::size_t>();
  cfg.n_classes = c.at("n_classes").get<std::size_t>();
  cfg.heads = c.at("heads").get<std::size_t>();
  cfg.kan.intervals = c.at("kan_grid").get<std::size_t>();
  cfg.kan.degree = c.at("kan_degree").get<std::size_t>();
  cfg.kan.t_min = c.at("kan_tmin").get<double>();
  cfg.kan.t_max = c.at("kan_tmax").get<double>();
  cfg.kan.use_base = c.at("kan_base").get<bool>();
  cfg.use_sa1 = c.at("use_sa1").get<bool>();
  cfg.use_topk = c.at("use_topk").get<bool>();
  cfg.use_sa2 = c.at("use_sa2").get<bool>();
  cfg.init_seed = c.at("init_seed").get<std::uint64_t>();
  return cfg;
}

void load_checkpoint(SegModel& m, const std::string& dir) {
  nlohmann::json j = read_manifest(dir);
  auto params = m.parameters();
  const auto& tensors = j["tensors"];
  if (tensors.size() != params.size()) {
    throw IoError("checkpoint tensor count " + std::to_string(tensors.size()) +
                  " != model parameter count " +
                  std::to_string(params.size()));
  }
  std::ifstream blob(dir + "/params.bin", std::ios::binary);
  if (!blob) throw IoError("cannot read checkpoint blob in " + dir);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    std::string name = t.at("name").get<std::string>();
    Shape shape = t.at("shape").get<Shape>();
    if (name != params[i].first) {
      throw IoError("checkpoint tensor '" + name + "' does not match model "
                    "parameter '" + params[i].first + "'");
    }
    if (shape != params[i].second.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " +
                    shape_str(shape) + " but model expects " +
                    shape_str(params[i].second.shape()));
    }
    Tensor p = params[i].second;
    blob.read(reinterpret_cast<char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!blob) throw IoError("checkpoint blob truncated at tensor '" + name +
                             "'");
  }
}

}  // namespace akseg
