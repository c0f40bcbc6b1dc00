#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "akseg/network.hpp"
#include "akseg/rng.hpp"

using namespace akseg;

namespace {

Tensor rand_image(std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> d(h * w);
  for (double& v : d) v = rng.uniform(0.0, 1.0);
  return Tensor::from_data({1, h, w}, std::move(d));
}

std::size_t param_scalars(const SegModel& m) {
  std::size_t n = 0;
  for (auto& [name, p] : m.parameters()) n += p.size();
  return n;
}

}  // namespace

TEST_CASE("forward preserves spatial extents for H=W in {16,32,64}") {
  ModelConfig mc;
  mc.base_channels = 4;
  for (std::size_t s : {16u, 32u, 64u}) {
    SegModel model(mc);
    Rng rng(s);
    Tensor logits = model.forward(rand_image(s, s, rng));
    CHECK(logits.shape() == Shape{2, s, s});
  }
}

TEST_CASE("input extents must be divisible by 8") {
  ModelConfig mc;
  mc.base_channels = 4;
  SegModel model(mc);
  Rng rng(1);
  CHECK_THROWS_AS(model.forward(rand_image(20, 16, rng)), ShapeError);
  CHECK_THROWS_AS(model.forward(Tensor({2, 16, 16}, 0.0)), ShapeError);
}

TEST_CASE("anchor-KAN block with zeroed value paths is the identity") {
  // kan coefficients, dwconv weights and attention output projections all
  // start at zero, so a freshly initialized block must pass features through.
  ModelConfig mc;
  mc.base_channels = 4;
  SegModel model(mc);
  AnchorKanBlock& blk = model.blocks[0];
  auto clear = [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 0.0;
  };
  clear(blk.kan.coeffs);
  clear(blk.kan.base_weights);
  clear(blk.dw_w);
  clear(blk.pam.prop.wo);
  Rng rng(3);
  std::vector<double> d(mc.base_channels * 8 * 2 * 2);
  for (double& v : d) v = rng.uniform(-1.0, 1.0);
  Tensor fm = Tensor::from_data({mc.base_channels * 8, 2, 2}, d);
  Tensor out = blk.forward(fm);
  REQUIRE(out.shape() == fm.shape());
  for (std::size_t i = 0; i < fm.size(); ++i)
    CHECK(std::fabs(out.at(i) - fm.at(i)) <= 1e-12);
}

TEST_CASE("closed-form parameter count for C=8") {
  ModelConfig mc;  // base_channels 8, heads 1, kan G=5 d=3 (8 basis fns)
  SegModel model(mc);
  auto conv_stage = [](std::size_t cin, std::size_t cout) {
    return cout * cin * 9 + cout   // conv1 + bias
         + cout + cout             // ln gamma/beta
         + cout * cout * 9 + cout  // conv2 + bias
         + cout + cout;
  };
  std::size_t C = 8, c8 = 8 * C, nb = 5 + 3;
  std::size_t enc = conv_stage(1, C) + conv_stage(C, 2 * C) +
                    conv_stage(2 * C, 4 * C) + conv_stage(4 * C, 8 * C);
  std::size_t attn = 4 * c8 * c8;  // wq wk wv wo
  std::size_t block = c8 * c8 + c8        // tok 1x1 conv
                    + c8 + c8             // ln1
                    + c8 * c8 * nb + c8 * c8  // kan coeffs + base weights
                    + c8 * 9 + c8         // dw 3x3
                    + c8 + c8             // ln2
                    + 3 * attn;           // sa1, sa2, prop
  auto dec_stage = [&](std::size_t cin, std::size_t cout) {
    return cout * cin * 9 + cout   // conv after upsample
         + cout + cout             // ln
         + cout * (2 * cout) + cout;  // 1x1 fuse after skip concat
  };
  std::size_t dec = dec_stage(8 * C, 4 * C) + dec_stage(4 * C, 2 * C) +
                    dec_stage(2 * C, C);
  std::size_t head = 2 * C + 2;
  std::size_t expected = enc + 4 * block + dec + head;
  CHECK(param_scalars(model) == expected);
}

TEST_CASE("initialization is deterministic in init_seed") {
  ModelConfig mc;
  mc.base_channels = 4;
  mc.init_seed = 123;
  SegModel a(mc), b(mc);
  auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.vec() == pb[i].second.vec());
  }
  mc.init_seed = 124;
  SegModel c(mc);
  bool any_diff = false;
  auto pc = c.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].second.vec() != pc[i].second.vec()) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("skip connections are live: zeroing one changes the output") {
  ModelConfig mc;
  mc.base_channels = 4;
  mc.init_seed = 9;
  SegModel model(mc);
  Rng rng(10);
  Tensor img = rand_image(16, 16, rng);
  Tensor base = model.forward(img);
  // Cut the first decoder fuse weights that read the skip half of the
  // concatenation; if skips were dead this would not move the logits.
  std::size_t cout = 4 * mc.base_channels;
  bool changed = false;
  for (std::size_t j = 0; j < cout; ++j)
    for (std::size_t i = cout; i < 2 * cout; ++i)
      model.f3_w.at(j * 2 * cout + i) = 0.0;
  Tensor cut = model.forward(img);
  for (std::size_t i = 0; i < base.size(); ++i)
    if (std::fabs(cut.at(i) - base.at(i)) > 1e-12) changed = true;
  CHECK(changed);
}

TEST_CASE("predict_mask argmax with ties to background") {
  Tensor logits = Tensor::from_data(
      {2, 2, 2}, {0.5, 1.0, -1.0, 2.0,    // class 0
                  0.5, 2.0, -0.5, 1.0});  // class 1
  Mask m = predict_mask(logits);
  CHECK(m.at(0, 0) == 0);  // tie -> background
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(1, 0) == 1);
  CHECK(m.at(1, 1) == 0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  ModelConfig mc;
  mc.base_channels = 4;
  mc.init_seed = 77;
  SegModel model(mc);
  std::string dir = (fs::temp_directory_path() / "akseg_ckpt_test").string();
  save_checkpoint(model, dir);

  SegModel loaded(read_checkpoint_config(dir));
  // scramble, then load
  for (auto& [name, p] : loaded.parameters())
    for (std::size_t i = 0; i < p.size(); ++i) p.at(i) = -1.5;
  load_checkpoint(loaded, dir);

  auto pa = model.parameters(), pb = loaded.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].second.vec() == pb[i].second.vec());

  // saving the loaded model reproduces the manifest byte for byte
  CHECK(checkpoint_manifest_text(model) == checkpoint_manifest_text(loaded));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint load rejects a mismatched architecture") {
  namespace fs = std::filesystem;
  ModelConfig mc;
  mc.base_channels = 4;
  SegModel model(mc);
  std::string dir = (fs::temp_directory_path() / "akseg_ckpt_bad").string();
  save_checkpoint(model, dir);
  ModelConfig other = mc;
  other.base_channels = 8;
  SegModel big(other);
  CHECK_THROWS_AS(load_checkpoint(big, dir), Error);
  fs::remove_all(dir);
}

TEST_CASE("config canonical text distinguishes every flag") {
  ModelConfig a;
  ModelConfig b = a;
  b.use_topk = false;
  ModelConfig c = a;
  c.kan.intervals = 7;
  CHECK(a.config_hash() != b.config_hash());
  CHECK(a.config_hash() != c.config_hash());
  CHECK(a.config_hash() == ModelConfig{}.config_hash());
}
