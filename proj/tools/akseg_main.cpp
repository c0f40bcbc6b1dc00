// akseg — synthetic-phantom lesion segmentation toolkit.
// Subcommands: synth | train | eval | ablate | gradcheck.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "akseg/config.hpp"
#include "akseg/dataset.hpp"
#include "akseg/losses.hpp"
#include "akseg/metrics.hpp"
#include "akseg/network.hpp"
#include "akseg/pgm.hpp"
#include "akseg/phantom.hpp"
#include "akseg/selfcheck.hpp"
#include "akseg/train.hpp"

namespace fs = std::filesystem;
using namespace akseg;

namespace {

constexpr const char* kVersion = "0.1.0";

const char* kConfigSchema =
    "config file schema (one 'key = value' per line, '#' comments):\n"
    "  model: base_channels heads init_seed use_sa1 use_topk use_sa2\n"
    "         kan_intervals kan_degree kan_tmin kan_tmax kan_use_base\n"
    "  train: batch_size lr_max lr_min epochs seed alpha gamma use_focal\n"
    "  split: val_groups (train), test_groups (ablate)\n";

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig mc;
  mc.base_channels = static_cast<std::size_t>(kv_int(kv, "base_channels", 8));
  mc.heads = static_cast<std::size_t>(kv_int(kv, "heads", 1));
  mc.init_seed = static_cast<std::uint64_t>(kv_int(kv, "init_seed", 0));
  mc.use_sa1 = kv_bool(kv, "use_sa1", true);
  mc.use_topk = kv_bool(kv, "use_topk", true);
  mc.use_sa2 = kv_bool(kv, "use_sa2", true);
  mc.kan.intervals = static_cast<std::size_t>(kv_int(kv, "kan_intervals", 5));
  mc.kan.degree = static_cast<std::size_t>(kv_int(kv, "kan_degree", 3));
  mc.kan.t_min = kv_double(kv, "kan_tmin", -1.0);
  mc.kan.t_max = kv_double(kv, "kan_tmax", 1.0);
  mc.kan.use_base = kv_bool(kv, "kan_use_base", true);
  return mc;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig tc;
  tc.batch_size = static_cast<std::size_t>(kv_int(kv, "batch_size", 16));
  tc.lr_max = kv_double(kv, "lr_max", 1e-4);
  tc.lr_min = kv_double(kv, "lr_min", 1e-5);
  tc.epochs = static_cast<std::size_t>(kv_int(kv, "epochs", 200));
  tc.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", 0));
  tc.loss.alpha = kv_double(kv, "alpha", 0.25);
  tc.loss.gamma = kv_double(kv, "gamma", 2.0);
  tc.loss.use_focal = kv_bool(kv, "use_focal", true);
  return tc;
}

// Every run drops a reproducibility record into its output directory.
void write_run_info(const std::string& out_dir, const std::string& command,
                    std::uint64_t seed, std::uint64_t config_hash) {
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  std::string text;
  text += "version = " + std::string(kVersion) + "\n";
  text += "command = " + command + "\n";
  text += "seed = " + std::to_string(seed) + "\n";
  text += "config_hash = " + std::string(hash_hex) + "\n";
  write_text_file(out_dir + "/run_info.txt", text);
}

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return buf;
}

int cmd_synth(const std::string& spec_path, const std::string& out,
              std::size_t count, std::int64_t seed_flag) {
  PhantomSpec spec;
  if (!spec_path.empty()) spec = phantom_spec_from_file(spec_path);
  if (seed_flag >= 0) spec.seed = static_cast<std::uint64_t>(seed_flag);
  spec.validate();

  fs::create_directories(out);
  std::vector<Sample> samples = generate(spec, count);
  std::vector<std::string> images, masks;
  std::vector<std::size_t> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string img = out + "/img" + sample_name(i) + ".pgm";
    std::string msk = out + "/msk" + sample_name(i) + ".pgm";
    write_pgm(samples[i].image, samples[i].h, samples[i].w, img);
    write_mask(samples[i].mask, msk);
    images.push_back(img);
    masks.push_back(msk);
    groups.push_back(i / 20);  // ~20 cases per group, split granularity
  }
  write_manifest(out + "/manifest.txt", images, masks, groups);
  write_text_file(out + "/spec.txt", phantom_spec_to_text(spec));
  write_run_info(out, "synth", spec.seed,
                 fnv1a(phantom_spec_to_text(spec)));
  std::cout << "wrote " << count << " image/mask pairs to " << out << "\n";
  return 0;
}

// Highest group id is held out for validation; everything else trains.
void split_by_group(const std::vector<ManifestEntry>& entries,
                    std::size_t holdout_groups,
                    std::vector<ManifestEntry>& lo,
                    std::vector<ManifestEntry>& hi) {
  std::size_t max_g = 0;
  for (const auto& e : entries) max_g = std::max(max_g, e.group);
  std::size_t cut = max_g + 1 >= holdout_groups ? max_g + 1 - holdout_groups : 0;
  for (const auto& e : entries)
    (e.group >= cut ? hi : lo).push_back(e);
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
  KeyValues kv = read_key_values_file(config_path);
  ModelConfig mc = model_config_from(kv);
  TrainConfig tc = train_config_from(kv);
  tc.validate();
  std::size_t val_groups =
      static_cast<std::size_t>(kv_int(kv, "val_groups", 1));

  std::vector<ManifestEntry> entries = read_manifest(data);
  std::vector<ManifestEntry> train_e, val_e;
  split_by_group(entries, val_groups, train_e, val_e);
  if (train_e.empty() || val_e.empty()) {
    // too few groups to hold one out: validate on the training set
    train_e = entries;
    val_e = entries;
  }
  std::vector<Sample> train_set = load_samples(train_e);
  std::vector<Sample> val_set = load_samples(val_e);

  fs::create_directories(out);
  SegModel model(mc);
  TrainResult res = train(model, train_set, val_set, tc);
  write_text_file(out + "/train_log.csv", res.log_csv());
  restore_params(model, res.best_params);
  save_checkpoint(model, out + "/checkpoint");
  write_run_info(out, "train", tc.seed, mc.config_hash());
  std::cout << "trained " << tc.epochs << " epochs on " << train_set.size()
            << " samples; best val IoU " << fmt("%.2f", res.best_val_iou)
            << " at epoch " << res.best_epoch << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& out) {
  ModelConfig mc = read_checkpoint_config(ckpt);
  SegModel model(mc);
  load_checkpoint(model, ckpt);

  std::vector<ManifestEntry> entries = read_manifest(data);
  std::vector<Sample> samples = load_samples(entries);

  fs::create_directories(out);
  std::string csv = metrics_csv_header();
  std::vector<MetricsRecord> records;
  for (const Sample& s : samples) {
    Tensor img = Tensor::from_data({1, s.h, s.w}, s.image);
    Mask pred = predict_mask(model.forward(img));
    write_mask(pred, out + "/pred" + s.id + ".pgm");
    MetricsRecord r = compute_metrics(pred, s.mask);
    records.push_back(r);
    csv += metrics_csv_row(s.id, r);
  }
  MetricsRecord agg = macro_average(records);
  csv += metrics_csv_row("aggregate", agg);
  write_text_file(out + "/metrics.csv", csv);
  write_run_info(out, "eval", 0, mc.config_hash());
  std::cout << "evaluated " << samples.size() << " images: IoU "
            << fmt("%.2f", agg.iou) << ", Dice " << fmt("%.2f", agg.dice)
            << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data,
               const std::string& out) {
  KeyValues kv = read_key_values_file(config_path);
  ModelConfig mc = model_config_from(kv);
  TrainConfig tc = train_config_from(kv);
  tc.validate();
  std::size_t test_groups =
      static_cast<std::size_t>(kv_int(kv, "test_groups", 2));

  std::vector<ManifestEntry> entries = read_manifest(data);
  std::vector<ManifestEntry> train_e, test_e;
  split_by_group(entries, test_groups, train_e, test_e);
  if (train_e.empty() || test_e.empty())
    throw ValueError("ablate: need both training and test groups");
  std::vector<Sample> train_set = load_samples(train_e);
  std::vector<Sample> test_set = load_samples(test_e);

  fs::create_directories(out);
  std::vector<AblationResult> results =
      run_ablation(train_set, test_set, mc, tc, ablation_rows(), out);
  write_run_info(out, "ablate", tc.seed, mc.config_hash());
  for (const AblationResult& r : results)
    std::cout << r.name << ": IoU " << fmt("%.2f", r.iou) << ", Dice "
              << fmt("%.2f", r.dice) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& scope, double rtol) {
  bool all_pass = true;
  if (scope == "ops") {
    for (const CheckCase& c : gradcheck_ops(rtol)) {
      std::cout << c.name << ": " << c.report.summary() << "\n";
      all_pass = all_pass && c.report.pass;
    }
  } else {
    CheckCase c = gradcheck_model(rtol);
    std::cout << c.name << ": " << c.report.summary() << "\n";
    all_pass = c.report.pass;
  }
  if (!all_pass) {
    std::cerr << "gradcheck failed at rtol " << rtol << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"akseg: anchor-KAN segmentation on synthetic phantoms"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a phantom dataset");
  std::string sy_spec, sy_out;
  std::size_t sy_count = 0;
  std::int64_t sy_seed = -1;
  synth->add_option("--spec", sy_spec, "phantom spec file (key = value)");
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--count", sy_count, "number of samples")->required();
  synth->add_option("--seed", sy_seed, "override the spec seed");

  auto* train_c = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_data, tr_out;
  train_c->add_option("--config", tr_config, "training config file");
  train_c->add_option("--data", tr_data, "dataset manifest")->required();
  train_c->add_option("--out", tr_out, "output directory")->required();
  train_c->footer(kConfigSchema);

  auto* eval_c = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_out;
  eval_c->add_option("--checkpoint", ev_ckpt, "checkpoint dir")->required();
  eval_c->add_option("--data", ev_data, "dataset manifest")->required();
  eval_c->add_option("--out", ev_out, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  std::string ab_config, ab_data, ab_out;
  ablate->add_option("--config", ab_config, "training config file");
  ablate->add_option("--data", ab_data, "dataset manifest")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->footer(kConfigSchema);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks");
  std::string gc_scope = "ops";
  double gc_rtol = 1e-4;
  gc->add_option("--scope", gc_scope, "ops | model")
      ->check(CLI::IsMember({"ops", "model"}));
  gc->add_option("--rtol", gc_rtol, "relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      if (sy_count == 0) {
        std::cerr << "synth: --count must be positive\n";
        return 1;
      }
      return cmd_synth(sy_spec, sy_out, sy_count, sy_seed);
    }
    if (*train_c) {
      if (tr_config.empty()) {
        std::cerr << "train: --config is required\n" << kConfigSchema;
        return 1;
      }
      return cmd_train(tr_config, tr_data, tr_out);
    }
    if (*eval_c) return cmd_eval(ev_ckpt, ev_data, ev_out);
    if (*ablate) {
      if (ab_config.empty()) {
        std::cerr << "ablate: --config is required\n" << kConfigSchema;
        return 1;
      }
      return cmd_ablate(ab_config, ab_data, ab_out);
    }
    if (*gc) return cmd_gradcheck(gc_scope, gc_rtol);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
