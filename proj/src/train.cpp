#include "akseg/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "akseg/config.hpp"
#include "akseg/rng.hpp"

namespace akseg {

void adam_init(AdamState& state,
               const std::vector<std::pair<std::string, Tensor>>& params) {
  state.m.clear();
  state.v.clear();
  state.t = 0;
  for (auto& [name, p] : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state/parameter count mismatch");
  ++state.t;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    auto& g = p.grad();
    if (g.size() != p.size() || state.m[i].size() != p.size())
      throw ShapeError("adam_step: gradient shape mismatch for '" +
                       params[i].first + "'");
    for (std::size_t j = 0; j < p.size(); ++j) {
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g[j];
      state.v[i][j] =
          cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
      double mhat = state.m[i][j] / bc1;
      double vhat = state.v[i][j] / bc2;
      p.at(j) -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  bool frozen = lr_min == 0.0 && lr_max == 0.0;  // diagnostic no-op schedule
  if (!frozen && !(lr_min > 0.0 && lr_min <= lr_max))
    throw ValueError("TrainConfig: need 0 < lr_min <= lr_max");
  if (epochs < 1) throw ValueError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
  loss.validate();
}

double cosine_lr(std::size_t t_cur, const TrainConfig& cfg) {
  if (t_cur > cfg.epochs) {
    throw ValueError("cosine_lr: t_cur " + std::to_string(t_cur) +
                     " outside [0," + std::to_string(cfg.epochs) + "]");
  }
  double ratio = static_cast<double>(t_cur) / static_cast<double>(cfg.epochs);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                          (1.0 + std::cos(3.14159265358979323846 * ratio));
}

static Tensor sample_input(const Sample& s) {
  return Tensor::from_data({1, s.h, s.w}, s.image);
}

static Tensor sample_target(const Sample& s) {
  std::vector<double> m(s.mask.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = s.mask.v[i] ? 1.0 : 0.0;
  return onehot_from_mask(Tensor::from_data({s.h, s.w}, std::move(m)));
}

std::vector<MetricsRecord> evaluate(const SegModel& model,
                                    const std::vector<Sample>& samples) {
  std::vector<MetricsRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Mask pred = predict_mask(model.forward(sample_input(s)));
    out.push_back(compute_metrics(pred, s.mask));
  }
  return out;
}

std::string TrainResult::log_csv() const {
  std::string out = "epoch,lr,train_loss,val_iou,val_dice\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.lr, r.train_loss, r.val_iou, r.val_dice);
    out += buf;
  }
  return out;
}

void restore_params(const SegModel& model,
                    const std::vector<std::vector<double>>& snapshot) {
  auto params = model.parameters();
  if (snapshot.size() != params.size())
    throw ShapeError("restore_params: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    if (snapshot[i].size() != p.size())
      throw ShapeError("restore_params: tensor size mismatch for '" +
                       params[i].first + "'");
    std::copy(snapshot[i].begin(), snapshot[i].end(), p.data());
  }
}

TrainResult train(SegModel& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ValueError("train: empty training set");
  auto params = model.parameters();
  AdamState adam;
  adam_init(adam, params);
  TrainResult res;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cosine_lr(epoch, cfg);
    Rng shuffle_rng(hash_combine(cfg.seed, 0xE90C4000ULL + epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      model.zero_grads();
      Tensor batch_loss;
      try {
        // fixed accumulation order: ascending in-batch index
        for (std::size_t i = b0; i < b1; ++i) {
          const Sample& s = train_set[order[i]];
          Tensor loss = total_loss(model.forward(sample_input(s)),
                                   sample_target(s), cfg.loss);
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        batch_loss =
            scalar_mul(batch_loss, 1.0 / static_cast<double>(b1 - b0));
        backward(batch_loss);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(n_batches) + ": " + e.what());
      }
      epoch_loss += batch_loss.item();
      ++n_batches;
      adam_step(params, adam, lr, cfg.adam);
    }
    epoch_loss /= static_cast<double>(n_batches);

    double val_iou = 0.0, val_dice = 0.0;
    if (!val_set.empty()) {
      MetricsRecord agg = macro_average(evaluate(model, val_set));
      val_iou = agg.iou;
      val_dice = agg.dice;
    }
    res.rows.push_back({epoch, lr, epoch_loss, val_iou, val_dice});
    if (val_iou > res.best_val_iou) {
      res.best_val_iou = val_iou;
      res.best_epoch = epoch;
      res.best_params.clear();
      for (auto& [name, p] : params) res.best_params.push_back(p.vec());
    }
  }
  return res;
}

std::vector<AblationRow> ablation_rows() {
  return {
      {"Baseline", false, false, false, false},
      {"Focal Loss (FL)", true, false, false, false},
      {"PAM (SA_1 & Top_k & SA_2)", false, true, true, true},
      {"FL & PAM (SA_1 & Top_k)", true, true, true, false},
      {"FL & PAM (Top_k & SA_2)", true, false, true, true},
      {"Ours (all)", true, true, true, true},
  };
}

std::vector<AblationResult> run_ablation(const std::vector<Sample>& train_set,
                                         const std::vector<Sample>& test_set,
                                         const ModelConfig& base_model,
                                         const TrainConfig& base_train,
                                         const std::vector<AblationRow>& rows,
                                         const std::string& out_dir) {
  std::vector<AblationResult> results;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    ModelConfig mc = base_model;
    mc.use_sa1 = row.use_sa1;
    mc.use_topk = row.use_topk;
    mc.use_sa2 = row.use_sa2;
    TrainConfig tc = base_train;
    tc.loss.use_focal = row.use_focal;
    SegModel model(mc);
    TrainResult tr = train(model, train_set, test_set, tc);
    if (!tr.best_params.empty()) restore_params(model, tr.best_params);
    MetricsRecord agg = macro_average(evaluate(model, test_set));
    results.push_back({row.name, agg.iou, agg.dice, agg.specificity});
    if (!out_dir.empty()) {
      std::string dir = out_dir + "/row" + std::to_string(ri);
      save_checkpoint(model, dir);
      write_text_file(dir + "/train_log.csv", tr.log_csv());
    }
  }
  if (!out_dir.empty())
    write_text_file(out_dir + "/ablation.csv", ablation_csv(results));
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::string out = "name,iou,dice,specificity\n";
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "\"%s\",%.6f,%.6f,%.6f\n", r.name.c_str(),
                  r.iou, r.dice, r.specificity);
    out += buf;
  }
  return out;
}

}  // namespace akseg
