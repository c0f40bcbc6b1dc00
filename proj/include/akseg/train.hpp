#ifndef AKSEG_TRAIN_HPP
#define AKSEG_TRAIN_HPP

#include <string>
#include <vector>

#include "akseg/losses.hpp"
#include "akseg/network.hpp"
#include "akseg/phantom.hpp"

namespace akseg {

// Standard Adam with bias correction.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_init(AdamState& state,
               const std::vector<std::pair<std::string, Tensor>>& params);
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr, const AdamConfig& cfg);

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr_max = 1e-4;
  double lr_min = 1e-5;
  std::size_t epochs = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  LossConfig loss;
  void validate() const;
};

// η_t = η_min + ½(η_max−η_min)(1+cos(π·t_cur/T_max)); t_cur in [0, T_max].
double cosine_lr(std::size_t t_cur, const TrainConfig& cfg);

struct EpochRow {
  std::size_t epoch = 0;
  double lr = 0, train_loss = 0, val_iou = 0, val_dice = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::size_t best_epoch = 0;
  double best_val_iou = -1.0;
  std::vector<std::vector<double>> best_params;  // snapshot at best epoch
  std::string log_csv() const;
};

// Evaluates the model on a sample set; returns per-image metrics.
std::vector<MetricsRecord> evaluate(const SegModel& model,
                                    const std::vector<Sample>& samples);

// Deterministic training loop: seeded shuffling, per-epoch cosine schedule,
// best-val-IoU snapshot retained. NaN aborts with a diagnostic naming the
// epoch/batch/op.
TrainResult train(SegModel& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg);

void restore_params(const SegModel& model,
                    const std::vector<std::vector<double>>& snapshot);

struct AblationRow {
  std::string name;
  bool use_focal = false, use_sa1 = false, use_topk = false, use_sa2 = false;
};

// The six standard ablation configurations.
std::vector<AblationRow> ablation_rows();

struct AblationResult {
  std::string name;
  double iou = 0, dice = 0, specificity = 0;
};

// Trains and evaluates every row with a shared seed; when out_dir is
// nonempty, writes per-row checkpoints and the comparison CSV there.
std::vector<AblationResult> run_ablation(const std::vector<Sample>& train_set,
                                         const std::vector<Sample>& test_set,
                                         const ModelConfig& base_model,
                                         const TrainConfig& base_train,
                                         const std::vector<AblationRow>& rows,
                                         const std::string& out_dir);

std::string ablation_csv(const std::vector<AblationResult>& results);

}  // namespace akseg

#endif
