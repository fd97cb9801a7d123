#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "sddkit/augment.hpp"
#include "sddkit/eval.hpp"
#include "sddkit/head.hpp"
#include "sddkit/model.hpp"

namespace sddkit {

struct LrStage {
  double lr = 1e-3;
  int epochs = 0;
};

struct TrainConfig {
  int epochs = 80;
  int batch_size = 2;
  double weight_decay = 1e-4;
  // staged learning rates; the defaults pin the boundaries at epochs
  // 1/26/51/66 for an 80-epoch run
  std::vector<LrStage> schedule = {{1e-3, 25}, {1e-4, 25}, {1e-5, 15}, {1e-6, 15}};
  // multi-scale training sizes; one is drawn uniformly per batch. 540/572
  // are rounded to multiples of 32 in this default.
  std::vector<int> sizes = {416, 448, 480, 512, 544, 576, 608};
  uint64_t seed = 0;
  nn::NormMode norm_mode = nn::NormMode::batch_renorm;
  int width_mult = 1;
  double gamma = 2.0;
  double lambda_conf = 1.0, lambda_cls = 1.0, lambda_loc = 1.0;
  double ignore_threshold = 0.5;
  AugmentConfig aug;
  bool augment_enabled = true;
  int eval_every = 5;  // validation cadence in epochs; 0 disables
  double eval_conf_threshold = 0.05;
  double nms_threshold = 0.45;
  int eval_size = 0;  // 0 -> first entry of sizes
  std::string data_root;  // base dir for relative image paths
  std::string out_dir;    // checkpoints; empty writes nothing
};

// Stage durations rescaled proportionally when epochs differs from the
// schedule total; the final stage absorbs rounding.
std::vector<LrStage> scaled_schedule(const TrainConfig& cfg);
double lr_at_epoch(const TrainConfig& cfg, int epoch_1based);

struct EpochLog {
  int epoch = 0;
  double lr = 0, loss = 0, conf = 0, cls = 0, loc = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<std::pair<int, APResult>> validations;
  double final_map50 = -1, final_map75 = -1;
};

enum class InitScheme { xavier, checkpoint_partial, checkpoint_full };

void init_weights(DetectorModel& model, InitScheme scheme, uint64_t seed,
                  const std::string& checkpoint_path = "");

// Runs epochs [first_epoch, last_epoch] of the schedule (1-based, both
// inclusive); multi-phase callers keep one global schedule across phases.
// metrics, when given, receives one JSON line per epoch/validation event.
TrainResult train_loop(DetectorModel& model, const AnchorSet& anchors,
                       const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                       std::ostream* metrics = nullptr, int first_epoch = 1,
                       int last_epoch = 0 /* 0 -> cfg.epochs */);

enum class TlMode { none, tl_a, tl_b };

TlMode tl_mode_from_string(const std::string& s);
std::string to_string(TlMode mode);

struct TlReport {
  TlMode mode = TlMode::none;
  int source_epochs = 0, target_epochs = 0;
  std::vector<int> selected_source_categories;  // ids in the source dataset
  TrainResult result;
  double map50 = -1, map75 = -1;
};

// none: train from Xavier. tl_a: restore a donor backbone, fine-tune all
// layers. tl_b: train all layers on the source set (selected to the target's
// category count by scale/aspect closeness, using the target's anchors) for
// the first 3/8 of the schedule, then restore fully and fine-tune on the
// target for the remainder.
TlReport tl_harness(const Dataset& target_train, const Dataset* target_val,
                    const Dataset* source, const std::string& donor_checkpoint,
                    TlMode mode, const TrainConfig& cfg, DetectorModel* out_model,
                    AnchorSet* out_anchors, std::ostream* metrics = nullptr);

// Checkpoint meta payload used by the train/predict CLI round trip.
std::string train_meta_json(const AnchorSet& anchors,
                            const std::vector<std::string>& categories,
                            const TrainConfig& cfg);
void parse_train_meta(const std::string& meta_json, AnchorSet* anchors,
                      std::vector<std::string>* categories, int* eval_size);

}  // namespace sddkit
