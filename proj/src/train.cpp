#include "sddkit/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "sddkit/common.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace sddkit {

std::vector<LrStage> scaled_schedule(const TrainConfig& cfg) {
  require(!cfg.schedule.empty() && cfg.epochs >= 1, "train: empty schedule");
  int total = 0;
  for (const auto& s : cfg.schedule) total += s.epochs;
  require(total > 0, "train: schedule durations must be positive");
  if (total == cfg.epochs) return cfg.schedule;

  std::vector<LrStage> out = cfg.schedule;
  int acc_src = 0, acc_dst = 0;
  for (size_t i = 0; i + 1 < out.size(); ++i) {
    acc_src += cfg.schedule[i].epochs;
    const int boundary = static_cast<int>(std::lround(
        static_cast<double>(acc_src) / total * cfg.epochs));
    out[i].epochs = std::max(0, boundary - acc_dst);
    acc_dst = boundary;
  }
  out.back().epochs = std::max(0, cfg.epochs - acc_dst);
  return out;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch_1based) {
  require(epoch_1based >= 1 && epoch_1based <= cfg.epochs, "lr: epoch ", epoch_1based,
          " outside schedule of ", cfg.epochs);
  int acc = 0;
  const auto sched = scaled_schedule(cfg);
  for (const auto& s : sched) {
    acc += s.epochs;
    if (epoch_1based <= acc) return s.lr;
  }
  return sched.back().lr;
}

void init_weights(DetectorModel& model, InitScheme scheme, uint64_t seed,
                  const std::string& checkpoint_path) {
  switch (scheme) {
    case InitScheme::xavier:
      xavier_init(model, seed);
      break;
    case InitScheme::checkpoint_partial:
      xavier_init(model, seed);
      restore_from_checkpoint(model, checkpoint_path, /*backbone_only=*/true);
      break;
    case InitScheme::checkpoint_full:
      restore_from_checkpoint(model, checkpoint_path, /*backbone_only=*/false);
      break;
  }
}

namespace {

Tensor batch_to_tensor(const std::vector<Sample>& samples) {
  const int n = static_cast<int>(samples.size());
  const int s = samples[0].raster.width;
  Tensor t({n, s, s, 3});
  size_t at = 0;
  for (const auto& sm : samples) {
    require(sm.raster.width == s && sm.raster.height == s, "batch: mixed sizes");
    for (uint8_t v : sm.raster.data) t[at++] = static_cast<float>(v) / 255.0f;
  }
  return t;
}

void emit(std::ostream* metrics, const json& j) {
  if (metrics) (*metrics) << j.dump() << "\n" << std::flush;
}

APResult validate(DetectorModel& model, const AnchorSet& anchors, const Dataset& val,
                  const TrainConfig& cfg) {
  const int size = cfg.eval_size > 0 ? cfg.eval_size : cfg.sizes.front();
  std::vector<std::vector<Detection>> dets;
  dets.reserve(val.records.size());
  for (const auto& rec : val.records) {
    Raster img = load_raster(rec, cfg.data_root);
    dets.push_back(
        predict(model, img, anchors, size, cfg.eval_conf_threshold, cfg.nms_threshold));
  }
  return mean_ap(dets, val);
}

}  // namespace

TrainResult train_loop(DetectorModel& model, const AnchorSet& anchors,
                       const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                       std::ostream* metrics, int first_epoch, int last_epoch) {
  require(!train.records.empty(), "train: empty dataset");
  require(cfg.batch_size >= 1, "train: batch size must be >= 1");
  for (int s : cfg.sizes)
    if (s % 32 != 0)
      log_warn(detail::cat("training size ", s,
                           " is not divisible by 32; grids use fractional strides"));
  if (last_epoch <= 0) last_epoch = cfg.epochs;

  const auto sched = scaled_schedule(cfg);
  std::vector<int> stage_ends;
  int acc = 0;
  for (const auto& s : sched) {
    acc += s.epochs;
    stage_ends.push_back(acc);
  }

  HeadConfig head_cfg;
  head_cfg.gamma = cfg.gamma;
  head_cfg.lambda_conf = cfg.lambda_conf;
  head_cfg.lambda_cls = cfg.lambda_cls;
  head_cfg.lambda_loc = cfg.lambda_loc;
  head_cfg.ignore_threshold = cfg.ignore_threshold;

  auto params = model.params();
  nn::AdamState adam;
  TrainResult result;
  const std::string ckpt_meta = train_meta_json(anchors, train.categories, cfg);

  const size_t n = train.records.size();
  for (int epoch = first_epoch; epoch <= last_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg, epoch);
    Rng erng(derive_seed(cfg.seed, 0x0e90c000ull + static_cast<uint64_t>(epoch)));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(erng.uniform_int(static_cast<int>(i)))]);

    double sum_total = 0, sum_conf = 0, sum_cls = 0, sum_loc = 0;
    size_t batches = 0;

    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
      const int size = cfg.sizes[static_cast<size_t>(erng.uniform_int(static_cast<int>(cfg.sizes.size())))];

      std::vector<Sample> batch;
      std::vector<std::vector<ObjectLabel>> labels;
      for (size_t k = start; k < end; ++k) {
        const int idx = order[k];
        const auto& rec = train.records[static_cast<size_t>(idx)];
        Sample s{load_raster(rec, cfg.data_root), rec.labels};
        if (cfg.augment_enabled) {
          AugmentConfig aug = cfg.aug;
          aug.target_size = size;
          Rng arng(derive_seed(derive_seed(cfg.seed, 0xa06u + static_cast<uint64_t>(epoch)),
                               static_cast<uint64_t>(idx)));
          s = augment_pipeline(s, aug, arng);
        } else {
          s = letterbox_sample(s, size, cfg.aug.pad_value);
        }
        labels.push_back(s.labels);
        batch.push_back(std::move(s));
      }

      Tensor input = batch_to_tensor(batch);
      auto grids = model.forward(input, nn::Phase::train);
      std::array<GridShape, 3> shapes;
      for (int l = 0; l < 3; ++l)
        shapes[static_cast<size_t>(l)] = {grids[static_cast<size_t>(l)].dim(1),
                                          grids[static_cast<size_t>(l)].dim(2)};
      TargetSet targets =
          build_targets<float>(labels, anchors, size, shapes, cfg.ignore_threshold);

      std::array<Tensor, 3> dgrids;
      const LossBreakdown loss = total_loss(grids, targets, head_cfg, &dgrids);
      if (!std::isfinite(loss.total)) {
        if (!cfg.out_dir.empty()) {
          fs::create_directories(cfg.out_dir);
          save_checkpoint((fs::path(cfg.out_dir) / "diagnostic.ckpt").string(), model,
                          ckpt_meta, epoch);
        }
        fail("train: non-finite loss at epoch ", epoch, " (diagnostic checkpoint ",
             cfg.out_dir.empty() ? "not written" : "written", ")");
      }

      nn::zero_grads(params);
      model.backward(dgrids);
      nn::adam_step(params, adam, lr, 0.9, 0.999, 1e-8, cfg.weight_decay);

      sum_total += loss.total;
      sum_conf += loss.conf;
      sum_cls += loss.cls;
      sum_loc += loss.loc;
      ++batches;
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochLog log{epoch, lr, sum_total / batches, sum_conf / batches, sum_cls / batches,
                 sum_loc / batches, secs};
    result.epochs.push_back(log);
    emit(metrics, json{{"type", "epoch"},
                       {"epoch", epoch},
                       {"lr", lr},
                       {"loss", log.loss},
                       {"conf", log.conf},
                       {"cls", log.cls},
                       {"loc", log.loc},
                       {"seconds", secs}});

    const bool last = epoch == last_epoch;
    if (val && !val->records.empty() && cfg.eval_every > 0 &&
        (epoch % cfg.eval_every == 0 || last)) {
      APResult ap = validate(model, anchors, *val, cfg);
      emit(metrics, json{{"type", "val"},
                         {"epoch", epoch},
                         {"map50", ap.map[0]},
                         {"map75", ap.map[1]}});
      result.final_map50 = ap.map[0];
      result.final_map75 = ap.map[1];
      result.validations.emplace_back(epoch, std::move(ap));
    }

    if (!cfg.out_dir.empty() &&
        (std::find(stage_ends.begin(), stage_ends.end(), epoch) != stage_ends.end() || last)) {
      fs::create_directories(cfg.out_dir);
      const std::string name = last ? "model.ckpt" : detail::cat("stage_", epoch, ".ckpt");
      save_checkpoint((fs::path(cfg.out_dir) / name).string(), model, ckpt_meta, epoch);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

TlMode tl_mode_from_string(const std::string& s) {
  if (s == "none") return TlMode::none;
  if (s == "a") return TlMode::tl_a;
  if (s == "b") return TlMode::tl_b;
  fail("unknown transfer mode \"", s, "\" (known: none, a, b)");
}

std::string to_string(TlMode mode) {
  switch (mode) {
    case TlMode::none: return "none";
    case TlMode::tl_a: return "a";
    default: return "b";
  }
}

TlReport tl_harness(const Dataset& target_train, const Dataset* target_val,
                    const Dataset* source, const std::string& donor_checkpoint,
                    TlMode mode, const TrainConfig& cfg, DetectorModel* out_model,
                    AnchorSet* out_anchors, std::ostream* metrics) {
  TlReport report;
  report.mode = mode;

  ModelConfig mcfg;
  mcfg.num_classes = static_cast<int>(target_train.categories.size());
  mcfg.width_mult = cfg.width_mult;
  mcfg.norm_mode = cfg.norm_mode;

  // anchors always come from the target dataset
  AnchorSet anchors = kmeans_anchors(target_train, 9, cfg.sizes, cfg.seed);

  DetectorModel model = build_toy_detector<float>(mcfg);

  switch (mode) {
    case TlMode::none: {
      init_weights(model, InitScheme::xavier, cfg.seed);
      report.target_epochs = cfg.epochs;
      emit(metrics, json{{"type", "phase"}, {"mode", "none"}, {"phase", "target"},
                         {"epochs", cfg.epochs}});
      report.result = train_loop(model, anchors, target_train, target_val, cfg, metrics);
      break;
    }
    case TlMode::tl_a: {
      require(!donor_checkpoint.empty(), "tl-a: donor backbone checkpoint required");
      init_weights(model, InitScheme::checkpoint_partial, cfg.seed, donor_checkpoint);
      report.target_epochs = cfg.epochs;
      emit(metrics, json{{"type", "phase"}, {"mode", "a"}, {"phase", "target"},
                         {"epochs", cfg.epochs}});
      report.result = train_loop(model, anchors, target_train, target_val, cfg, metrics);
      break;
    }
    case TlMode::tl_b: {
      require(source != nullptr && !source->records.empty(),
              "tl-b: source dataset required");
      // phase split mirrors a 30 + 50 division of an 80-epoch run
      report.source_epochs = std::max(
          1, static_cast<int>(std::lround(cfg.epochs * 30.0 / 80.0)));
      report.target_epochs = cfg.epochs - report.source_epochs;
      require(report.target_epochs >= 1, "tl-b: too few epochs to split");

      // pick the source categories whose scale/aspect distributions sit
      // closest to the target's
      Dataset selected = *source;
      if (source->categories.size() != target_train.categories.size()) {
        const auto ranked =
            rank_source_classes(compute_stats(*source), compute_stats(target_train));
        require(ranked.size() >= target_train.categories.size(),
                "tl-b: source has fewer usable categories than the target");
        std::vector<int> keep;
        for (size_t i = 0; i < target_train.categories.size(); ++i) {
          keep.push_back(ranked[i].first);
          report.selected_source_categories.push_back(ranked[i].first);
        }
        std::sort(keep.begin(), keep.end());
        selected = source->select_categories(keep);
      } else {
        for (size_t i = 0; i < source->categories.size(); ++i)
          report.selected_source_categories.push_back(static_cast<int>(i));
      }

      init_weights(model, InitScheme::xavier, cfg.seed);
      emit(metrics, json{{"type", "phase"}, {"mode", "b"}, {"phase", "source"},
                         {"epochs", report.source_epochs}});
      train_loop(model, anchors, selected, nullptr, cfg, metrics, 1, report.source_epochs);

      // full restore into a fresh model, then fine-tune everything
      const std::string ckpt =
          (fs::path(cfg.out_dir.empty() ? fs::temp_directory_path().string() : cfg.out_dir) /
           "source_pretrain.ckpt").string();
      if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
      save_checkpoint(ckpt, model, train_meta_json(anchors, selected.categories, cfg),
                      report.source_epochs);
      DetectorModel fresh = build_toy_detector<float>(mcfg);
      init_weights(fresh, InitScheme::checkpoint_full, cfg.seed, ckpt);
      model = std::move(fresh);

      emit(metrics, json{{"type", "phase"}, {"mode", "b"}, {"phase", "target"},
                         {"epochs", report.target_epochs}});
      report.result = train_loop(model, anchors, target_train, target_val, cfg, metrics,
                                 report.source_epochs + 1, cfg.epochs);
      break;
    }
  }

  report.map50 = report.result.final_map50;
  report.map75 = report.result.final_map75;
  if (target_val && !target_val->records.empty() && report.map50 < 0) {
    APResult ap = validate(model, anchors, *target_val, cfg);
    report.map50 = ap.map[0];
    report.map75 = ap.map[1];
  }
  if (out_model) *out_model = std::move(model);
  if (out_anchors) *out_anchors = anchors;
  return report;
}

// ---------------------------------------------------------------------------

std::string train_meta_json(const AnchorSet& anchors,
                            const std::vector<std::string>& categories,
                            const TrainConfig& cfg) {
  json j;
  json aw = json::array();
  for (const auto& [w, h] : anchors.anchors) aw.push_back({w, h});
  j["anchors"] = {{"wh", aw}, {"levels", anchors.levels}};
  j["categories"] = categories;
  json sched = json::array();
  for (const auto& s : cfg.schedule) sched.push_back({{"lr", s.lr}, {"epochs", s.epochs}});
  j["train_config"] = {{"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"weight_decay", cfg.weight_decay},
                       {"schedule", sched},
                       {"sizes", cfg.sizes},
                       {"seed", cfg.seed},
                       {"norm", cfg.norm_mode == nn::NormMode::batch_renorm ? "br" : "bn"},
                       {"gamma", cfg.gamma},
                       {"eval_size", cfg.eval_size > 0 ? cfg.eval_size : cfg.sizes.front()}};
  return j.dump();
}

void parse_train_meta(const std::string& meta_json, AnchorSet* anchors,
                      std::vector<std::string>* categories, int* eval_size) {
  const json j = json::parse(meta_json);
  if (anchors && j.contains("anchors")) {
    anchors->anchors.clear();
    for (const auto& wh : j["anchors"]["wh"])
      anchors->anchors.emplace_back(wh[0].get<double>(), wh[1].get<double>());
    anchors->levels = j["anchors"]["levels"].get<std::vector<std::vector<int>>>();
  }
  if (categories && j.contains("categories"))
    *categories = j["categories"].get<std::vector<std::string>>();
  if (eval_size && j.contains("train_config"))
    *eval_size = j["train_config"].value("eval_size", 0);
}

}  // namespace sddkit
