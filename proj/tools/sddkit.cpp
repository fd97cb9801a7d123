// Command-line front end: every workflow as a subcommand with JSON on stdout
// and human logs on stderr. Exit 0 on success, 1 on operational failure
// (structured error JSON), 2 on usage errors.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "sddkit/checks.hpp"
#include "sddkit/common.hpp"
#include "sddkit/eval.hpp"
#include "sddkit/head.hpp"
#include "sddkit/synth.hpp"
#include "sddkit/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sddkit;

namespace {

struct CommonDataOpts {
  std::string path;
  std::string format = "jsonl";  // jsonl | voc
  std::vector<std::string> categories = kDamageCategories;
};

Dataset load_dataset(const CommonDataOpts& o) {
  if (o.format == "voc") return load_voc_dir(o.path, o.categories);
  require(o.format == "jsonl", "unknown dataset format \"", o.format,
          "\" (known: jsonl, voc)");
  return load_jsonl(o.path, o.categories);
}

void add_data_opts(CLI::App* cmd, CommonDataOpts& o, const std::string& flag = "--data") {
  cmd->add_option(flag, o.path, "dataset file (jsonl) or directory (voc)")->required();
  cmd->add_option("--format", o.format, "dataset format: jsonl or voc");
  cmd->add_option("--categories", o.categories, "category name table")->delimiter(',');
}

void print_payload(const json& j) { std::cout << j.dump(2) << std::endl; }

json hist_to_json(const ScaleAspectHist& h) {
  return {{"bins", ScaleAspectHist::kBins}, {"count", h.count}, {"mass", h.mass}};
}

json stats_to_json(const DatasetStats& s, const std::vector<std::string>& categories) {
  json per = json::object();
  for (size_t c = 0; c < categories.size(); ++c)
    per[categories[c]] = {{"count", s.category_counts[c]},
                          {"fraction", s.category_fractions[c]}};
  return {{"total_labels", s.total_labels},
          {"per_category", per},
          {"relative_area", {{"q25", s.area_q25}, {"median", s.area_median}, {"q75", s.area_q75}}},
          {"joint_histogram", hist_to_json(s.joint)}};
}

json ap_to_json(const APResult& ap, const Dataset& ds) {
  json per = json::object();
  for (size_t c = 0; c < ds.categories.size(); ++c) {
    const auto& c50 = ap.per_category[0][c];
    const auto& c75 = ap.per_category[1][c];
    if (!c50.defined) continue;
    per[ds.categories[c]] = {{"ap50", c50.ap}, {"ap75", c75.ap}};
  }
  json counts = json::object();
  size_t dets = 0;
  for (size_t c = 0; c < ds.categories.size(); ++c) {
    counts[ds.categories[c]] = ap.per_category[0][c].gts;
    dets += ap.per_category[0][c].dets;
  }
  return {{"per_class", per},
          {"map50", ap.map[0]},
          {"map75", ap.map[1]},
          {"counts", {{"images", ds.records.size()}, {"gts", counts}, {"detections", dets}}}};
}

int cmd_synth(const std::string& preset, int n, int size, uint64_t seed,
              const std::string& out) {
  SynthConfig cfg = synth_preset(preset, n, size, seed);
  Dataset ds = generate(cfg);
  write_synth_dataset(ds, out);
  print_payload({{"out", out},
                 {"jsonl", (fs::path(out) / "data.jsonl").string()},
                 {"images", ds.records.size()},
                 {"labels", ds.label_count()},
                 {"categories", ds.categories},
                 {"preset", preset},
                 {"seed", seed}});
  return 0;
}

int cmd_stats(const CommonDataOpts& data) {
  Dataset ds = load_dataset(data);
  print_payload(stats_to_json(compute_stats(ds), ds.categories));
  return 0;
}

int cmd_split(const CommonDataOpts& data, const std::string& mode, double ratio, int k,
              uint64_t seed, const std::string& out) {
  Dataset ds = load_dataset(data);
  fs::create_directories(out);
  json payload{{"mode", mode}, {"seed", seed}};
  if (mode == "holdout") {
    const auto split = partition_holdout(ds, ratio, seed);
    const auto train_path = (fs::path(out) / "train.jsonl").string();
    const auto test_path = (fs::path(out) / "test.jsonl").string();
    save_jsonl(subset(ds, split.train), train_path);
    save_jsonl(subset(ds, split.test), test_path);
    payload["train"] = {{"path", train_path}, {"images", split.train.size()}};
    payload["test"] = {{"path", test_path}, {"images", split.test.size()}};
  } else if (mode == "kfold") {
    const auto folds = partition_kfold(ds, k, seed);
    json jfolds = json::array();
    for (size_t f = 0; f < folds.size(); ++f) {
      const auto path = (fs::path(out) / detail::cat("fold_", f, ".jsonl")).string();
      save_jsonl(subset(ds, folds[f]), path);
      jfolds.push_back({{"path", path}, {"images", folds[f].size()}});
    }
    payload["folds"] = jfolds;
  } else {
    fail("unknown split mode \"", mode, "\" (known: holdout, kfold)");
  }
  print_payload(payload);
  return 0;
}

int cmd_anchors(const CommonDataOpts& data, int k, std::vector<int> sizes, uint64_t seed) {
  Dataset ds = load_dataset(data);
  const AnchorSet set = kmeans_anchors(ds, k, sizes, seed);
  const AnchorQuality q = anchor_quality(set, ds, sizes.front());
  json anchors = json::array();
  for (const auto& [w, h] : set.anchors) anchors.push_back({w, h});
  print_payload({{"anchors", anchors},
                 {"levels", set.levels},
                 {"avg_iou", q.avg_best_iou},
                 {"recall50", q.recall_at_05}});
  return 0;
}

int cmd_augment(const CommonDataOpts& data, int preview, int size, uint64_t seed,
                const std::string& out) {
  Dataset ds = load_dataset(data);
  require(!ds.records.empty(), "augment: empty dataset");
  fs::create_directories(out);
  AugmentConfig cfg;
  cfg.target_size = size;
  const std::string base = fs::path(data.path).parent_path().string();

  json files = json::array();
  for (int i = 0; i < preview; ++i) {
    const auto& rec = ds.records[static_cast<size_t>(i) % ds.records.size()];
    Sample s{load_raster(rec, base), rec.labels};
    Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
    Sample aug = augment_pipeline(s, cfg, rng);
    for (const auto& l : aug.labels) draw_box(aug.raster, l.box, 230, 40, 40);
    const auto path = (fs::path(out) / detail::cat("aug_", i, ".png")).string();
    write_png(aug.raster, path);
    files.push_back(path);
  }
  print_payload({{"out", out}, {"previews", files}, {"seed", seed}, {"size", size}});
  return 0;
}

int cmd_gradcheck(double tol, uint64_t seed) {
  const auto results = nn::run_gradient_suite(tol, seed);
  json ops = json::array();
  for (const auto& r : results)
    ops.push_back({{"name", r.name},
                   {"pass", r.report.pass},
                   {"max_rel_err", r.report.max_rel_err},
                   {"coords", r.report.coords_checked},
                   {"finite", r.report.finite}});
  const bool ok = nn::suite_passed(results);
  print_payload({{"tol", tol}, {"pass", ok}, {"ops", ops}});
  return ok ? 0 : 1;
}

struct TrainOpts {
  CommonDataOpts data;
  std::string val_path, source_path, donor, tl = "none", norm = "br", out;
  TrainConfig cfg;
  bool no_augment = false;
};

int cmd_train(TrainOpts& o) {
  Dataset train_ds = load_dataset(o.data);
  o.cfg.data_root = fs::path(o.data.path).parent_path().string();
  o.cfg.norm_mode = o.norm == "bn" ? nn::NormMode::batch_norm : nn::NormMode::batch_renorm;
  o.cfg.augment_enabled = !o.no_augment;
  o.cfg.out_dir = o.out;

  std::optional<Dataset> val;
  if (!o.val_path.empty()) {
    CommonDataOpts v = o.data;
    v.path = o.val_path;
    val = load_dataset(v);
  }
  std::optional<Dataset> source;
  if (!o.source_path.empty())  // the source set may use its own category table
    source = load_jsonl(o.source_path, std::nullopt);

  fs::create_directories(o.out);
  std::ofstream metrics((fs::path(o.out) / "metrics.jsonl").string());
  require(metrics.good(), "train: cannot open metrics.jsonl under ", o.out);

  DetectorModel model = build_toy_detector<float>({});
  AnchorSet anchors;
  TlReport report = tl_harness(train_ds, val ? &*val : nullptr, source ? &*source : nullptr,
                               o.donor, tl_mode_from_string(o.tl), o.cfg, &model,
                               &anchors, &metrics);

  json payload{{"out", o.out},
               {"checkpoint", (fs::path(o.out) / "model.ckpt").string()},
               {"metrics", (fs::path(o.out) / "metrics.jsonl").string()},
               {"mode", to_string(report.mode)},
               {"epochs", o.cfg.epochs},
               {"source_epochs", report.source_epochs},
               {"target_epochs", report.target_epochs},
               {"params", model.param_count()}};
  if (report.map50 >= 0) {
    payload["map50"] = report.map50;
    payload["map75"] = report.map75;
  }
  print_payload(payload);
  return 0;
}

int cmd_eval(const CommonDataOpts& gt_opts, const std::string& dets_path) {
  Dataset gt = load_dataset(gt_opts);
  const auto dets = load_detections_jsonl(dets_path, gt.categories);

  std::vector<std::vector<Detection>> per_image(gt.records.size());
  for (const auto& [image, list] : dets) {
    bool found = false;
    for (size_t i = 0; i < gt.records.size(); ++i)
      if (gt.records[i].image_path == image) {
        per_image[i] = list;
        found = true;
        break;
      }
    if (!found) log_warn(detail::cat("detections for unknown image ", image, " ignored"));
  }
  print_payload(ap_to_json(mean_ap(per_image, gt), gt));
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const CommonDataOpts& data,
                const std::string& out_path, double conf, double nms_thr, int size,
                const std::string& overlay) {
  LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  AnchorSet anchors;
  std::vector<std::string> categories = kDamageCategories;
  int meta_size = 0;
  parse_train_meta(ck.meta_json, &anchors, &categories, &meta_size);
  require(!anchors.anchors.empty(), "predict: checkpoint carries no anchor metadata");
  if (size <= 0) size = meta_size > 0 ? meta_size : 416;

  CommonDataOpts opts = data;
  opts.categories = categories;
  Dataset ds = load_dataset(opts);
  const std::string base = fs::path(data.path).parent_path().string();
  if (!overlay.empty()) fs::create_directories(overlay);

  std::vector<std::pair<std::string, std::vector<Detection>>> all;
  for (const auto& rec : ds.records) {
    Raster img = load_raster(rec, base);
    auto dets = predict(ck.model, img, anchors, size, conf, nms_thr);
    if (!overlay.empty()) {
      Raster vis = img;
      for (const auto& d : dets) draw_box(vis, d.box, 230, 40, 40);
      write_png(vis, (fs::path(overlay) / fs::path(rec.image_path).filename()).string());
    }
    all.emplace_back(rec.image_path, std::move(dets));
  }
  save_detections_jsonl(out_path, all, categories);

  size_t total = 0;
  for (const auto& [_, l] : all) total += l.size();
  print_payload({{"out", out_path},
                 {"images", all.size()},
                 {"detections", total},
                 {"size", size},
                 {"conf_threshold", conf},
                 {"nms_threshold", nms_thr}});
  return 0;
}

int cmd_rank_sources(const std::string& source_path, const std::string& target_path) {
  Dataset source = load_jsonl(source_path, std::nullopt);
  Dataset target = load_jsonl(target_path, std::nullopt);
  const auto ranked = rank_source_classes(compute_stats(source), compute_stats(target));
  json rows = json::array();
  for (const auto& [cat, dist] : ranked)
    rows.push_back({{"category", source.categories[static_cast<size_t>(cat)]},
                    {"id", cat},
                    {"distance", dist}});
  print_payload({{"ranked", rows}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structural damage detection toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic annotated dataset");
  std::string synth_preset_name = "target", synth_out = "synth_out";
  int synth_n = 100, synth_size = 128;
  uint64_t synth_seed = 0;
  synth->add_option("--preset", synth_preset_name, "target or source");
  synth->add_option("--n", synth_n, "image count");
  synth->add_option("--size", synth_size, "image side length");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "dataset statistics");
  CommonDataOpts stats_data;
  add_data_opts(stats, stats_data);

  // split
  auto* split = app.add_subcommand("split", "holdout or stratified k-fold split");
  CommonDataOpts split_data;
  std::string split_mode = "holdout", split_out = "splits";
  double split_ratio = 0.8;
  int split_k = 5;
  uint64_t split_seed = 0;
  add_data_opts(split, split_data);
  split->add_option("--mode", split_mode, "holdout or kfold");
  split->add_option("--ratio", split_ratio, "train fraction for holdout");
  split->add_option("--k", split_k, "fold count for kfold");
  split->add_option("--seed", split_seed, "rng seed");
  split->add_option("--out", split_out, "output directory")->required();

  // anchors
  auto* anchors_cmd = app.add_subcommand("anchors", "IoU k-means anchor clustering");
  CommonDataOpts anchors_data;
  int anchors_k = 9;
  std::vector<int> anchors_sizes = {416, 448, 480, 512, 544, 576, 608};
  uint64_t anchors_seed = 0;
  add_data_opts(anchors_cmd, anchors_data);
  anchors_cmd->add_option("--k", anchors_k, "cluster count (divisible by 3)");
  anchors_cmd->add_option("--sizes", anchors_sizes, "multi-scale pool sizes")->delimiter(',');
  anchors_cmd->add_option("--seed", anchors_seed, "rng seed");

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "write augmented previews");
  CommonDataOpts augment_data;
  int augment_preview = 8, augment_size = 416;
  uint64_t augment_seed = 0;
  std::string augment_out = "augment_out";
  add_data_opts(augment_cmd, augment_data);
  augment_cmd->add_option("--preview", augment_preview, "number of previews");
  augment_cmd->add_option("--size", augment_size, "letterbox target size");
  augment_cmd->add_option("--seed", augment_seed, "rng seed");
  augment_cmd->add_option("--out", augment_out, "output directory")->required();

  // gradcheck
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  double gradcheck_tol = 1e-5;
  uint64_t gradcheck_seed = 7;
  gradcheck_cmd->add_option("--tol", gradcheck_tol, "max relative error");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "rng seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a toy detector");
  TrainOpts train_opts;
  add_data_opts(train_cmd, train_opts.data);
  train_cmd->add_option("--val-data", train_opts.val_path, "validation jsonl");
  train_cmd->add_option("--source-data", train_opts.source_path, "transfer source jsonl (tl b)");
  train_cmd->add_option("--donor", train_opts.donor, "donor checkpoint (tl a)");
  train_cmd->add_option("--tl", train_opts.tl, "transfer mode: none, a, b");
  train_cmd->add_option("--epochs", train_opts.cfg.epochs, "total epochs");
  train_cmd->add_option("--batch", train_opts.cfg.batch_size, "batch size");
  train_cmd->add_option("--sizes", train_opts.cfg.sizes, "training sizes")->delimiter(',');
  train_cmd->add_option("--norm", train_opts.norm, "bn or br");
  train_cmd->add_option("--gamma", train_opts.cfg.gamma, "focal loss gamma");
  train_cmd->add_option("--seed", train_opts.cfg.seed, "rng seed");
  train_cmd->add_option("--width", train_opts.cfg.width_mult, "model width multiplier");
  train_cmd->add_option("--weight-decay", train_opts.cfg.weight_decay, "L2 coefficient");
  train_cmd->add_option("--eval-every", train_opts.cfg.eval_every, "validation cadence (0 = off)");
  train_cmd->add_flag("--no-augment", train_opts.no_augment, "disable augmentation");
  train_cmd->add_option("--out", train_opts.out, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "mAP against ground truth");
  CommonDataOpts eval_gt;
  std::string eval_dets;
  eval_cmd->add_option("--gt", eval_gt.path, "ground-truth jsonl")->required();
  eval_cmd->add_option("--format", eval_gt.format, "gt format: jsonl or voc");
  eval_cmd->add_option("--categories", eval_gt.categories, "category table")->delimiter(',');
  eval_cmd->add_option("--dets", eval_dets, "detections jsonl")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "run a checkpoint over a dataset");
  CommonDataOpts predict_data;
  std::string predict_ckpt, predict_out = "detections.jsonl", predict_overlay;
  double predict_conf = 0.25, predict_nms = 0.45;
  int predict_size = 0;
  predict_cmd->add_option("--ckpt", predict_ckpt, "checkpoint path")->required();
  add_data_opts(predict_cmd, predict_data);
  predict_cmd->add_option("--out", predict_out, "detections jsonl path");
  predict_cmd->add_option("--conf", predict_conf, "confidence threshold");
  predict_cmd->add_option("--nms", predict_nms, "NMS IoU threshold");
  predict_cmd->add_option("--size", predict_size, "input size (0 = from checkpoint)");
  predict_cmd->add_option("--overlay", predict_overlay, "directory for box overlays");

  // rank-sources
  auto* rank_cmd = app.add_subcommand("rank-sources", "rank source categories by scale/aspect closeness");
  std::string rank_source, rank_target;
  rank_cmd->add_option("--source", rank_source, "source jsonl")->required();
  rank_cmd->add_option("--target", rank_target, "target jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_preset_name, synth_n, synth_size, synth_seed, synth_out);
    if (*stats) return cmd_stats(stats_data);
    if (*split) return cmd_split(split_data, split_mode, split_ratio, split_k, split_seed, split_out);
    if (*anchors_cmd) return cmd_anchors(anchors_data, anchors_k, anchors_sizes, anchors_seed);
    if (*augment_cmd) return cmd_augment(augment_data, augment_preview, augment_size, augment_seed, augment_out);
    if (*gradcheck_cmd) return cmd_gradcheck(gradcheck_tol, gradcheck_seed);
    if (*train_cmd) return cmd_train(train_opts);
    if (*eval_cmd) return cmd_eval(eval_gt, eval_dets);
    if (*predict_cmd)
      return cmd_predict(predict_ckpt, predict_data, predict_out, predict_conf,
                         predict_nms, predict_size, predict_overlay);
    if (*rank_cmd) return cmd_rank_sources(rank_source, rank_target);
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump() << std::endl;
    std::fprintf(stderr, "[error] %s\n", e.what());
    return 1;
  }
  return 2;
}
