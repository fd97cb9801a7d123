// Drives the installed binary end to end; SDDKIT_BIN points at it.
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* bin = std::getenv("SDDKIT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "SDDKIT_BIN must point at the CLI binary");
  return bin;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " 2>/dev/null";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult res;
  std::array<char, 4096> buf{};
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) res.out.append(buf.data(), n);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

fs::path work_dir() {
  const auto p = fs::temp_directory_path() / "sddkit_cli_tests";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("unknown subcommands and flags exit 2") {
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("anchors --no-such-flag 1").exit_code == 2);
}

TEST_CASE("synth, stats, anchors, split, rank-sources, augment pipeline") {
  const auto dir = work_dir();
  const auto target_dir = (dir / "target").string();
  const auto source_dir = (dir / "source").string();

  auto synth = run("synth --preset target --n 24 --size 96 --seed 5 --out " + target_dir);
  REQUIRE(synth.exit_code == 0);
  const auto payload = json::parse(synth.out);
  CHECK(payload["images"] == 24);
  const std::string data = payload["jsonl"];
  CHECK(fs::exists(data));

  REQUIRE(run("synth --preset source --n 30 --size 96 --seed 6 --out " + source_dir).exit_code == 0);

  auto stats = run("stats --data " + data);
  REQUIRE(stats.exit_code == 0);
  const auto stats_json = json::parse(stats.out);
  CHECK(stats_json["total_labels"].get<int>() > 0);
  CHECK(stats_json.contains("relative_area"));

  // identical invocations produce byte-identical payloads
  auto anchors1 = run("anchors --data " + data + " --k 9 --sizes 96 --seed 3");
  auto anchors2 = run("anchors --data " + data + " --k 9 --sizes 96 --seed 3");
  REQUIRE(anchors1.exit_code == 0);
  CHECK(anchors1.out == anchors2.out);
  const auto aj = json::parse(anchors1.out);
  CHECK(aj["anchors"].size() == 9);
  CHECK(aj["levels"].size() == 3);
  CHECK(aj["avg_iou"].get<double>() > 0.3);

  auto split = run("split --data " + data + " --mode holdout --ratio 0.75 --seed 1 --out " +
                   (dir / "splits").string());
  REQUIRE(split.exit_code == 0);
  const auto sj = json::parse(split.out);
  CHECK(sj["train"]["images"] == 18);
  CHECK(sj["test"]["images"] == 6);

  auto folds = run("split --data " + data + " --mode kfold --k 3 --seed 1 --out " +
                   (dir / "folds").string());
  REQUIRE(folds.exit_code == 0);
  CHECK(json::parse(folds.out)["folds"].size() == 3);

  auto ranked = run("rank-sources --source " + source_dir + "/data.jsonl --target " + data);
  REQUIRE(ranked.exit_code == 0);
  const auto rj = json::parse(ranked.out);
  CHECK(rj["ranked"].size() == 8);
  double prev = -1;
  for (const auto& row : rj["ranked"]) {
    CHECK(row["distance"].get<double>() >= prev);
    prev = row["distance"].get<double>();
  }

  auto preview = run("augment --data " + data + " --preview 2 --size 96 --seed 9 --out " +
                     (dir / "previews").string());
  REQUIRE(preview.exit_code == 0);
  CHECK(json::parse(preview.out)["previews"].size() == 2);
}

TEST_CASE("train, predict, eval round trip") {
  const auto dir = work_dir();
  const auto train_dir = (dir / "train_ds").string();
  const auto run_dir = (dir / "run").string();
  REQUIRE(run("synth --preset target --n 12 --size 64 --seed 11 --out " + train_dir).exit_code == 0);

  auto train = run("train --data " + train_dir + "/data.jsonl --epochs 2 --batch 2 --sizes 64 " +
                   "--seed 3 --eval-every 0 --out " + run_dir);
  REQUIRE(train.exit_code == 0);
  const auto tj = json::parse(train.out);
  const std::string ckpt = tj["checkpoint"];
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(tj["metrics"].get<std::string>()));

  const auto dets_path = (dir / "dets.jsonl").string();
  auto predict = run("predict --ckpt " + ckpt + " --data " + train_dir +
                     "/data.jsonl --conf 0.001 --out " + dets_path);
  REQUIRE(predict.exit_code == 0);
  CHECK(json::parse(predict.out)["images"] == 12);
  CHECK(fs::exists(dets_path));

  auto eval = run("eval --gt " + train_dir + "/data.jsonl --dets " + dets_path);
  REQUIRE(eval.exit_code == 0);
  const auto ej = json::parse(eval.out);
  CHECK(ej.contains("map50"));
  CHECK(ej.contains("map75"));
  CHECK(ej.contains("per_class"));
  CHECK(ej["counts"]["images"] == 12);
}

TEST_CASE("gradcheck subcommand gates on the tolerance") {
  auto ok = run("gradcheck --tol 1e-5");
  CHECK(ok.exit_code == 0);
  const auto j = json::parse(ok.out);
  CHECK(j["pass"] == true);
  CHECK(j["ops"].size() >= 12);

  // an absurd tolerance must fail and exit 1
  auto bad = run("gradcheck --tol 1e-18");
  CHECK(bad.exit_code == 1);
  CHECK(json::parse(bad.out)["pass"] == false);
}

TEST_CASE("operational failures exit 1 with structured error JSON") {
  auto res = run("stats --data /nonexistent/nowhere.jsonl");
  CHECK(res.exit_code == 1);
  const auto j = json::parse(res.out);
  CHECK(j.contains("error"));
}
