#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gatenet/cli.hpp"
#include "gatenet/image_io.hpp"
#include "gatenet/metrics.hpp"
#include "gatenet/net.hpp"
#include "gatenet/weights_io.hpp"
#include "test_helpers.hpp"

using namespace gatenet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("gatenet_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double round6(double v) { return std::nearbyint(v * 1e6) / 1e6; }

struct CoutCapture {
  std::ostringstream buf;
  std::streambuf* saved;
  CoutCapture() : saved(std::cout.rdbuf(buf.rdbuf())) {}
  ~CoutCapture() { std::cout.rdbuf(saved); }
};

}  // namespace

TEST_CASE("usage errors exit 2; help exits 0") {
  CoutCapture cap;
  CHECK(run_cli({"eval"}) == 2);              // missing required flags
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({"eval", "--pred", "a", "--gt", "b", "--binarize", "bogus"}) == 2);
  CHECK(run_cli({"eval", "--pred", "a", "--gt", "b", "--output", "xml"}) == 2);
}

TEST_CASE("eval: JSON equals library values; jobs do not change bytes") {
  const fs::path dir = temp_dir("eval");
  const fs::path pred_dir = dir / "pred";
  const fs::path gt_dir = dir / "gt";
  fs::create_directories(pred_dir);
  fs::create_directories(gt_dir);

  std::mt19937_64 rng(3);
  std::vector<std::pair<GrayImage, GrayImage>> pairs;
  for (int i = 0; i < 3; ++i) {
    const GrayImage pred = testutil::random_pred(rng, 16, 16);
    const GrayImage gt = testutil::random_mask(rng, 16, 16);
    const std::string name = "img" + std::to_string(i) + ".png";
    save_mask(pred, (pred_dir / name).string());
    save_mask(gt, (gt_dir / name).string());
    // Reload to get exactly what the CLI will see after 8-bit quantization.
    pairs.emplace_back(load_mask((pred_dir / name).string()),
                       load_mask((gt_dir / name).string()));
  }

  const fs::path out1 = dir / "r1.json";
  const fs::path out8 = dir / "r8.json";
  CHECK(run_cli({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--jobs", "1",
                 "--out", out1.string()}) == 0);
  CHECK(run_cli({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--jobs", "8",
                 "--out", out8.string()}) == 0);
  CHECK(read_bytes(out1) == read_bytes(out8));

  const json report = json::parse(read_bytes(out1));
  CHECK(report.contains("aggregate"));
  CHECK(report.contains("per_image"));
  CHECK(report.contains("config"));
  const DatasetEval expected = evaluate_dataset(pairs, 1);
  CHECK(report.at("aggregate").at("mae").get<double>() == round6(expected.aggregate.mae));
  CHECK(report.at("aggregate").at("f_max").get<double>() == round6(expected.aggregate.f_max));
  CHECK(report.at("aggregate").at("s_measure").get<double>() ==
        round6(expected.aggregate.s_measure));
  CHECK(report.at("aggregate").at("e_measure").get<double>() ==
        round6(expected.aggregate.e_measure));
  CHECK(report.at("aggregate").at("f_weighted").get<double>() ==
        round6(expected.aggregate.f_weighted));
  REQUIRE(report.at("per_image").size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(report.at("per_image")[i].at("name").get<std::string>() ==
          "img" + std::to_string(i));
    CHECK(report.at("per_image")[i].at("iou").get<double>() ==
          round6(expected.per_image[i].iou));
    CHECK(report.at("per_image")[i].at("ber").get<double>() ==
          round6(expected.per_image[i].ber));
  }

  // CSV and table variants run too.
  CHECK(run_cli({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--output", "csv",
                 "--out", (dir / "r.csv").string()}) == 0);
  CHECK(run_cli({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--output", "table",
                 "--out", (dir / "r.txt").string()}) == 0);
  const std::string csv = read_bytes(dir / "r.csv");
  CHECK(csv.find("name,pa,f_max") == 0);
  CHECK(csv.find("aggregate,") != std::string::npos);

  // Adaptive binarization flag is honored.
  const fs::path outa = dir / "ra.json";
  CHECK(run_cli({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--binarize",
                 "adaptive", "--out", outa.string()}) == 0);
  const json adaptive = json::parse(read_bytes(outa));
  const DatasetEval expected_a =
      evaluate_dataset(pairs, 1, EvalOptions{BinarizeMode::adaptive, 0.5});
  CHECK(adaptive.at("aggregate").at("iou").get<double>() == round6(expected_a.aggregate.iou));

  // Runtime failure (bad directory) exits 1.
  CHECK(run_cli({"eval", "--pred", (dir / "nope").string(), "--gt", gt_dir.string()}) == 1);
}

TEST_CASE("eval binarizes anti-aliased ground-truth files at 0.5") {
  const fs::path dir = temp_dir("gt_binarize");
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  GrayImage gt(8, 8), pred(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      gt.at(y, x) = x < 4 ? 0.6 : 0.4;  // soft mask edges
      pred.at(y, x) = x < 4 ? 1.0 : 0.0;
    }
  }
  save_mask(gt, (dir / "gt" / "a.png").string());
  save_mask(pred, (dir / "pred" / "a.png").string());
  const fs::path out = dir / "r.json";
  CHECK(run_cli({"eval", "--pred", (dir / "pred").string(), "--gt", (dir / "gt").string(),
                 "--out", out.string()}) == 0);
  const json report = json::parse(read_bytes(out));
  // The prediction matches the binarized ground truth exactly.
  CHECK(report.at("aggregate").at("mae").get<double>() == 0.0);
  CHECK(report.at("aggregate").at("iou").get<double>() == 1.0);
}

TEST_CASE("train-toy is seed-deterministic and infer consumes its weights") {
  const fs::path dir = temp_dir("train");
  const fs::path w1 = dir / "w1.gnwt";
  const fs::path w2 = dir / "w2.gnwt";
  {
    CoutCapture cap;
    CHECK(run_cli({"train-toy", "--out", w1.string(), "--steps", "3", "--seed", "7", "--config",
                   "m3", "--size", "32"}) == 0);
    CHECK(run_cli({"train-toy", "--out", w2.string(), "--steps", "3", "--seed", "7", "--config",
                   "m3", "--size", "32"}) == 0);
  }
  CHECK(read_bytes(w1) == read_bytes(w2));

  // The embedded config round-trips through infer.
  const ToyBatch batch = make_toy_batch(7, 1, 32);
  const fs::path input = dir / "input.png";
  save_mask(tensor_to_gray(batch.images, 0, 0), input.string());
  const fs::path mask = dir / "mask.png";
  {
    CoutCapture cap;
    CHECK(run_cli({"infer", "--weights", w1.string(), "--input", input.string(), "--output",
                   mask.string()}) == 0);
  }
  const GrayImage produced = load_mask(mask.string());
  CHECK(produced.h == 32);
  CHECK(produced.w == 32);
  for (double v : produced.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // Depth flag mismatch is a runtime error.
  CHECK(run_cli({"infer", "--weights", w1.string(), "--input", input.string(), "--depth",
                 input.string(), "--output", mask.string()}) == 1);
}

TEST_CASE("two-stream train-toy, infer, and gates report") {
  const fs::path dir = temp_dir("two_stream");
  const fs::path weights = dir / "ts.gnwt";
  {
    CoutCapture cap;
    CHECK(run_cli({"train-toy", "--out", weights.string(), "--steps", "2", "--seed", "5",
                   "--config", "two-stream", "--size", "32"}) == 0);
  }
  const ToyBatch batch = make_toy_batch(5, 1, 32);
  const fs::path rgb = dir / "rgb.png";
  const fs::path depth = dir / "depth.png";
  save_mask(tensor_to_gray(batch.images, 0, 0), rgb.string());
  save_mask(tensor_to_gray(batch.depth, 0, 0), depth.string());

  {
    CoutCapture cap;
    CHECK(run_cli({"infer", "--weights", weights.string(), "--input", rgb.string(), "--depth",
                   depth.string(), "--output", (dir / "out.png").string()}) == 0);
    // Missing --depth for a two-stream model is a runtime error.
    CHECK(run_cli({"infer", "--weights", weights.string(), "--input", rgb.string(), "--output",
                   (dir / "out2.png").string()}) == 1);
  }

  CoutCapture cap;
  CHECK(run_cli({"gates", "--weights", weights.string(), "--input", rgb.string(), "--depth",
                 depth.string()}) == 0);
  const std::string text = cap.buf.str();
  CHECK(text.find("g1(fpn)") != std::string::npos);
  CHECK(text.find("cross-modal gates") != std::string::npos);
  CHECK(text.find("histogram") != std::string::npos);
}

TEST_CASE("gates subcommand prints five levels for m4 weights") {
  const fs::path dir = temp_dir("gates");
  const fs::path weights = dir / "m4.gnwt";
  const ModelConfig cfg = preset_config("m4", 32, 32);
  save_weights(pack_model(cfg, init_params(cfg, 9)), weights.string());
  const ToyBatch batch = make_toy_batch(9, 1, 32);
  const fs::path input = dir / "in.png";
  save_mask(tensor_to_gray(batch.images, 0, 0), input.string());

  CoutCapture cap;
  CHECK(run_cli({"gates", "--weights", weights.string(), "--input", input.string()}) == 0);
  const std::string text = cap.buf.str();
  int level_lines = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] >= '1' && line[0] <= '5') ++level_lines;
  }
  CHECK(level_lines == 5);
}

TEST_CASE("selfcheck --quick exits 0") {
  CoutCapture cap;
  CHECK(run_cli({"selfcheck", "--quick"}) == 0);
}
