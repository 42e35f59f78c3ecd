#include "gatenet/cli.hpp"

#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gatenet/dataset.hpp"
#include "gatenet/image_io.hpp"
#include "gatenet/metrics.hpp"
#include "gatenet/net.hpp"
#include "gatenet/selfcheck.hpp"
#include "gatenet/weights_io.hpp"

namespace gatenet {
namespace {

using nlohmann::json;

// All reported numbers are rounded to 6 decimals, ties to even, so printed
// values match the library to the last digit.
double round6(double v) { return std::nearbyint(v * 1e6) / 1e6; }

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", round6(v));
  return buf;
}

struct MetricRow {
  const char* key;
  double MetricReport::*field;
};

constexpr MetricRow kMetricRows[] = {
    {"pa", &MetricReport::pa},
    {"f_max", &MetricReport::f_max},
    {"f_mean", &MetricReport::f_mean},
    {"f_weighted", &MetricReport::f_weighted},
    {"s_measure", &MetricReport::s_measure},
    {"e_measure", &MetricReport::e_measure},
    {"iou", &MetricReport::iou},
    {"dice", &MetricReport::dice},
    {"ber", &MetricReport::ber},
    {"mae", &MetricReport::mae},
};

json report_to_json(const MetricReport& r) {
  json j;
  for (const MetricRow& row : kMetricRows) j[row.key] = round6(r.*row.field);
  return j;
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "' for writing");
  out << text;
}

struct EvalArgs {
  std::string pred_dir;
  std::string gt_dir;
  int jobs = 0;
  std::string binarize = "0.5";
  std::string output = "json";
  std::string out_path;
};

int cmd_eval(const EvalArgs& args) {
  EvalOptions opts;
  if (args.binarize == "adaptive") {
    opts.binarize = BinarizeMode::adaptive;
  } else {
    opts.binarize = BinarizeMode::fixed;
    opts.threshold = std::stod(args.binarize);
    if (!(opts.threshold >= 0.0 && opts.threshold <= 1.0)) {
      throw std::runtime_error("--binarize threshold must lie in [0,1]");
    }
  }

  const DatasetPairing pairing = pair_dataset(args.pred_dir, args.gt_dir);
  for (const std::string& stem : pairing.unmatched_pred) {
    std::cerr << "warning: prediction '" << stem << "' has no ground truth\n";
  }
  for (const std::string& stem : pairing.unmatched_gt) {
    std::cerr << "warning: ground truth '" << stem << "' has no prediction\n";
  }

  int jobs = args.jobs;
#ifdef _OPENMP
  if (jobs <= 0) jobs = omp_get_max_threads();
#else
  jobs = 1;
#endif

  std::vector<std::pair<GrayImage, GrayImage>> pairs(pairing.pairs.size());
  std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
  for (long long i = 0; i < static_cast<long long>(pairing.pairs.size()); ++i) {
    try {
      GrayImage gt = load_mask(pairing.pairs[static_cast<size_t>(i)].second);
      for (double& v : gt.v) v = v >= 0.5 ? 1.0 : 0.0;  // ground truth is binary
      pairs[static_cast<size_t>(i)] = {load_mask(pairing.pairs[static_cast<size_t>(i)].first),
                                       std::move(gt)};
    } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);

  const DatasetEval eval = evaluate_dataset(pairs, jobs, opts);

  std::ostringstream text;
  if (args.output == "json") {
    json j;
    j["aggregate"] = report_to_json(eval.aggregate);
    j["per_image"] = json::array();
    for (size_t i = 0; i < eval.per_image.size(); ++i) {
      json row = report_to_json(eval.per_image[i]);
      row["name"] = pairing.stems[i];
      row["threshold_used"] = round6(eval.per_image[i].threshold_used);
      j["per_image"].push_back(std::move(row));
    }
    j["config"] = {{"pred_dir", args.pred_dir},
                   {"gt_dir", args.gt_dir},
                   {"binarize", args.binarize},
                   {"pairs", pairing.pairs.size()}};
    text << j.dump(2) << "\n";
  } else if (args.output == "csv") {
    text << "name";
    for (const MetricRow& row : kMetricRows) text << "," << row.key;
    text << ",threshold_used\n";
    for (size_t i = 0; i < eval.per_image.size(); ++i) {
      text << pairing.stems[i];
      for (const MetricRow& row : kMetricRows) text << "," << fmt6(eval.per_image[i].*row.field);
      text << "," << fmt6(eval.per_image[i].threshold_used) << "\n";
    }
    text << "aggregate";
    for (const MetricRow& row : kMetricRows) text << "," << fmt6(eval.aggregate.*row.field);
    text << "," << fmt6(eval.aggregate.threshold_used) << "\n";
  } else if (args.output == "table") {
    text << "metric      aggregate\n";
    for (const MetricRow& row : kMetricRows) {
      char line[80];
      std::snprintf(line, sizeof(line), "%-11s %s\n", row.key, fmt6(eval.aggregate.*row.field).c_str());
      text << line;
    }
    text << "images      " << eval.per_image.size() << "\n";
  } else {
    throw std::runtime_error("unknown output format '" + args.output + "'");
  }
  write_output(text.str(), args.out_path);
  return 0;
}

struct InferArgs {
  std::string weights;
  std::string input;
  std::string depth;
  std::string output;
};

int cmd_infer(const InferArgs& args) {
  const auto [cfg, params] = unpack_model(load_weights(args.weights));
  const bool want_two = !args.depth.empty();
  if (want_two && cfg.stream != StreamMode::two) {
    throw std::runtime_error("--depth given but '" + args.weights + "' holds a single-stream model");
  }
  if (!want_two && cfg.stream == StreamMode::two) {
    throw std::runtime_error("'" + args.weights + "' holds a two-stream model; --depth is required");
  }

  const LoadedImage src = load_image(args.input);
  const Tensor image = bilinear_resize(image_to_tensor(src, 3), cfg.input_h, cfg.input_w);

  Prediction pred;
  if (want_two) {
    const Tensor depth =
        bilinear_resize(image_to_tensor(load_image(args.depth), 1), cfg.input_h, cfg.input_w);
    pred = forward_two_stream(image, depth, cfg, params);
  } else {
    pred = forward(image, cfg, params);
  }
  const Tensor restored = bilinear_resize(pred.sf, src.h, src.w);
  save_mask(tensor_to_gray(restored), args.output);
  std::cout << "wrote " << args.output << " (" << src.w << "x" << src.h << ")\n";
  return 0;
}

struct TrainArgs {
  std::string out_path;
  int steps = 500;
  unsigned long long seed = 1;
  std::string config = "m5";
  double lr = 1e-3;
  int size = 64;
  int batch = 1;
};

int cmd_train_toy(const TrainArgs& args) {
  const ModelConfig cfg = preset_config(args.config, args.size, args.size);
  const int dataset_size = 4;
  const ToyBatch batch = make_toy_batch(args.seed, dataset_size, args.size);
  if (args.batch < 1 || args.batch > dataset_size) {
    throw std::runtime_error("--batch must lie in [1," + std::to_string(dataset_size) + "]");
  }

  ModelParams params = init_params(cfg, args.seed);
  AdamState state;
  const int report_every = std::max(1, args.steps / 10);
  for (int step = 1; step <= args.steps; ++step) {
    // Round-robin mini-batches over the fixed 4-image dataset.
    std::vector<int> indices(static_cast<size_t>(args.batch));
    for (int j = 0; j < args.batch; ++j) {
      indices[static_cast<size_t>(j)] = ((step - 1) * args.batch + j) % dataset_size;
    }
    const Tensor images = gather_samples(batch.images, indices);
    const Tensor masks = gather_samples(batch.masks, indices);
    Tensor depth_slice;
    const Tensor* depth = nullptr;
    if (cfg.stream == StreamMode::two) {
      depth_slice = gather_samples(batch.depth, indices);
      depth = &depth_slice;
    }
    const double loss = train_step(cfg, params, images, masks, state, args.lr, depth);
    if (step == 1 || step % report_every == 0 || step == args.steps) {
      std::cout << "step " << step << " loss " << fmt6(loss) << "\n";
    }
  }

  // Training MAE over the full dataset.
  const Prediction pred = cfg.stream == StreamMode::two
                              ? forward_two_stream(batch.images, batch.depth, cfg, params)
                              : forward(batch.images, cfg, params);
  double train_mae = 0.0;
  for (int s = 0; s < batch.images.n(); ++s) {
    train_mae += mae(tensor_to_gray(pred.sf, s), tensor_to_gray(batch.masks, s));
  }
  train_mae /= batch.images.n();
  std::cout << "training mae " << fmt6(train_mae) << "\n";

  save_weights(pack_model(cfg, params), args.out_path);
  std::cout << "wrote " << args.out_path << "\n";
  return 0;
}

struct GatesArgs {
  std::string weights;
  std::string input;
  std::string depth;
};

void print_gate_histogram(std::ostream& out, const char* label,
                          const std::vector<double>& values) {
  std::array<int, 10> bins{};
  for (double v : values) {
    const int b = std::min(9, static_cast<int>(v * 10.0));
    bins[static_cast<size_t>(b)] += 1;
  }
  out << label << " histogram [0,1) in 10 bins:";
  for (int b : bins) out << " " << b;
  out << "\n";
}

int cmd_gates(const GatesArgs& args) {
  const auto [cfg, params] = unpack_model(load_weights(args.weights));
  if (cfg.gate_version == GateVersion::none && cfg.stream == StreamMode::single) {
    throw std::runtime_error("model '" + args.weights + "' has no gate units (config " +
                             config_preset_name(cfg) + ")");
  }
  const bool want_two = !args.depth.empty();
  if (want_two != (cfg.stream == StreamMode::two)) {
    throw std::runtime_error(cfg.stream == StreamMode::two ? "--depth is required for this model"
                                                           : "--depth given for a single-stream model");
  }

  const Tensor image =
      bilinear_resize(image_to_tensor(load_image(args.input), 3), cfg.input_h, cfg.input_w);
  Prediction pred;
  if (want_two) {
    const Tensor depth =
        bilinear_resize(image_to_tensor(load_image(args.depth), 1), cfg.input_h, cfg.input_w);
    pred = forward_two_stream(image, depth, cfg, params);
  } else {
    pred = forward(image, cfg, params);
  }

  char line[96];
  std::vector<double> fpn, parallel;
  if (pred.trace.has_levels()) {
    std::cout << "level  g1(fpn)  g2(parallel)\n";
    for (int i = 0; i < 5; ++i) {
      for (const auto& [g1, g2] : pred.trace.levels[static_cast<size_t>(i)]) {
        std::snprintf(line, sizeof(line), "%-6d %.4f   %.4f\n", i + 1, g1, g2);
        std::cout << line;
        fpn.push_back(g1);
        parallel.push_back(g2);
      }
    }
    print_gate_histogram(std::cout, "fpn", fpn);
    print_gate_histogram(std::cout, "parallel", parallel);
  }
  if (pred.trace.has_cross_modal()) {
    std::vector<double> rgb, depth_g;
    std::cout << "cross-modal gates\nlevel  g_rgb    g_depth\n";
    for (int i = 0; i < 5; ++i) {
      for (const auto& [gr, gd] : pred.trace.cross_modal[static_cast<size_t>(i)]) {
        std::snprintf(line, sizeof(line), "%-6d %.4f   %.4f\n", i + 1, gr, gd);
        std::cout << line;
        rgb.push_back(gr);
        depth_g.push_back(gd);
      }
    }
    print_gate_histogram(std::cout, "rgb", rgb);
    print_gate_histogram(std::cout, "depth", depth_g);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"GateNet toolkit: segmentation metrics and a toy gated network"};
  app.require_subcommand(1);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate prediction masks against ground truth");
  eval_cmd->add_option("--pred", eval_args.pred_dir, "directory of prediction masks")->required();
  eval_cmd->add_option("--gt", eval_args.gt_dir, "directory of ground-truth masks")->required();
  eval_cmd->add_option("--jobs", eval_args.jobs, "worker count (default: logical cores)");
  eval_cmd
      ->add_option("--binarize", eval_args.binarize,
                   "threshold for PA/IoU/Dice/BER: a value in [0,1] or 'adaptive'")
      ->check([](const std::string& v) -> std::string {
        if (v == "adaptive") return {};
        try {
          size_t pos = 0;
          const double t = std::stod(v, &pos);
          if (pos == v.size() && t >= 0.0 && t <= 1.0) return {};
        } catch (const std::exception&) {
        }
        return "must be 'adaptive' or a number in [0,1]";
      });
  eval_cmd->add_option("--output", eval_args.output, "json|csv|table (default json)")
      ->check(CLI::IsMember({"json", "csv", "table"}));
  eval_cmd->add_option("--out", eval_args.out_path, "write the report to a file instead of stdout");

  InferArgs infer_args;
  CLI::App* infer_cmd = app.add_subcommand("infer", "run a saved model on one image");
  infer_cmd->add_option("--weights", infer_args.weights, "weight container")->required();
  infer_cmd->add_option("--input", infer_args.input, "input image (PNG/PGM)")->required();
  infer_cmd->add_option("--depth", infer_args.depth, "depth image; selects the two-stream model");
  infer_cmd->add_option("--output", infer_args.output, "output mask path")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "overfit a toy model on synthetic data");
  train_cmd->add_option("--out", train_args.out_path, "output weight container")->required();
  train_cmd->add_option("--steps", train_args.steps, "training steps (default 500)");
  train_cmd->add_option("--seed", train_args.seed, "RNG seed (default 1)");
  train_cmd->add_option("--config", train_args.config, "m1|m2|m3|m4|m5|two-stream (default m5)");
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate (default 1e-3)");
  train_cmd->add_option("--size", train_args.size, "synthetic image side length (default 64)");
  train_cmd->add_option("--batch", train_args.batch, "mini-batch size per step, 1..4 (default 1)");

  GatesArgs gates_args;
  CLI::App* gates_cmd = app.add_subcommand("gates", "report gate values for one input");
  gates_cmd->add_option("--weights", gates_args.weights, "weight container")->required();
  gates_cmd->add_option("--input", gates_args.input, "input image (PNG/PGM)")->required();
  gates_cmd->add_option("--depth", gates_args.depth, "depth image for two-stream models");

  bool quick = false;
  CLI::App* selfcheck_cmd = app.add_subcommand("selfcheck", "run the library invariant suite");
  selfcheck_cmd->add_flag("--quick", quick, "reduced sample counts");

  std::vector<const char*> argv;
  argv.push_back("gatenet");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*infer_cmd) return cmd_infer(infer_args);
    if (*train_cmd) return cmd_train_toy(train_args);
    if (*gates_cmd) return cmd_gates(gates_args);
    if (*selfcheck_cmd) return run_selfcheck(quick, std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace gatenet
