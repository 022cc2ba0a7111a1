#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "pfrnet/harness.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad lambda value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

pfrnet::TrainConfig read_config(const std::string& path, const std::vector<std::string>& overrides) {
  auto config = path.empty() ? pfrnet::TrainConfig::desk() : pfrnet::load_train_config(path);
  for (const auto& o : overrides) pfrnet::apply_override(config, o);
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PFRNet camouflaged object detection: train, evaluate, predict, verify"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  bool resume = false;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a flat key = value config");
  train_cmd->add_option("--config", config_path, "Config file (profile = desk|full plus overrides); default desk");
  train_cmd->add_option("--override", overrides, "key=value, applied after the file")->take_all();
  train_cmd->add_option("--run-dir", run_dir, "Existing or new run directory (default: under $PFRNET_RUN_ROOT)");
  train_cmd->add_flag("--resume", resume, "Continue from <run-dir>/state");
  train_cmd->add_flag("--quiet", quiet, "No per-step progress");

  std::string checkpoint;
  std::string data;
  std::string out;
  int resolution = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Predict and score a dataset (Imgs/ + GT/)");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data, "Dataset root")->required();
  eval_cmd->add_option("--out", out, "Output directory for predictions and the report")->required();
  eval_cmd->add_option("--resolution", resolution, "Network input size (0: from checkpoint)");

  std::string image;
  auto* predict_cmd = app.add_subcommand("predict", "Write the 8-bit probability map of one image");
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--image", image, "Input image")->required();
  predict_cmd->add_option("--out", out, "Output PNG")->required();
  predict_cmd->add_option("--resolution", resolution, "Network input size (0: from checkpoint)");

  std::string values = "0.2,0.3,0.4,0.5,0.6";
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "Train and score one run per lambda");
  sweep_cmd->add_option("--config", config_path, "Config file; default desk");
  sweep_cmd->add_option("--override", overrides, "key=value, applied after the file")->take_all();
  sweep_cmd->add_option("--values", values, "Comma-separated lambda values")->capture_default_str();
  sweep_cmd->add_option("--jobs", jobs, "Rows trained concurrently")->capture_default_str();
  sweep_cmd->add_option("--out", out, "Sweep directory (default: under $PFRNET_RUN_ROOT)");

  uint64_t seed = 7;
  int count = 8;
  int size = 64;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic camouflage dataset (Imgs/ + GT/)");
  synth_cmd->add_option("--out", out, "Dataset root")->required();
  synth_cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--n", count, "Number of scenes")->capture_default_str();
  synth_cmd->add_option("--size", size, "Side length, a multiple of 32")->capture_default_str();

  std::string shape_backbone = "res2net50";
  auto* check_cmd = app.add_subcommand("self-check", "Run the invariant battery");
  check_cmd->add_option("--shape-backbone", shape_backbone, "Backbone for the shape suite")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto config = read_config(config_path, overrides);
      pfrnet::TrainOptions opts;
      opts.run_dir = run_dir;
      opts.resume = resume;
      opts.progress = quiet ? nullptr : &std::cout;
      const auto samples = pfrnet::training_data(config, &std::cerr);
      const auto result = pfrnet::train(config, samples, opts);
      std::cout << "run directory: " << result.run_dir.string() << '\n'
                << "final checkpoint: " << result.final_checkpoint.string() << '\n'
                << "best checkpoint: " << result.best_checkpoint.string() << '\n';
      if (!result.log.steps.empty()) {
        std::cout << "loss: step 1 " << result.log.steps.front().total << ", final " << result.log.steps.back().total
                  << '\n';
      }
    } else if (*eval_cmd) {
      pfrnet::EvalOptions opts;
      opts.resolution = resolution;
      const auto report = pfrnet::evaluate(checkpoint, data, out, opts);
      std::cout << pfrnet::report_table(report) << pfrnet::report_json(report) << '\n';
    } else if (*predict_cmd) {
      auto net = pfrnet::load_network(checkpoint);
      if (resolution == 0) {
        const auto meta = nlohmann::json::parse(pfrnet::load_checkpoint_metadata(checkpoint));
        resolution = meta.value("resolution", 0);
      }
      pfrnet::write_gray8(out, pfrnet::predict_image(net, pfrnet::read_rgb(image), resolution));
      std::cout << "wrote " << out << '\n';
    } else if (*sweep_cmd) {
      const auto config = read_config(config_path, overrides);
      pfrnet::SweepOptions opts;
      opts.out_dir = out;
      opts.jobs = jobs;
      opts.progress = &std::cerr;
      const auto table = pfrnet::sweep_lambda(config, parse_values(values), opts);
      std::cout << table.text();
      for (const auto& row : table.rows) {
        if (!row.report) return 1;
      }
    } else if (*synth_cmd) {
      pfrnet::save_dataset(pfrnet::synth_generate(seed, count, size), out);
      std::cout << "wrote " << count << " scenes to " << out << '\n';
    } else if (*check_cmd) {
      pfrnet::SelfCheckOptions opts;
      opts.shape_backbone = shape_backbone;
      const auto report = pfrnet::self_check(opts);
      std::cout << report.text();
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
