#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pfrnet/data.hpp"
#include "pfrnet/metrics.hpp"
#include "pfrnet/network.hpp"

namespace pfrnet {

// Environment variable naming the directory under which run directories are created.
inline constexpr const char* kRunRootEnv = "PFRNET_RUN_ROOT";

struct TrainConfig {
  double lr0 = 1e-4;
  int lr_decay_every = 50;  // epochs
  double lr_decay_factor = 10.0;
  int batch_size = 36;
  int epochs = 100;
  double lambda = 0.5;
  AblationVariant variant = AblationVariant::kFull;
  std::string backbone = "res2net50";
  std::string pretrained;  // libtorch archive for the backbone; empty = random init
  HeadResidual head_residual = HeadResidual::kFromY;
  int resolution = 352;
  uint64_t seed = 0;
  int64_t max_steps = 0;  // 0 runs every epoch
  bool flip = true;       // random horizontal flips
  // Training data root (Imgs/ + GT/). Empty selects the synthetic generator.
  std::string data;
  int synth_count = 8;
  int synth_size = 64;
  // Dataset scored by sweep_lambda. Empty scores the training samples.
  std::string eval_data;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;

  // Full-scale recipe: Res2Net-50, batch 36, 100 epochs at 352 x 352.
  static TrainConfig full();
  // Desk scale: stub backbone, 8 synthetic 64 x 64 scenes, batch 4, 200 steps at
  // a constant 1e-4, no flips (the desk run memorizes a fixed set).
  static TrainConfig desk();
  // "full" or "desk".
  static TrainConfig profile(const std::string& name);

  NetworkConfig network() const;
};

// Applies one "key=value" assignment. Throws on an unknown key or bad value.
void apply_override(TrainConfig& config, const std::string& assignment);

// Flat "key = value" text, '#' starts a comment. A "profile" key selects the
// starting point (default "full"); the other keys are applied on top in order.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
// Round-trips through parse_train_config.
std::string to_text(const TrainConfig& config);

// FNV-1a over to_text(config).
uint64_t config_hash(const TrainConfig& config);

// lr0 / factor^floor(epoch / every), epochs counted from 0.
double lr_at_epoch(const TrainConfig& config, int epoch);

// <root>/<hash>-<YYYYmmdd-HHMMSS>, root from PFRNET_RUN_ROOT or "runs". Created.
std::filesystem::path make_run_dir(const TrainConfig& config, const std::string& prefix = "");

// Training samples named by config.data, or the synthetic set.
std::vector<Sample> training_data(const TrainConfig& config, std::ostream* warnings = nullptr);

struct StepRecord {
  int64_t step = 0;  // 1-based
  int epoch = 0;     // 0-based
  double lr = 0.0;
  double total = 0.0;
  std::array<double, 3> structure{};
  double dice = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_lr;  // indexed by epoch
  double wall_seconds = 0.0;

  std::string csv() const;
  std::string json() const;
  static TrainLog from_json(const std::string& text);
};

struct TrainOptions {
  // Empty picks make_run_dir(config).
  std::filesystem::path run_dir;
  // Continue from <run_dir>/state instead of starting fresh.
  bool resume = false;
  // Save state and return once this many steps have run in total (0 = no limit).
  int64_t stop_after = 0;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  TrainLog log;
  Pfrnet net{nullptr};
  bool finished = false;  // false when stopped early by stop_after
};

// Adam (0.9, 0.999, 1e-8, no weight decay) on the staircase schedule. Data
// order and augmentation are pure functions of (seed, epoch, index), so runs
// and resumed runs reproduce. Throws std::runtime_error on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<Sample>& dataset, const TrainOptions& options = {});

struct EvalOptions {
  // Network input size. 0 takes the checkpoint's training resolution, falling
  // back to the image size rounded to a multiple of 32.
  int resolution = 0;
  std::string dataset_name;
  std::string model_name;
  std::ostream* progress = nullptr;
};

// Predicts every image under <dataset_root>/Imgs, writes 8-bit maps at GT
// resolution to <out_dir>/predictions, scores them against <dataset_root>/GT and
// writes the report to out_dir.
MetricReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_root,
                      const std::filesystem::path& out_dir, const EvalOptions& options = {});

// In-memory variant; predictions are 8-bit quantized as when written.
MetricReport evaluate_samples(Pfrnet& net, const std::vector<Sample>& samples, int resolution,
                              const std::string& dataset_name = "", const std::string& model_name = "");

// Foreground probability at the image's own resolution: one 8-bit map.
Gray8 predict_image(Pfrnet& net, const FeatureMap& image, int resolution);

inline const std::vector<double> kDefaultLambdas{0.2, 0.3, 0.4, 0.5, 0.6};

struct SweepRow {
  double lambda = 0.0;
  std::optional<MetricReport> report;
  std::string error;
  std::filesystem::path run_dir;
};

struct SweepTable {
  std::string dataset;
  std::vector<SweepRow> rows;

  // One row per lambda: lambda, S_alpha, E_phi, F_beta_w, M.
  std::string text() const;
  std::string csv() const;
};

struct SweepOptions {
  std::filesystem::path out_dir;  // empty picks make_run_dir(base, "sweep-")
  int jobs = 1;                   // rows trained concurrently
  std::ostream* progress = nullptr;
};

// One train + evaluate per lambda. A failing row records its error and the
// sweep continues.
SweepTable sweep_lambda(const TrainConfig& base, const std::vector<double>& values = kDefaultLambdas,
                        const SweepOptions& options = {});

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelfCheckReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string text() const;
};

struct SelfCheckOptions {
  // The splitter under test in the dependency-isolation check.
  std::function<BranchSet(const FeatureMap&)> split = split4;
  // Shape suite backbone; res2net50 by default.
  std::string shape_backbone = "res2net50";
  std::ostream* progress = nullptr;
};

SelfCheckReport self_check(const SelfCheckOptions& options = {});

// Individual checks, also used by self_check.

// max over three perturbation directions supported on `silent` branches of
// |dz_target/dy|, by central differences in double precision. Zero means
// z_target does not depend on those branches.
double branch_sensitivity(BranchInteract& interact, const std::function<BranchSet(const FeatureMap&)>& split,
                          int target, const std::vector<int>& branches, uint64_t seed);

// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||) for a scalar
// function of one double tensor, step 1e-5.
double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x);

}  // namespace pfrnet
