#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pfrnet/harness.hpp"
#include "pfrnet/losses.hpp"

namespace pfrnet {
namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<size_t> epoch_order(uint64_t seed, int epoch, size_t n) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(mix(seed, static_cast<uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// torch::manual_seed and module construction share the global generator.
std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Progress {
  int64_t step = 0;
  double best = std::numeric_limits<double>::infinity();
  double epoch_sum = 0.0;
  int epoch_count = 0;
};

void save_state(const std::filesystem::path& dir, Pfrnet& net, torch::optim::Adam& optimizer, const Progress& p,
                const TrainLog& log) {
  std::filesystem::create_directories(dir);
  save_network(net, dir / "model.pt");
  torch::save(optimizer, (dir / "optimizer.pt").string());
  nlohmann::json j;
  j["step"] = p.step;
  j["best"] = std::isfinite(p.best) ? nlohmann::json(p.best) : nlohmann::json(nullptr);
  j["epoch_sum"] = p.epoch_sum;
  j["epoch_count"] = p.epoch_count;
  write_text(dir / "progress.json", j.dump());
  write_text(dir / "log.json", log.json());
}

std::string checkpoint_metadata(const TrainConfig& config, int64_t step) {
  nlohmann::json j;
  j["resolution"] = config.resolution;
  j["seed"] = config.seed;
  j["step"] = step;
  return j.dump();
}

}  // namespace

std::string TrainLog::csv() const {
  std::ostringstream out;
  out << std::setprecision(9) << "step,epoch,lr,total,structure1,structure2,structure3,dice\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.epoch << ',' << s.lr << ',' << s.total << ',' << s.structure[0] << ','
        << s.structure[1] << ',' << s.structure[2] << ',' << s.dice << '\n';
  }
  return out.str();
}

std::string TrainLog::json() const {
  nlohmann::json j;
  j["wall_seconds"] = wall_seconds;
  j["epoch_lr"] = epoch_lr;
  auto& arr = j["steps"] = nlohmann::json::array();
  for (const auto& s : steps) {
    arr.push_back({{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr}, {"total", s.total},
                   {"structure", s.structure}, {"dice", s.dice}});
  }
  return j.dump();
}

TrainLog TrainLog::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainLog log;
  log.wall_seconds = j.at("wall_seconds").get<double>();
  log.epoch_lr = j.at("epoch_lr").get<std::vector<double>>();
  for (const auto& s : j.at("steps")) {
    log.steps.push_back({s.at("step").get<int64_t>(), s.at("epoch").get<int>(), s.at("lr").get<double>(),
                         s.at("total").get<double>(), s.at("structure").get<std::array<double, 3>>(),
                         s.at("dice").get<double>()});
  }
  return log;
}

TrainResult train(const TrainConfig& config, const std::vector<Sample>& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  for (const auto& s : dataset) s.validate();

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.run_dir = options.run_dir.empty() ? make_run_dir(config) : options.run_dir;
  std::filesystem::create_directories(result.run_dir);
  result.final_checkpoint = result.run_dir / "checkpoint_final.pt";
  result.best_checkpoint = result.run_dir / "checkpoint_best.pt";
  const auto state_dir = result.run_dir / "state";

  Pfrnet net{nullptr};
  {
    std::lock_guard<std::mutex> lock(init_mutex());
    torch::manual_seed(config.seed);
    net = Pfrnet(config.network());
  }
  net->train();
  torch::optim::Adam optimizer(
      net->parameters(),
      torch::optim::AdamOptions(config.lr0).betas({0.9, 0.999}).eps(1e-8).weight_decay(0.0));

  Progress progress;
  TrainLog log;
  double prior_wall = 0.0;
  if (options.resume) {
    auto restored = load_network(state_dir / "model.pt");
    torch::NoGradGuard no_grad;
    auto src = restored->named_parameters();
    for (auto& p : net->named_parameters()) p.value().copy_(src[p.key()]);
    auto src_buf = restored->named_buffers();
    for (auto& b : net->named_buffers()) b.value().copy_(src_buf[b.key()]);
    torch::load(optimizer, (state_dir / "optimizer.pt").string());
    const auto j = nlohmann::json::parse(read_text(state_dir / "progress.json"));
    progress.step = j.at("step").get<int64_t>();
    progress.best = j.at("best").is_null() ? std::numeric_limits<double>::infinity() : j.at("best").get<double>();
    progress.epoch_sum = j.at("epoch_sum").get<double>();
    progress.epoch_count = j.at("epoch_count").get<int>();
    log = TrainLog::from_json(read_text(state_dir / "log.json"));
    prior_wall = log.wall_seconds;
  } else {
    write_text(result.run_dir / "config.txt", to_text(config));
  }

  const auto n = dataset.size();
  const auto batch = static_cast<size_t>(config.batch_size);
  const auto steps_per_epoch = static_cast<int64_t>((n + batch - 1) / batch);
  int64_t total_steps = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  auto finish_epoch = [&](int epoch) {
    if (progress.epoch_count == 0) return;
    const double mean = progress.epoch_sum / progress.epoch_count;
    if (mean < progress.best) {
      progress.best = mean;
      save_network(net, result.best_checkpoint, checkpoint_metadata(config, progress.step));
      if (options.progress) *options.progress << "epoch " << epoch << " best mean loss " << mean << '\n';
    }
    progress.epoch_sum = 0.0;
    progress.epoch_count = 0;
  };

  while (progress.step < total_steps) {
    const int epoch = static_cast<int>(progress.step / steps_per_epoch);
    const auto b = static_cast<size_t>(progress.step % steps_per_epoch);
    const double lr = lr_at_epoch(config, epoch);
    if (log.epoch_lr.size() <= static_cast<size_t>(epoch)) log.epoch_lr.resize(static_cast<size_t>(epoch) + 1, lr);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }

    const auto order = epoch_order(config.seed, epoch, n);
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> masks;
    for (size_t k = b * batch; k < std::min(n, (b + 1) * batch); ++k) {
      const auto idx = order[k];
      const auto s = augment(dataset[idx], mix(mix(config.seed, static_cast<uint64_t>(epoch)), idx),
                             config.resolution, config.flip);
      images.push_back(s.image);
      masks.push_back(s.mask);
    }
    const auto image = torch::cat(images, 0);
    const auto mask = torch::cat(masks, 0);

    optimizer.zero_grad();
    const auto outputs = net->forward(image);
    const auto losses = total_loss(outputs, mask);
    const double total = losses.total.item<double>();
    StepRecord rec{progress.step + 1, epoch, lr, total,
                   {losses.structure[0].item<double>(), losses.structure[1].item<double>(),
                    losses.structure[2].item<double>()},
                   losses.dice.item<double>()};
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << rec.step << " (epoch " << epoch << "): total " << total
          << ", structure " << rec.structure[0] << '/' << rec.structure[1] << '/' << rec.structure[2]
          << ", dice " << rec.dice;
      throw std::runtime_error(msg.str());
    }
    losses.total.backward();
    optimizer.step();

    ++progress.step;
    progress.epoch_sum += total;
    ++progress.epoch_count;
    log.steps.push_back(rec);
    if (options.progress) {
      *options.progress << "step " << rec.step << '/' << total_steps << " epoch " << epoch << " lr " << lr
                        << " loss " << total << '\n';
    }
    const bool epoch_done = progress.step % steps_per_epoch == 0;
    if (epoch_done || progress.step == total_steps) finish_epoch(epoch);

    if (options.stop_after > 0 && progress.step >= options.stop_after && progress.step < total_steps) {
      log.wall_seconds = prior_wall + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      save_state(state_dir, net, optimizer, progress, log);
      result.log = log;
      result.net = net;
      return result;
    }
  }

  log.wall_seconds = prior_wall + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_network(net, result.final_checkpoint, checkpoint_metadata(config, progress.step));
  if (!std::filesystem::exists(result.best_checkpoint)) std::filesystem::copy_file(result.final_checkpoint, result.best_checkpoint);
  save_state(state_dir, net, optimizer, progress, log);
  write_text(result.run_dir / "train_log.csv", log.csv());
  result.log = log;
  result.net = net;
  result.finished = true;
  return result;
}

}  // namespace pfrnet
