#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "pfrnet/harness.hpp"

namespace pfrnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw std::invalid_argument("config key '" + key + "': bad value '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("TrainConfig: " + msg); };
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("lr0 must be positive");
  if (lr_decay_every < 1) fail("lr_decay_every must be at least 1");
  if (!(lr_decay_factor >= 1.0)) fail("lr_decay_factor must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (max_steps < 0) fail("max_steps must be non-negative");
  if (resolution < 32 || resolution % 32 != 0) fail("resolution must be a positive multiple of 32");
  if (data.empty() && synth_count < 1) fail("synth_count must be at least 1");
  DecoderConfig{lambda}.validate();
  BackboneSpec::from_name(backbone);
}

TrainConfig TrainConfig::full() { return {}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.backbone = "stub";
  c.batch_size = 4;
  c.epochs = 100;
  c.lr_decay_every = 100;
  c.resolution = 64;
  c.synth_count = 8;
  c.synth_size = 64;
  c.max_steps = 200;
  c.flip = false;
  return c;
}

TrainConfig TrainConfig::profile(const std::string& name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw std::invalid_argument("unknown config profile '" + name + "' (expected full or desk)");
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.backbone = BackboneSpec::from_name(backbone);
  if (!pretrained.empty()) n.backbone.pretrained_weights_path = pretrained;
  n.variant = variant;
  n.decoder.lambda = lambda;
  n.head_residual = head_residual;
  return n;
}

void apply_override(TrainConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  const auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  if (key == "lr0") c.lr0 = parse_number<double>(key, value);
  else if (key == "lr_decay_every") c.lr_decay_every = parse_number<int>(key, value);
  else if (key == "lr_decay_factor") c.lr_decay_factor = parse_number<double>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
  else if (key == "epochs") c.epochs = parse_number<int>(key, value);
  else if (key == "lambda") c.lambda = parse_number<double>(key, value);
  else if (key == "variant") c.variant = parse_variant(value);
  else if (key == "backbone") c.backbone = value;
  else if (key == "pretrained") c.pretrained = value;
  else if (key == "head_residual") c.head_residual = parse_head_residual(value);
  else if (key == "resolution") c.resolution = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<uint64_t>(key, value);
  else if (key == "max_steps") c.max_steps = parse_number<int64_t>(key, value);
  else if (key == "flip") c.flip = parse_bool(key, value);
  else if (key == "data") c.data = value;
  else if (key == "synth_count") c.synth_count = parse_number<int>(key, value);
  else if (key == "synth_size") c.synth_size = parse_number<int>(key, value);
  else if (key == "eval_data") c.eval_data = value;
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& text) {
  std::vector<std::string> assignments;
  std::string profile = "full";
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (trim(line.substr(0, eq)) == "profile") profile = trim(line.substr(eq + 1));
    else assignments.push_back(line);
  }
  auto config = TrainConfig::profile(profile);
  for (const auto& a : assignments) apply_override(config, a);
  return config;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream out;
  out << "lr0 = " << format_double(c.lr0) << '\n'
      << "lr_decay_every = " << c.lr_decay_every << '\n'
      << "lr_decay_factor = " << format_double(c.lr_decay_factor) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "epochs = " << c.epochs << '\n'
      << "lambda = " << format_double(c.lambda) << '\n'
      << "variant = " << to_string(c.variant) << '\n'
      << "backbone = " << c.backbone << '\n'
      << "pretrained = " << c.pretrained << '\n'
      << "head_residual = " << to_string(c.head_residual) << '\n'
      << "resolution = " << c.resolution << '\n'
      << "seed = " << c.seed << '\n'
      << "max_steps = " << c.max_steps << '\n'
      << "flip = " << (c.flip ? "true" : "false") << '\n'
      << "data = " << c.data << '\n'
      << "synth_count = " << c.synth_count << '\n'
      << "synth_size = " << c.synth_size << '\n'
      << "eval_data = " << c.eval_data << '\n';
  return out.str();
}

uint64_t config_hash(const TrainConfig& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: epoch must be non-negative");
  return config.lr0 / std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

std::filesystem::path make_run_dir(const TrainConfig& config, const std::string& prefix) {
  const char* env = std::getenv(kRunRootEnv);
  const std::filesystem::path root = env && *env ? env : "runs";
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << prefix << std::hex << std::setw(16) << std::setfill('0') << config_hash(config) << '-'
       << std::put_time(&tm, "%Y%m%d-%H%M%S");
  auto dir = root / name.str();
  for (int k = 2; std::filesystem::exists(dir); ++k) dir = root / (name.str() + "-" + std::to_string(k));
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<Sample> training_data(const TrainConfig& config, std::ostream* warnings) {
  if (!config.data.empty()) return load_dataset(config.data, LoadOptions{warnings});
  return synth_generate(config.seed, config.synth_count, config.synth_size);
}

}  // namespace pfrnet
