#include "pfrnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <random>

#include "pfrnet/blocks.hpp"
#include "pfrnet/image_io.hpp"

namespace pfrnet {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out[e.path().stem().string()] = e.path();
  }
  return out;
}

// Smooth noise: a coarse Gaussian grid bilinearly upsampled, plus a little
// pixel-level noise. Roughly zero mean, unit-ish amplitude.
std::vector<double> smooth_noise(std::mt19937_64& rng, int size, int cell) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int g = size / cell + 2;
  std::vector<double> grid(static_cast<size_t>(g) * g);
  for (auto& v : grid) v = normal(rng);
  std::vector<double> out(static_cast<size_t>(size) * size);
  for (int r = 0; r < size; ++r) {
    const double gy = static_cast<double>(r) / cell;
    const int y0 = static_cast<int>(gy);
    const double ty = gy - y0;
    for (int c = 0; c < size; ++c) {
      const double gx = static_cast<double>(c) / cell;
      const int x0 = static_cast<int>(gx);
      const double tx = gx - x0;
      auto at = [&](int y, int x) { return grid[static_cast<size_t>(y) * g + x]; };
      const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                       ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
      out[static_cast<size_t>(r) * size + c] = v + 0.3 * normal(rng);
    }
  }
  return out;
}

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double cs = std::cos(angle);
    const double sn = std::sin(angle);
    const double u = (dx * cs + dy * sn) / rx;
    const double v = (-dx * sn + dy * cs) / ry;
    return u * u + v * v <= 1.0;
  }
};

std::vector<uint8_t> draw_blob(std::mt19937_64& rng, int size, const SynthOptions& options) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 3);
  const auto n = static_cast<size_t>(size) * static_cast<size_t>(size);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Ellipse> parts(static_cast<size_t>(count(rng)));
    const double cy = size * (0.3 + 0.4 * unit(rng));
    const double cx = size * (0.3 + 0.4 * unit(rng));
    for (auto& e : parts) {
      e.cy = cy + size * 0.15 * (unit(rng) - 0.5);
      e.cx = cx + size * 0.15 * (unit(rng) - 0.5);
      e.ry = size * (0.1 + 0.2 * unit(rng));
      e.rx = size * (0.1 + 0.2 * unit(rng));
      e.angle = std::numbers::pi * unit(rng);
    }
    std::vector<uint8_t> mask(n, 0);
    size_t fg = 0;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const bool in = std::any_of(parts.begin(), parts.end(),
                                    [&](const Ellipse& e) { return e.contains(r + 0.5, c + 0.5); });
        mask[static_cast<size_t>(r) * size + c] = in ? 1 : 0;
        fg += in ? 1 : 0;
      }
    }
    const double frac = static_cast<double>(fg) / static_cast<double>(n);
    if (frac >= options.min_foreground && frac <= options.max_foreground) return mask;
  }
  throw std::runtime_error("synth_generate: could not draw a blob within the foreground bounds");
}

Sample make_scene(uint64_t seed, int index, int size, const SynthOptions& options) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(index))));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto mask = draw_blob(rng, size, options);
  const auto n = static_cast<size_t>(size) * static_cast<size_t>(size);
  const int bg_cell = std::max(2, size / 8);
  const int fg_cell = std::max(2, size / 10);
  const double amplitude = 0.08 + 0.04 * unit(rng);
  // Object texture amplitude within the contrast budget of the background's.
  const double fg_amplitude = amplitude * (1.0 + options.max_contrast * (2.0 * unit(rng) - 1.0));

  auto image = torch::empty({1, 3, size, size}, torch::kFloat);
  auto acc = image.accessor<float, 4>();
  for (int ch = 0; ch < 3; ++ch) {
    const double base = 0.3 + 0.4 * unit(rng);
    const double shift = (unit(rng) < 0.5 ? -1.0 : 1.0) * options.max_contrast * (0.4 + 0.6 * unit(rng));
    const double fg_base = base * (1.0 + shift);
    const auto bg_tex = smooth_noise(rng, size, bg_cell);
    const auto fg_tex = smooth_noise(rng, size, fg_cell);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const auto i = static_cast<size_t>(r) * size + c;
        const double v = mask[i] ? fg_base + fg_amplitude * fg_tex[i] : base + amplitude * bg_tex[i];
        acc[0][ch][r][c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  auto m = torch::empty({1, 1, size, size}, torch::kFloat);
  auto macc = m.accessor<float, 4>();
  for (size_t i = 0; i < n; ++i) {
    macc[0][0][static_cast<int64_t>(i) / size][static_cast<int64_t>(i) % size] = mask[i] ? 1.0F : 0.0F;
  }
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%04d", index);
  return {image, m, id};
}

}  // namespace

void Sample::validate() const {
  require_channels(image, 3, "sample image");
  require_channels(mask, 1, "sample mask");
  require_same_spatial(image, mask, "sample");
  if (image.size(0) != 1 || mask.size(0) != 1) throw ShapeError("sample: batch extent must be 1");
  if (!all_finite(image) || image.min().item<double>() < 0.0 || image.max().item<double>() > 1.0) {
    throw std::invalid_argument("sample " + id + ": image values must lie in [0, 1]");
  }
  if (!torch::logical_or(mask == 0, mask == 1).all().item<bool>()) {
    throw std::invalid_argument("sample " + id + ": mask must be binary");
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& root, const LoadOptions& options) {
  const auto img_dir = root / "Imgs";
  const auto gt_dir = root / "GT";
  if (!std::filesystem::is_directory(img_dir) || !std::filesystem::is_directory(gt_dir)) {
    throw std::runtime_error("dataset " + root.string() + " must contain Imgs/ and GT/");
  }
  const auto images = list_images(img_dir);
  const auto masks = list_images(gt_dir);
  std::vector<std::string> offenders;
  for (const auto& [stem, _] : images) {
    if (!masks.count(stem)) offenders.push_back("Imgs/" + stem + " has no mask");
  }
  for (const auto& [stem, _] : masks) {
    if (!images.count(stem)) offenders.push_back("GT/" + stem + " has no image");
  }
  if (!offenders.empty()) {
    std::string msg = "dataset " + root.string() + ": unpaired files";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw std::runtime_error(msg);
  }
  if (images.empty()) throw std::runtime_error("dataset " + root.string() + " is empty");

  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const auto& [stem, img_path] : images) {
    Sample s;
    s.id = stem;
    s.image = read_rgb(img_path);
    const auto gray = read_gray8(masks.at(stem));
    auto m = torch::from_blob(const_cast<uint8_t*>(gray.pixels.data()), {1, 1, gray.rows, gray.cols}, torch::kUInt8)
                 .ge(128)
                 .to(torch::kFloat);
    if (m.size(2) != s.image.size(2) || m.size(3) != s.image.size(3)) {
      if (options.warnings) {
        *options.warnings << "warning: mask " << stem << ' ' << shape_string(m) << " resized to image "
                          << shape_string(s.image) << '\n';
      }
      m = resize_nearest(m, s.image.size(2), s.image.size(3));
    }
    s.mask = m.contiguous();
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "Imgs");
  std::filesystem::create_directories(root / "GT");
  for (const auto& s : samples) {
    write_rgb(root / "Imgs" / (s.id + ".png"), s.image);
    write_gray8(root / "GT" / (s.id + ".png"), to_gray8(s.mask));
  }
}

std::vector<Sample> synth_generate(uint64_t seed, int n, int size, const SynthOptions& options) {
  if (n < 1) throw std::invalid_argument("synth_generate: n must be at least 1");
  if (size < 32 || size % 32 != 0) {
    throw std::invalid_argument("synth_generate: size must be a positive multiple of 32, got " + std::to_string(size));
  }
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(make_scene(seed, i, size, options));
  return out;
}

Sample flip_horizontal(const Sample& sample) {
  return {sample.image.flip({3}), sample.mask.flip({3}), sample.id};
}

bool augment_flips(uint64_t seed) { return (splitmix64(seed) >> 63) != 0; }

Sample augment(const Sample& sample, uint64_t seed, int resolution, bool flip) {
  if (resolution < 1) throw std::invalid_argument("augment: resolution must be positive");
  Sample s = flip && augment_flips(seed) ? flip_horizontal(sample) : sample;
  s.image = resize_to(s.image, resolution, resolution).clamp(0.0, 1.0);
  s.mask = resize_nearest(s.mask, resolution, resolution);
  return s;
}

}  // namespace pfrnet
