#pragma once

#include <torch/torch.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("pfrnet-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline torch::Tensor randn(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn(shape, gen, dtype);
}

inline torch::Tensor rand(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::rand(shape, gen, dtype);
}

inline double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

inline bool same_size(const torch::Tensor& t, std::initializer_list<int64_t> sizes) {
  return t.sizes().equals(sizes);
}

}  // namespace testing
