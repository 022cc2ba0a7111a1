#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace pfrnet {

struct Gray8 {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> pixels;  // row-major
};

// Reads any OpenCV-decodable file as 8-bit grayscale. Throws on failure.
Gray8 read_gray8(const std::filesystem::path& path);
void write_gray8(const std::filesystem::path& path, const Gray8& image);

// (1, 3, H, W) float in [0, 1], RGB channel order.
torch::Tensor read_rgb(const std::filesystem::path& path);
// Writes a (1, 3, H, W) or (3, H, W) tensor in [0, 1] as 8-bit RGB.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);

// (1, 1, H, W) or (H, W) tensor in [0, 1] -> rounded 8-bit gray.
Gray8 to_gray8(const torch::Tensor& map);

// True for extensions the dataset readers pick up (.png, .jpg, .jpeg, .bmp).
bool is_image_file(const std::filesystem::path& path);

}  // namespace pfrnet
