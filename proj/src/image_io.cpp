#include "pfrnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

namespace pfrnet {
namespace {

void prepare_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  prepare_parent(path);
  if (!cv::imwrite(path.string(), mat)) throw std::runtime_error("cannot write image " + path.string());
}

}  // namespace

Gray8 read_gray8(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw std::runtime_error("cannot read image " + path.string());
  Gray8 out{mat.rows, mat.cols, {}};
  out.pixels.resize(static_cast<size_t>(mat.rows) * static_cast<size_t>(mat.cols));
  for (int r = 0; r < mat.rows; ++r) {
    const auto* row = mat.ptr<uint8_t>(r);
    std::copy(row, row + mat.cols, out.pixels.begin() + static_cast<std::ptrdiff_t>(r) * mat.cols);
  }
  return out;
}

void write_gray8(const std::filesystem::path& path, const Gray8& image) {
  if (image.pixels.size() != static_cast<size_t>(image.rows) * static_cast<size_t>(image.cols)) {
    throw std::invalid_argument("write_gray8: pixel buffer does not match dimensions");
  }
  cv::Mat mat(image.rows, image.cols, CV_8UC1, const_cast<uint8_t*>(image.pixels.data()));
  write_mat(path, mat);
}

torch::Tensor read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat).div_(255.0).contiguous();
}

void write_rgb(const std::filesystem::path& path, const torch::Tensor& image) {
  auto t = image.dim() == 4 ? image[0] : image;
  if (t.dim() != 3 || t.size(0) != 3) throw std::invalid_argument("write_rgb: expected 3 channels");
  auto hwc = (t.detach().to(torch::kCPU).to(torch::kFloat).clamp(0, 1) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write_mat(path, bgr);
}

Gray8 to_gray8(const torch::Tensor& map) {
  auto t = map.detach().to(torch::kCPU).to(torch::kFloat);
  while (t.dim() > 2) t = t[0];
  if (t.dim() != 2) throw std::invalid_argument("to_gray8: expected a single-channel map");
  auto q = (t.clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
  Gray8 out{static_cast<int>(q.size(0)), static_cast<int>(q.size(1)), {}};
  const auto* p = q.data_ptr<uint8_t>();
  out.pixels.assign(p, p + q.numel());
  return out;
}

bool is_image_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace pfrnet
