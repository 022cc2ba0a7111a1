#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfrnet/image_io.hpp"

namespace pfrnet {

// Row-major 2-D map with values in [0, 1].
class GrayMap {
 public:
  GrayMap() = default;
  // Throws std::invalid_argument on a size mismatch or a value outside [0, 1].
  GrayMap(int rows, int cols, std::vector<double> values);

  static GrayMap filled(int rows, int cols, double value);
  // 8-bit prediction map: value / 255.
  static GrayMap from_prediction(const Gray8& image);
  // 8-bit ground truth: 1 where value >= 128, else 0.
  static GrayMap from_mask(const Gray8& image);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return values_.size(); }
  double at(int r, int c) const { return values_[static_cast<size_t>(r) * static_cast<size_t>(cols_) + static_cast<size_t>(c)]; }
  std::span<const double> values() const { return values_; }

  // Bilinear resize (used to bring predictions onto the GT grid).
  GrayMap resized(int rows, int cols) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

// Mean absolute error.
double mae(const GrayMap& pred, const GrayMap& gt);

// Structure measure, alpha = 0.5: object-aware plus region-aware similarity.
// Empty GT scores 1 - mean(pred); full GT scores mean(pred).
double s_measure(const GrayMap& pred, const GrayMap& gt);

// Mean enhanced-alignment score over the thresholds k/255, k = 1..255, applied
// to the 8-bit quantized prediction.
double e_measure(const GrayMap& pred, const GrayMap& gt);

// Weighted F-measure (beta^2 = 1) with distance-weighted error allocation.
double weighted_f(const GrayMap& pred, const GrayMap& gt);

struct ImageMetrics {
  std::string id;
  double s_alpha = 0.0;
  double e_phi = 0.0;
  double f_beta_w = 0.0;
  double mae = 0.0;
};

ImageMetrics evaluate_pair(const std::string& id, const GrayMap& pred, const GrayMap& gt);

struct MetricReport {
  std::string dataset;
  std::string model;
  std::vector<ImageMetrics> per_image;
  double s_alpha = 0.0;
  double e_phi = 0.0;
  double f_beta_w = 0.0;
  double mae = 0.0;

  size_t n_images() const { return per_image.size(); }
};

// Fills the dataset means from per_image.
MetricReport summarize(std::string dataset, std::string model, std::vector<ImageMetrics> per_image);

// Matches prediction and GT files by stem. Predictions are resized to the GT
// resolution when they differ. Throws listing any unmatched stems, or when the
// GT directory holds no images.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              const std::string& dataset = "", const std::string& model = "");

double round3(double v);

// Aggregate record with exactly: dataset, model, s_alpha, e_phi, f_beta_w, mae, n_images.
std::string report_json(const MetricReport& report);
std::string report_table(const MetricReport& report);

// Writes metrics.json, metrics.txt and per_image.csv under `dir`.
void write_report(const MetricReport& report, const std::filesystem::path& dir);

}  // namespace pfrnet
