#include "pfrnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <opencv2/imgproc.hpp>
#include <sstream>
#include <stdexcept>

namespace pfrnet {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_same_shape(const GrayMap& a, const GrayMap& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

bool is_fg(double g) { return g > 0.5; }

// ---- S-measure ----

// 2 mu / (mu^2 + 1 + sigma) over the pixels where `mask` is set; sigma is the
// unbiased standard deviation.
double object_similarity(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mu = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sigma = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    sigma = std::sqrt(ss / (n - 1.0));
  }
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kEps);
}

double s_object(const GrayMap& pred, const GrayMap& gt) {
  std::vector<double> fg;
  std::vector<double> bg;
  double gt_sum = 0.0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const double p = pred.values()[i];
    if (is_fg(gt.values()[i])) {
      fg.push_back(p);
      gt_sum += 1.0;
    } else {
      bg.push_back(1.0 - p);
    }
  }
  const double u = gt_sum / static_cast<double>(gt.size());
  return u * object_similarity(fg) + (1.0 - u) * object_similarity(bg);
}

// SSIM-style similarity of one rectangular block [r0, r1) x [c0, c1).
double block_ssim(const GrayMap& pred, const GrayMap& gt, int r0, int r1, int c0, int c1) {
  const int64_t n = static_cast<int64_t>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      mx += pred.at(r, c);
      my += gt.at(r, c);
    }
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      const double dx = pred.at(r, c) - mx;
      const double dy = gt.at(r, c) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  if (n > 1) {
    const double d = static_cast<double>(n - 1);
    sxx /= d;
    syy /= d;
    sxy /= d;
  } else {
    sxx = syy = sxy = 0.0;
  }
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const GrayMap& pred, const GrayMap& gt) {
  const int h = gt.rows();
  const int w = gt.cols();
  // Foreground centroid (banker's rounding), shifted to a 1-based split index.
  double sum_r = 0.0;
  double sum_c = 0.0;
  double area = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (is_fg(gt.at(r, c))) {
        sum_r += r;
        sum_c += c;
        area += 1.0;
      }
    }
  }
  int x = 0;
  int y = 0;
  if (area == 0.0) {
    x = static_cast<int>(std::nearbyint(w / 2.0));
    y = static_cast<int>(std::nearbyint(h / 2.0));
  } else {
    x = static_cast<int>(std::nearbyint(sum_c / area)) + 1;
    y = static_cast<int>(std::nearbyint(sum_r / area)) + 1;
  }
  x = std::clamp(x, 0, w);
  y = std::clamp(y, 0, h);
  const double total = static_cast<double>(h) * w;
  const double w1 = static_cast<double>(x) * y / total;
  const double w2 = static_cast<double>(w - x) * y / total;
  const double w3 = static_cast<double>(x) * (h - y) / total;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(pred, gt, 0, y, 0, x) + w2 * block_ssim(pred, gt, 0, y, x, w) +
         w3 * block_ssim(pred, gt, y, h, 0, x) + w4 * block_ssim(pred, gt, y, h, x, w);
}

// ---- weighted F ----

// Exact squared Euclidean distance to the nearest site, with the site index,
// by two passes of the 1-D lower-envelope transform.
struct DistanceField {
  std::vector<double> dist;   // Euclidean distance
  std::vector<int> nearest;   // flat index of the nearest site
};

void lower_envelope(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& arg) {
  const auto n = f.size();
  std::vector<size_t> v(n);
  std::vector<double> z(n + 1);
  auto intersect = [&f](size_t q, size_t p) {
    const auto dq = static_cast<double>(q);
    const auto dp = static_cast<double>(p);
    return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * (dq - dp));
  };
  size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const auto diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
    arg[q] = static_cast<int>(v[k]);
  }
}

DistanceField distance_to_foreground(const GrayMap& gt) {
  const int h = gt.rows();
  const int w = gt.cols();
  // Larger than any squared in-image distance, small enough to stay exact.
  const double far = 1e12;
  std::vector<double> col_d(static_cast<size_t>(h) * w);
  std::vector<int> col_arg(static_cast<size_t>(h) * w);
  std::vector<double> f(static_cast<size_t>(h));
  std::vector<double> d(static_cast<size_t>(h));
  std::vector<int> arg(static_cast<size_t>(h));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[static_cast<size_t>(r)] = is_fg(gt.at(r, c)) ? 0.0 : far;
    lower_envelope(f, d, arg);
    for (int r = 0; r < h; ++r) {
      col_d[static_cast<size_t>(r) * w + c] = d[static_cast<size_t>(r)];
      col_arg[static_cast<size_t>(r) * w + c] = arg[static_cast<size_t>(r)];
    }
  }
  DistanceField out;
  out.dist.resize(static_cast<size_t>(h) * w);
  out.nearest.resize(static_cast<size_t>(h) * w);
  f.resize(static_cast<size_t>(w));
  d.resize(static_cast<size_t>(w));
  arg.resize(static_cast<size_t>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[static_cast<size_t>(c)] = col_d[static_cast<size_t>(r) * w + c];
    lower_envelope(f, d, arg);
    for (int c = 0; c < w; ++c) {
      const auto i = static_cast<size_t>(r) * w + c;
      const int pc = arg[static_cast<size_t>(c)];
      const int pr = col_arg[static_cast<size_t>(r) * w + pc];
      out.dist[i] = std::sqrt(d[static_cast<size_t>(c)]);
      out.nearest[i] = pr * w + pc;
    }
  }
  return out;
}

// 7x7 Gaussian, sigma 5, normalized to unit sum.
std::array<double, 49> gaussian_kernel() {
  std::array<double, 49> k{};
  double sum = 0.0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 25.0));
      k[static_cast<size_t>((dy + 3) * 7 + dx + 3)] = v;
      sum += v;
    }
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

GrayMap::GrayMap(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 1 || cols < 1 || values_.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
    throw std::invalid_argument("GrayMap: size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::invalid_argument("GrayMap: value outside [0, 1]: " + std::to_string(v));
    }
  }
}

GrayMap GrayMap::filled(int rows, int cols, double value) {
  return GrayMap(rows, cols, std::vector<double>(static_cast<size_t>(rows) * static_cast<size_t>(cols), value));
}

GrayMap GrayMap::from_prediction(const Gray8& image) {
  std::vector<double> v(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), v.begin(), [](uint8_t p) { return p / 255.0; });
  return GrayMap(image.rows, image.cols, std::move(v));
}

GrayMap GrayMap::from_mask(const Gray8& image) {
  std::vector<double> v(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), v.begin(), [](uint8_t p) { return p >= 128 ? 1.0 : 0.0; });
  return GrayMap(image.rows, image.cols, std::move(v));
}

GrayMap GrayMap::resized(int rows, int cols) const {
  if (rows == rows_ && cols == cols_) return *this;
  cv::Mat src(rows_, cols_, CV_64F, const_cast<double*>(values_.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(cols, rows), 0, 0, cv::INTER_LINEAR);
  std::vector<double> v(static_cast<size_t>(rows) * static_cast<size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) v[static_cast<size_t>(r) * cols + c] = std::clamp(dst.at<double>(r, c), 0.0, 1.0);
  }
  return GrayMap(rows, cols, std::move(v));
}

double mae(const GrayMap& pred, const GrayMap& gt) {
  require_same_shape(pred, gt, "mae");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.values()[i] - gt.values()[i]);
  return s / static_cast<double>(pred.size());
}

double s_measure(const GrayMap& pred, const GrayMap& gt) {
  require_same_shape(pred, gt, "s_measure");
  constexpr double kAlpha = 0.5;
  double fg = 0.0;
  double pred_mean = 0.0;
  for (size_t i = 0; i < gt.size(); ++i) {
    fg += is_fg(gt.values()[i]) ? 1.0 : 0.0;
    pred_mean += pred.values()[i];
  }
  const double n = static_cast<double>(gt.size());
  pred_mean /= n;
  if (fg == 0.0) return 1.0 - pred_mean;
  if (fg == n) return pred_mean;
  const double s = kAlpha * s_object(pred, gt) + (1.0 - kAlpha) * s_region(pred, gt);
  return std::clamp(s, 0.0, 1.0);
}

double e_measure(const GrayMap& pred, const GrayMap& gt) {
  require_same_shape(pred, gt, "e_measure");
  std::array<double, 256> hist_fg{};
  std::array<double, 256> hist_bg{};
  double gt_fg = 0.0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const auto q = static_cast<size_t>(std::clamp(std::lround(pred.values()[i] * 255.0), 0L, 255L));
    if (is_fg(gt.values()[i])) {
      hist_fg[q] += 1.0;
      gt_fg += 1.0;
    } else {
      hist_bg[q] += 1.0;
    }
  }
  const double n = static_cast<double>(gt.size());
  const double gt_bg = n - gt_fg;
  const double mu_gt = gt_fg / n;

  auto enhanced = [](double a_pred, double a_gt) {
    const double align = 2.0 * a_pred * a_gt / (a_pred * a_pred + a_gt * a_gt + kEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
  };

  double total = 0.0;
  double fg_fg = 0.0;  // predicted fg on GT fg, for pred >= k
  double fg_bg = 0.0;  // predicted fg on GT bg
  for (int k = 255; k >= 1; --k) {
    fg_fg += hist_fg[static_cast<size_t>(k)];
    fg_bg += hist_bg[static_cast<size_t>(k)];
    const double pred_fg = fg_fg + fg_bg;
    double sum = 0.0;
    if (gt_fg == 0.0) {
      sum = n - pred_fg;
    } else if (gt_bg == 0.0) {
      sum = pred_fg;
    } else {
      const double mu_pred = pred_fg / n;
      const double bg_fg = gt_fg - fg_fg;  // predicted bg on GT fg
      const double bg_bg = gt_bg - fg_bg;
      sum = fg_fg * enhanced(1.0 - mu_pred, 1.0 - mu_gt) + fg_bg * enhanced(1.0 - mu_pred, -mu_gt) +
            bg_fg * enhanced(-mu_pred, 1.0 - mu_gt) + bg_bg * enhanced(-mu_pred, -mu_gt);
    }
    total += sum / n;
  }
  return std::clamp(total / 255.0, 0.0, 1.0);
}

double weighted_f(const GrayMap& pred, const GrayMap& gt) {
  require_same_shape(pred, gt, "weighted_f");
  const int h = gt.rows();
  const int w = gt.cols();
  const size_t n = gt.size();
  const auto g = gt.values();
  const auto p = pred.values();
  const bool any_fg = std::any_of(g.begin(), g.end(), is_fg);
  if (!any_fg) {
    // Reference code scores empty GT as 0; an all-zero prediction of an empty
    // GT is treated as perfect instead.
    return std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; }) ? 1.0 : 0.0;
  }

  const auto field = distance_to_foreground(gt);
  std::vector<double> err(n);
  for (size_t i = 0; i < n; ++i) err[i] = std::abs(p[i] - g[i]);
  // Background pixels take the error of their nearest foreground pixel.
  std::vector<double> err_t(err);
  for (size_t i = 0; i < n; ++i) {
    if (!is_fg(g[i])) err_t[i] = err[static_cast<size_t>(field.nearest[i])];
  }
  static const auto kernel = gaussian_kernel();
  std::vector<double> blurred(n, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int dy = -3; dy <= 3; ++dy) {
        const int rr = r + dy;
        if (rr < 0 || rr >= h) continue;
        for (int dx = -3; dx <= 3; ++dx) {
          const int cc = c + dx;
          if (cc < 0 || cc >= w) continue;
          acc += kernel[static_cast<size_t>((dy + 3) * 7 + dx + 3)] * err_t[static_cast<size_t>(rr) * w + cc];
        }
      }
      blurred[static_cast<size_t>(r) * w + c] = acc;
    }
  }
  double tp = 0.0;
  double fp = 0.0;
  double fg_err = 0.0;
  double fg_count = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (is_fg(g[i])) {
      const double e = blurred[i] < err[i] ? blurred[i] : err[i];
      fg_err += e;
      fg_count += 1.0;
    } else {
      const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * field.dist[i]);
      fp += err[i] * importance;
    }
  }
  tp = fg_count - fg_err;
  const double recall = 1.0 - fg_err / fg_count;
  const double precision = tp / (tp + fp + kEps);
  const double q = 2.0 * recall * precision / (recall + precision + kEps);
  return std::clamp(q, 0.0, 1.0);
}

ImageMetrics evaluate_pair(const std::string& id, const GrayMap& pred, const GrayMap& gt) {
  return {id, s_measure(pred, gt), e_measure(pred, gt), weighted_f(pred, gt), mae(pred, gt)};
}

MetricReport summarize(std::string dataset, std::string model, std::vector<ImageMetrics> per_image) {
  MetricReport r;
  r.dataset = std::move(dataset);
  r.model = std::move(model);
  r.per_image = std::move(per_image);
  if (!r.per_image.empty()) {
    for (const auto& m : r.per_image) {
      r.s_alpha += m.s_alpha;
      r.e_phi += m.e_phi;
      r.f_beta_w += m.f_beta_w;
      r.mae += m.mae;
    }
    const double k = static_cast<double>(r.per_image.size());
    r.s_alpha /= k;
    r.e_phi /= k;
    r.f_beta_w /= k;
    r.mae /= k;
  }
  return r;
}

namespace {

std::map<std::string, std::filesystem::path> images_by_stem(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out[e.path().stem().string()] = e.path();
  }
  return out;
}

}  // namespace

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              const std::string& dataset, const std::string& model) {
  const auto preds = images_by_stem(pred_dir);
  const auto gts = images_by_stem(gt_dir);
  if (gts.empty()) throw std::runtime_error("evaluate_dataset: no ground-truth images in " + gt_dir.string());
  std::vector<std::string> unmatched;
  for (const auto& [stem, _] : gts) {
    if (!preds.count(stem)) unmatched.push_back("missing prediction: " + stem);
  }
  for (const auto& [stem, _] : preds) {
    if (!gts.count(stem)) unmatched.push_back("prediction without ground truth: " + stem);
  }
  if (!unmatched.empty()) {
    std::string msg = "evaluate_dataset: unmatched files";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw std::runtime_error(msg);
  }
  std::vector<ImageMetrics> per_image;
  per_image.reserve(gts.size());
  for (const auto& [stem, gt_path] : gts) {
    const auto gt = GrayMap::from_mask(read_gray8(gt_path));
    const auto pred = GrayMap::from_prediction(read_gray8(preds.at(stem))).resized(gt.rows(), gt.cols());
    per_image.push_back(evaluate_pair(stem, pred, gt));
  }
  return summarize(dataset.empty() ? gt_dir.filename().string() : dataset, model, std::move(per_image));
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["dataset"] = report.dataset;
  j["model"] = report.model;
  j["s_alpha"] = round3(report.s_alpha);
  j["e_phi"] = round3(report.e_phi);
  j["f_beta_w"] = round3(report.f_beta_w);
  j["mae"] = round3(report.mae);
  j["n_images"] = report.n_images();
  return j.dump(2);
}

std::string report_table(const MetricReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "dataset: " << report.dataset << "  model: " << report.model << "  images: " << report.n_images() << '\n';
  os << "S_alpha  E_phi  F_beta_w  MAE\n";
  os << round3(report.s_alpha) << "    " << round3(report.e_phi) << "  " << round3(report.f_beta_w) << "     "
     << round3(report.mae) << '\n';
  return os.str();
}

void write_report(const MetricReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "metrics.json") << report_json(report) << '\n';
  std::ofstream(dir / "metrics.txt") << report_table(report);
  std::ofstream csv(dir / "per_image.csv");
  csv << "id,s_alpha,e_phi,f_beta_w,mae\n";
  csv << std::setprecision(9);
  for (const auto& m : report.per_image) {
    csv << m.id << ',' << m.s_alpha << ',' << m.e_phi << ',' << m.f_beta_w << ',' << m.mae << '\n';
  }
}

}  // namespace pfrnet
