#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <ostream>

#include "pfrnet/harness.hpp"

namespace pfrnet {
namespace {

int64_t round_to_32(int64_t v) { return std::max<int64_t>(32, (v + 16) / 32 * 32); }

GrayMap mask_map(const FeatureMap& mask) {
  auto m = mask.detach().to(torch::kCPU).to(torch::kDouble).contiguous();
  const auto* p = m.data_ptr<double>();
  return GrayMap(static_cast<int>(m.size(2)), static_cast<int>(m.size(3)), std::vector<double>(p, p + m.numel()));
}

// Runs the network on `image` resized to (h, w) and returns the probability map
// at the image's own size.
Gray8 predict_at(Pfrnet& net, const FeatureMap& image, int64_t h, int64_t w) {
  const auto input = resize_to(image, h, w).clamp(0.0, 1.0);
  const auto prob = net->predict(input);
  return to_gray8(resize_to(prob, image.size(2), image.size(3)).clamp(0.0, 1.0));
}

}  // namespace

Gray8 predict_image(Pfrnet& net, const FeatureMap& image, int resolution) {
  require_channels(image, 3, "predict image");
  if (resolution > 0) return predict_at(net, image, resolution, resolution);
  return predict_at(net, image, round_to_32(image.size(2)), round_to_32(image.size(3)));
}

MetricReport evaluate_samples(Pfrnet& net, const std::vector<Sample>& samples, int resolution,
                              const std::string& dataset_name, const std::string& model_name) {
  std::vector<ImageMetrics> per_image;
  per_image.reserve(samples.size());
  for (const auto& s : samples) {
    const auto pred = GrayMap::from_prediction(predict_image(net, s.image, resolution));
    per_image.push_back(evaluate_pair(s.id, pred, mask_map(s.mask)));
  }
  return summarize(dataset_name, model_name, std::move(per_image));
}

MetricReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_root,
                      const std::filesystem::path& out_dir, const EvalOptions& options) {
  auto net = load_network(checkpoint);
  int resolution = options.resolution;
  if (resolution == 0) {
    const auto meta = nlohmann::json::parse(load_checkpoint_metadata(checkpoint));
    if (meta.contains("resolution")) resolution = meta.at("resolution").get<int>();
  }

  const auto img_dir = dataset_root / "Imgs";
  const auto gt_dir = dataset_root / "GT";
  if (!std::filesystem::is_directory(img_dir) || !std::filesystem::is_directory(gt_dir)) {
    throw std::runtime_error("dataset " + dataset_root.string() + " must contain Imgs/ and GT/");
  }
  std::map<std::string, std::filesystem::path> gts;
  for (const auto& e : std::filesystem::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) gts[e.path().stem().string()] = e.path();
  }
  std::map<std::string, std::filesystem::path> images;
  for (const auto& e : std::filesystem::directory_iterator(img_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) images[e.path().stem().string()] = e.path();
  }

  const auto pred_dir = out_dir / "predictions";
  std::filesystem::create_directories(pred_dir);
  for (const auto& [stem, path] : images) {
    const auto image = read_rgb(path);
    auto map = predict_image(net, image, resolution);
    if (const auto gt = gts.find(stem); gt != gts.end()) {
      const auto g = read_gray8(gt->second);
      if (g.rows != map.rows || g.cols != map.cols) {
        auto t = torch::from_blob(map.pixels.data(), {1, 1, map.rows, map.cols}, torch::kUInt8).to(torch::kFloat) / 255.0;
        map = to_gray8(resize_to(t, g.rows, g.cols).clamp(0.0, 1.0));
      }
    }
    write_gray8(pred_dir / (stem + ".png"), map);
    if (options.progress) *options.progress << "predicted " << stem << '\n';
  }

  const auto model = options.model_name.empty() ? checkpoint.stem().string() : options.model_name;
  const auto dataset = options.dataset_name.empty() ? dataset_root.filename().string() : options.dataset_name;
  auto report = evaluate_dataset(pred_dir, gt_dir, dataset, model);
  write_report(report, out_dir);
  return report;
}

}  // namespace pfrnet
