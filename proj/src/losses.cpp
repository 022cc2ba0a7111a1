#include "pfrnet/losses.hpp"

namespace pfrnet {
namespace {

constexpr int64_t kWeightPool = 31;
constexpr double kWeightGain = 5.0;

void check_pair(const FeatureMap& logits, const FeatureMap& gt, std::string_view what) {
  require_channels(logits, 1, what);
  if (!logits.sizes().equals(gt.sizes())) {
    throw ShapeError(std::string(what) + ": logits " + shape_string(logits) + " and mask " +
                     shape_string(gt) + " differ");
  }
  require_binary_mask(gt, what);
}

}  // namespace

void require_binary_mask(const torch::Tensor& gt, std::string_view what) {
  if (!torch::logical_or(gt == 0, gt == 1).all().item<bool>()) {
    throw std::invalid_argument(std::string(what) + ": mask values must be 0 or 1");
  }
}

torch::Tensor dice_loss(const FeatureMap& logits, const FeatureMap& gt, double smooth) {
  check_pair(logits, gt, "dice_loss");
  auto p = torch::sigmoid(logits);
  auto inter = (p * gt).sum({1, 2, 3});
  auto denom = p.sum({1, 2, 3}) + gt.sum({1, 2, 3});
  return (1.0 - (2.0 * inter + smooth) / (denom + smooth)).mean();
}

torch::Tensor structure_weights(const FeatureMap& gt) {
  auto pooled = torch::avg_pool2d(gt, kWeightPool, 1, kWeightPool / 2, /*ceil_mode=*/false,
                                  /*count_include_pad=*/true);
  return 1.0 + kWeightGain * torch::abs(pooled - gt);
}

torch::Tensor weighted_bce(const FeatureMap& logits, const FeatureMap& gt) {
  check_pair(logits, gt, "weighted_bce");
  auto w = structure_weights(gt);
  // Stable BCE with logits: max(x, 0) - x g + log(1 + exp(-|x|)).
  auto bce = torch::clamp_min(logits, 0) - logits * gt + torch::log1p(torch::exp(-torch::abs(logits)));
  return ((w * bce).sum({1, 2, 3}) / w.sum({1, 2, 3})).mean();
}

torch::Tensor weighted_iou(const FeatureMap& logits, const FeatureMap& gt) {
  check_pair(logits, gt, "weighted_iou");
  auto w = structure_weights(gt);
  auto p = torch::sigmoid(logits);
  auto inter = (w * p * gt).sum({1, 2, 3});
  auto uni = (w * (p + gt)).sum({1, 2, 3});
  return (1.0 - (inter + 1.0) / (uni - inter + 1.0)).mean();
}

torch::Tensor structure_loss(const FeatureMap& logits, const FeatureMap& gt) {
  return weighted_bce(logits, gt) + weighted_iou(logits, gt);
}

LossBreakdown total_loss(const NetworkOutputs& outputs, const FeatureMap& gt) {
  require_channels(gt, 1, "total_loss");
  const auto h = gt.size(2);
  const auto w = gt.size(3);
  LossBreakdown out;
  const std::array<const FeatureMap*, 3> heads{&outputs.o1, &outputs.o2, &outputs.o3};
  for (size_t i = 0; i < 3; ++i) out.structure[i] = structure_loss(resize_to(*heads[i], h, w), gt);
  out.dice = dice_loss(resize_to(outputs.o4, h, w), gt);
  out.total = out.structure[0] + out.structure[1] + out.structure[2] + out.dice;
  return out;
}

}  // namespace pfrnet
