#pragma once

#include <array>

#include "pfrnet/network.hpp"

namespace pfrnet {

// All losses take (B, 1, H, W) logits and a same-shaped binary mask and return a
// differentiable scalar: per-image values averaged over the batch.

// Throws std::invalid_argument if `gt` holds anything other than 0 and 1.
void require_binary_mask(const torch::Tensor& gt, std::string_view what);

// 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s), p = sigmoid(logits).
torch::Tensor dice_loss(const FeatureMap& logits, const FeatureMap& gt, double smooth = 1.0);

// Boundary-emphasis weights 1 + 5 |avgpool31(gt) - gt|, zero padded, pads counted.
torch::Tensor structure_weights(const FeatureMap& gt);

// sum(w * BCE(p, g)) / sum(w)
torch::Tensor weighted_bce(const FeatureMap& logits, const FeatureMap& gt);

// 1 - (sum(w p g) + 1) / (sum(w (p + g - p g)) + 1)
torch::Tensor weighted_iou(const FeatureMap& logits, const FeatureMap& gt);

torch::Tensor structure_loss(const FeatureMap& logits, const FeatureMap& gt);

struct LossBreakdown {
  torch::Tensor total;
  std::array<torch::Tensor, 3> structure;  // O1, O2, O3
  torch::Tensor dice;                      // O4
};

// Each output is bilinearly resampled to the mask's resolution first.
// total = sum_i structure(O_i) + dice(O4).
LossBreakdown total_loss(const NetworkOutputs& outputs, const FeatureMap& gt);

}  // namespace pfrnet
