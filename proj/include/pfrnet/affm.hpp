#pragma once

#include "pfrnet/backbone.hpp"
#include "pfrnet/blocks.hpp"

namespace pfrnet {

inline constexpr int64_t kAffmWidth = 256;
inline constexpr int64_t kLowWidth = 128;

// One-channel guidance at stride 8, strictly inside (0, 1).
struct GuidanceMap {
  FeatureMap values;
};

// sigmoid(o4), clamped one ulp inside (0, 1) so saturated logits never reach
// the closed endpoints.
GuidanceMap make_ggi(const FeatureMap& o4);

// Guidance with every pixel equal to `value`, shaped like `like` but 1 channel.
GuidanceMap constant_guidance(const FeatureMap& like, double value);

struct HighFeatures {
  FeatureMap x1;  // from f2
  FeatureMap x2;  // from f3
  FeatureMap x3;  // from f4
};

// 1x1 conv_block to 256 channels per level, then bilinear upsampling of f3/f4 to
// the f2 grid.
class ProjectHighImpl : public torch::nn::Module {
 public:
  ProjectHighImpl(int64_t c2, int64_t c3, int64_t c4);

  HighFeatures forward(const FeatureMap& f2, const FeatureMap& f3, const FeatureMap& f4);

 private:
  ConvBlock p2_{nullptr}, p3_{nullptr}, p4_{nullptr};
};
TORCH_MODULE(ProjectHigh);

// Deep-layer attention over three same-shaped maps. For every batch element
// w[i][j] = softmax_i(<flat(x_i), flat(x_j)>), x_j <- beta * sum_i w[i][j] x_i + x_j,
// and the result is the channel concatenation [x1; x2; x3].
class DlaImpl : public torch::nn::Module {
 public:
  DlaImpl();

  FeatureMap forward(const FeatureMap& x1, const FeatureMap& x2, const FeatureMap& x3);

  // (B, 3, 3) with [b][i][j] = w_ij; every column j sums to one over i.
  torch::Tensor attention(const FeatureMap& x1, const FeatureMap& x2, const FeatureMap& x3) const;

  torch::Tensor beta;
};
TORCH_MODULE(Dla);

// 1x1 conv_block to 128 channels, then bilinear downsampling by 2.
class ProjectLowImpl : public torch::nn::Module {
 public:
  explicit ProjectLowImpl(int64_t c1);

  FeatureMap forward(const FeatureMap& f1);

 private:
  ConvBlock proj_{nullptr};
};
TORCH_MODULE(ProjectLow);

// Spatial-channel attention head: [x_l; x_h] (896 ch) -> 1x1 conv_block (256)
// -> CBAM -> 3x3 conv_block (256) -> 1x1 projection to one logit channel.
class ScaImpl : public torch::nn::Module {
 public:
  ScaImpl();

  FeatureMap forward(const FeatureMap& x_low, const FeatureMap& x_high);

 private:
  ConvBlock reduce_{nullptr};
  Cbam cbam_{nullptr};
  ConvBlock mix_{nullptr};
  PlainConv out_{nullptr};
};
TORCH_MODULE(Sca);

struct AffmOutput {
  FeatureMap o4;
  GuidanceMap ggi;
};

class AffmImpl : public torch::nn::Module {
 public:
  explicit AffmImpl(const std::array<int64_t, 4>& channels);

  AffmOutput forward(const FeaturePyramid& pyramid);

  ProjectHigh project_high{nullptr};
  Dla dla{nullptr};
  ProjectLow project_low{nullptr};
  Sca sca{nullptr};
};
TORCH_MODULE(Affm);

}  // namespace pfrnet
