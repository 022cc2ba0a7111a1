#pragma once

#include <array>

#include "pfrnet/affm.hpp"

namespace pfrnet {

inline constexpr int64_t kRefineWidth = 256;

// Intermediate tensors of one refinement pass, for inspection in tests.
struct RefineTrace {
  FeatureMap g_coarse;  // Conv3x3(CA(f_i)), 256 channels
  FeatureMap g_ggi;     // guidance resampled onto f_i's grid
  FeatureMap g_refine;  // g_coarse * g_ggi, broadcast over channels
  FeatureMap rf;        // Conv1x1(CA(g_refine))
};

// Resamples stride-8 guidance onto level `level`'s grid: x2 up for level 1,
// identity for level 2, x2 down for level 3.
FeatureMap guidance_for_level(const GuidanceMap& ggi, int level);

// Guidance-driven refinement of backbone level `level` (1, 2 or 3). The two
// channel-attention stages are independent instances.
class RefineLevelImpl : public torch::nn::Module {
 public:
  RefineLevelImpl(int level, int64_t in_channels);

  FeatureMap forward(const FeatureMap& f, const GuidanceMap& ggi);
  RefineTrace trace(const FeatureMap& f, const GuidanceMap& ggi);
  // The same path with g_refine = g_coarse.
  FeatureMap forward_unguided(const FeatureMap& f);

  int level() const { return level_; }

 private:
  int level_;
  ChannelAttention ca_in_{nullptr};
  ConvBlock coarse_{nullptr};
  ChannelAttention ca_out_{nullptr};
  ConvBlock out_{nullptr};
};
TORCH_MODULE(RefineLevel);

class FrmImpl : public torch::nn::Module {
 public:
  explicit FrmImpl(const std::array<int64_t, 4>& channels);

  std::array<FeatureMap, 3> forward(const FeaturePyramid& pyramid, const GuidanceMap& ggi);

  std::array<RefineLevel, 3> levels{RefineLevel{nullptr}, RefineLevel{nullptr}, RefineLevel{nullptr}};
};
TORCH_MODULE(Frm);

}  // namespace pfrnet
