#include "pfrnet/frm.hpp"

#include <string>

namespace pfrnet {
namespace {

void require_level(int level) {
  if (level < 1 || level > 3) {
    throw std::invalid_argument("refine: level must be 1, 2 or 3, got " + std::to_string(level));
  }
}

}  // namespace

FeatureMap guidance_for_level(const GuidanceMap& ggi, int level) {
  require_level(level);
  require_feature_map(ggi.values, "refine");
  if (ggi.values.size(1) != 1) {
    throw ShapeError("refine: guidance must have one channel, got " + shape_string(ggi.values));
  }
  switch (level) {
    case 1:
      return resample(ggi.values, 2.0);
    case 2:
      return ggi.values;
    default:
      return resample(ggi.values, 0.5);
  }
}

RefineLevelImpl::RefineLevelImpl(int level, int64_t in_channels) : level_(level) {
  require_level(level);
  ca_in_ = register_module("ca_in", ChannelAttention());
  coarse_ = register_module("coarse", ConvBlock(in_channels, kRefineWidth, 3));
  ca_out_ = register_module("ca_out", ChannelAttention());
  out_ = register_module("out", ConvBlock(kRefineWidth, kRefineWidth, 1));
}

RefineTrace RefineLevelImpl::trace(const FeatureMap& f, const GuidanceMap& ggi) {
  RefineTrace t;
  t.g_ggi = guidance_for_level(ggi, level_);
  require_same_spatial(f, t.g_ggi, "refine");
  t.g_coarse = coarse_->forward(ca_in_->forward(f));
  t.g_refine = t.g_coarse * t.g_ggi;
  t.rf = out_->forward(ca_out_->forward(t.g_refine));
  return t;
}

FeatureMap RefineLevelImpl::forward(const FeatureMap& f, const GuidanceMap& ggi) { return trace(f, ggi).rf; }

FeatureMap RefineLevelImpl::forward_unguided(const FeatureMap& f) {
  return out_->forward(ca_out_->forward(coarse_->forward(ca_in_->forward(f))));
}

FrmImpl::FrmImpl(const std::array<int64_t, 4>& channels) {
  for (int i = 0; i < 3; ++i) {
    levels[static_cast<size_t>(i)] =
        register_module("level" + std::to_string(i + 1), RefineLevel(i + 1, channels[static_cast<size_t>(i)]));
  }
}

std::array<FeatureMap, 3> FrmImpl::forward(const FeaturePyramid& pyramid, const GuidanceMap& ggi) {
  return {levels[0]->forward(pyramid.f1, ggi), levels[1]->forward(pyramid.f2, ggi),
          levels[2]->forward(pyramid.f3, ggi)};
}

}  // namespace pfrnet
