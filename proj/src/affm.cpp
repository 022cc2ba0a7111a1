#include "pfrnet/affm.hpp"

#include <cmath>
#include <limits>

namespace pfrnet {

GuidanceMap make_ggi(const FeatureMap& o4) {
  require_channels(o4, 1, "make_ggi");
  auto g = torch::sigmoid(o4);
  double lo = 0.0;
  double hi = 0.0;
  if (o4.scalar_type() == torch::kDouble) {
    lo = std::numeric_limits<double>::min();
    hi = std::nextafter(1.0, 0.0);
  } else {
    lo = static_cast<double>(std::numeric_limits<float>::min());
    hi = static_cast<double>(std::nextafter(1.0F, 0.0F));
  }
  return {torch::clamp(g, lo, hi)};
}

GuidanceMap constant_guidance(const FeatureMap& like, double value) {
  require_feature_map(like, "constant_guidance");
  return {torch::full({like.size(0), 1, like.size(2), like.size(3)}, value, like.options())};
}

ProjectHighImpl::ProjectHighImpl(int64_t c2, int64_t c3, int64_t c4) {
  p2_ = register_module("p2", ConvBlock(c2, kAffmWidth, 1));
  p3_ = register_module("p3", ConvBlock(c3, kAffmWidth, 1));
  p4_ = register_module("p4", ConvBlock(c4, kAffmWidth, 1));
}

HighFeatures ProjectHighImpl::forward(const FeatureMap& f2, const FeatureMap& f3, const FeatureMap& f4) {
  require_half_size(f2, f3, "project_high");
  require_half_size(f3, f4, "project_high");
  const auto h = f2.size(2);
  const auto w = f2.size(3);
  return {p2_->forward(f2), resize_to(p3_->forward(f3), h, w), resize_to(p4_->forward(f4), h, w)};
}

DlaImpl::DlaImpl() { beta = register_parameter("beta", torch::zeros({1})); }

namespace {

torch::Tensor stack_layers(const FeatureMap& x1, const FeatureMap& x2, const FeatureMap& x3) {
  require_feature_map(x1, "dla");
  if (!x1.sizes().equals(x2.sizes()) || !x1.sizes().equals(x3.sizes())) {
    throw ShapeError("dla: inputs must share a shape, got " + shape_string(x1) + ", " +
                     shape_string(x2) + ", " + shape_string(x3));
  }
  // (B, 3, C*H*W)
  return torch::stack({x1, x2, x3}, 1).reshape({x1.size(0), 3, -1});
}

}  // namespace

torch::Tensor DlaImpl::attention(const FeatureMap& x1, const FeatureMap& x2, const FeatureMap& x3) const {
  auto flat = stack_layers(x1, x2, x3);
  auto energy = torch::bmm(flat, flat.transpose(1, 2));  // [b][i][j] = <x_i, x_j>
  return torch::softmax(energy, /*dim=*/1);
}

FeatureMap DlaImpl::forward(const FeatureMap& x1, const FeatureMap& x2, const FeatureMap& x3) {
  auto flat = stack_layers(x1, x2, x3);
  auto weights = torch::softmax(torch::bmm(flat, flat.transpose(1, 2)), 1);
  // mixed[b][j] = sum_i w[b][i][j] * flat[b][i]
  auto mixed = torch::bmm(weights.transpose(1, 2), flat);
  auto fused = flat + beta.to(flat.dtype()) * mixed;
  const auto c = x1.size(1);
  return fused.reshape({x1.size(0), 3 * c, x1.size(2), x1.size(3)});
}

ProjectLowImpl::ProjectLowImpl(int64_t c1) { proj_ = register_module("proj", ConvBlock(c1, kLowWidth, 1)); }

FeatureMap ProjectLowImpl::forward(const FeatureMap& f1) {
  require_feature_map(f1, "project_low");
  if (f1.size(2) % 2 != 0 || f1.size(3) % 2 != 0) {
    throw ShapeError("project_low: f1 extents must be even, got " + shape_string(f1));
  }
  return resize_to(proj_->forward(f1), f1.size(2) / 2, f1.size(3) / 2);
}

ScaImpl::ScaImpl() {
  reduce_ = register_module("reduce", ConvBlock(kLowWidth + 3 * kAffmWidth, kAffmWidth, 1));
  cbam_ = register_module("cbam", Cbam(kAffmWidth));
  mix_ = register_module("mix", ConvBlock(kAffmWidth, kAffmWidth, 3));
  out_ = register_module("out", PlainConv(kAffmWidth, 1, 1));
}

FeatureMap ScaImpl::forward(const FeatureMap& x_low, const FeatureMap& x_high) {
  require_channels(x_low, kLowWidth, "sca");
  require_channels(x_high, 3 * kAffmWidth, "sca");
  require_same_spatial(x_low, x_high, "sca");
  if (x_low.size(0) != x_high.size(0)) throw ShapeError("sca: batch sizes differ");
  auto x = reduce_->forward(torch::cat({x_low, x_high}, 1));
  return out_->forward(mix_->forward(cbam_->forward(x)));
}

AffmImpl::AffmImpl(const std::array<int64_t, 4>& channels) {
  project_high = register_module("project_high", ProjectHigh(channels[1], channels[2], channels[3]));
  dla = register_module("dla", Dla());
  project_low = register_module("project_low", ProjectLow(channels[0]));
  sca = register_module("sca", Sca());
}

AffmOutput AffmImpl::forward(const FeaturePyramid& pyramid) {
  auto high = project_high->forward(pyramid.f2, pyramid.f3, pyramid.f4);
  auto x_high = dla->forward(high.x1, high.x2, high.x3);
  auto x_low = project_low->forward(pyramid.f1);
  auto o4 = sca->forward(x_low, x_high);
  return {o4, make_ggi(o4)};
}

}  // namespace pfrnet
