#include "pfrnet/blocks.hpp"

#include <cmath>
#include <string>

namespace pfrnet {
namespace {

void require_odd(KernelSize k, const char* what) {
  if (k.height < 1 || k.width < 1 || k.height % 2 == 0 || k.width % 2 == 0) {
    throw std::invalid_argument(std::string(what) + ": kernel must be odd, got " +
                                std::to_string(k.height) + "x" + std::to_string(k.width));
  }
}

void require_positive(int64_t v, const char* what, const char* name) {
  if (v < 1) {
    throw std::invalid_argument(std::string(what) + ": " + name + " must be positive, got " +
                                std::to_string(v));
  }
}

torch::nn::Conv2dOptions same_conv(int64_t in, int64_t out, KernelSize k, int64_t dilation,
                                   int64_t stride, bool bias) {
  return torch::nn::Conv2dOptions(in, out, {k.height, k.width})
      .padding({dilation * (k.height - 1) / 2, dilation * (k.width - 1) / 2})
      .dilation(dilation)
      .stride(stride)
      .bias(bias);
}

void init_conv(torch::nn::Conv2d& conv) {
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
  if (conv->bias.defined()) conv->bias.zero_();
}

// Fan-in scaling for convolutions that feed no ReLU; keeps 1-channel logit
// projections near unit variance.
void init_linear_conv(torch::nn::Conv2d& conv) {
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kLinear);
  if (conv->bias.defined()) conv->bias.zero_();
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(int64_t in_channels, int64_t out_channels, KernelSize kernel,
                             int64_t dilation, int64_t stride) {
  require_positive(in_channels, "conv_block", "in_channels");
  require_positive(out_channels, "conv_block", "out_channels");
  require_positive(dilation, "conv_block", "dilation");
  require_positive(stride, "conv_block", "stride");
  require_odd(kernel, "conv_block");
  conv = register_module("conv", torch::nn::Conv2d(same_conv(in_channels, out_channels, kernel,
                                                             dilation, stride, false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(torch::nn::BatchNormOptions(out_channels)
                                                        .eps(kBatchNormEps)
                                                        .momentum(kBatchNormMomentum)
                                                        .affine(true)));
  init_conv(conv);
}

FeatureMap ConvBlockImpl::forward(const FeatureMap& x) {
  require_feature_map(x, "conv_block");
  return torch::silu(bn->forward(conv->forward(x)));
}

PlainConvImpl::PlainConvImpl(int64_t in_channels, int64_t out_channels, KernelSize kernel,
                             int64_t dilation) {
  require_positive(in_channels, "plain_conv", "in_channels");
  require_positive(out_channels, "plain_conv", "out_channels");
  require_positive(dilation, "plain_conv", "dilation");
  require_odd(kernel, "plain_conv");
  conv = register_module(
      "conv", torch::nn::Conv2d(same_conv(in_channels, out_channels, kernel, dilation, 1, true)));
  init_linear_conv(conv);
}

FeatureMap PlainConvImpl::forward(const FeatureMap& x) {
  require_feature_map(x, "plain_conv");
  return conv->forward(x);
}

CbamImpl::CbamImpl(int64_t channels, int64_t reduction) : channels_(channels) {
  if (channels < 2) {
    throw std::invalid_argument("cbam: needs at least 2 channels, got " + std::to_string(channels));
  }
  require_positive(reduction, "cbam", "reduction");
  const int64_t hidden = std::max<int64_t>(1, channels / reduction);
  fc1_ = register_module("fc1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, hidden, 1).bias(false)));
  fc2_ = register_module("fc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, channels, 1).bias(false)));
  spatial_ = register_module(
      "spatial", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, 7).padding(3).bias(false)));
  init_conv(fc1_);
  init_conv(fc2_);
  init_conv(spatial_);
}

torch::Tensor CbamImpl::channel_gate(const FeatureMap& x) {
  require_channels(x, channels_, "cbam");
  auto avg = torch::adaptive_avg_pool2d(x, {1, 1});
  auto max = torch::adaptive_max_pool2d(x, {1, 1});
  auto mlp = [this](const torch::Tensor& d) { return fc2_->forward(torch::relu(fc1_->forward(d))); };
  return torch::sigmoid(mlp(avg) + mlp(std::get<0>(max)));
}

torch::Tensor CbamImpl::spatial_gate(const FeatureMap& x) {
  require_feature_map(x, "cbam");
  auto avg = x.mean(1, /*keepdim=*/true);
  auto max = std::get<0>(x.max(1, /*keepdim=*/true));
  return torch::sigmoid(spatial_->forward(torch::cat({avg, max}, 1)));
}

FeatureMap CbamImpl::forward(const FeatureMap& x) {
  auto y = x * channel_gate(x);
  return y * spatial_gate(y);
}

ChannelAttentionImpl::ChannelAttentionImpl(int64_t kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("channel_attention: kernel must be odd, got " + std::to_string(kernel));
  }
  conv_ = register_module(
      "conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(1, 1, kernel).padding(kernel / 2).bias(false)));
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_normal_(conv_->weight, 0.0, torch::kFanOut, torch::kReLU);
}

torch::Tensor ChannelAttentionImpl::gates(const FeatureMap& x) {
  require_feature_map(x, "channel_attention");
  if (x.size(1) < 2) {
    throw ShapeError("channel_attention: needs at least 2 channels, got " + shape_string(x));
  }
  const auto b = x.size(0);
  const auto c = x.size(1);
  auto pooled = torch::adaptive_avg_pool2d(x, {1, 1}).view({b, 1, c});
  return torch::sigmoid(conv_->forward(pooled)).view({b, c, 1, 1});
}

FeatureMap ChannelAttentionImpl::forward(const FeatureMap& x) { return x * gates(x); }

FeatureMap resize_to(const FeatureMap& x, int64_t height, int64_t width) {
  require_feature_map(x, "resample");
  if (height < 1 || width < 1) {
    throw std::invalid_argument("resample: target size " + std::to_string(height) + "x" +
                                std::to_string(width) + " is empty");
  }
  if (x.size(2) == height && x.size(3) == width) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

FeatureMap resample(const FeatureMap& x, double scale) {
  require_feature_map(x, "resample");
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("resample: scale must be positive and finite");
  }
  const auto h = static_cast<int64_t>(std::llround(static_cast<double>(x.size(2)) * scale));
  const auto w = static_cast<int64_t>(std::llround(static_cast<double>(x.size(3)) * scale));
  return resize_to(x, h, w);
}

FeatureMap resize_nearest(const FeatureMap& x, int64_t height, int64_t width) {
  require_feature_map(x, "resize_nearest");
  if (height < 1 || width < 1) throw std::invalid_argument("resize_nearest: target size is empty");
  if (x.size(2) == height && x.size(3) == width) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kNearest));
}

void initialize_weights(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

}  // namespace pfrnet
