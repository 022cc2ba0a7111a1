#pragma once

#include <cstdint>

#include "pfrnet/tensor.hpp"

namespace pfrnet {

struct KernelSize {
  int64_t height;
  int64_t width;

  KernelSize(int64_t square) : height(square), width(square) {}  // NOLINT(google-explicit-constructor)
  KernelSize(int64_t h, int64_t w) : height(h), width(w) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Convolution -> batch normalization -> SiLU with same padding. The convolution
// carries no bias; the BN shift plays that role.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in_channels, int64_t out_channels, KernelSize kernel, int64_t dilation = 1,
                int64_t stride = 1);

  FeatureMap forward(const FeatureMap& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBlock);

// Bare convolution with bias and same padding p = d * (k - 1) / 2 per axis.
class PlainConvImpl : public torch::nn::Module {
 public:
  PlainConvImpl(int64_t in_channels, int64_t out_channels, KernelSize kernel, int64_t dilation = 1);

  FeatureMap forward(const FeatureMap& x);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(PlainConv);

// Channel gate (shared bottleneck over avg- and max-pooled descriptors) followed
// by a spatial gate (7x7 conv over channel-wise avg/max maps).
class CbamImpl : public torch::nn::Module {
 public:
  explicit CbamImpl(int64_t channels, int64_t reduction = 16);

  FeatureMap forward(const FeatureMap& x);

  // (B, C, 1, 1) sigmoid gates.
  torch::Tensor channel_gate(const FeatureMap& x);
  // (B, 1, H, W) sigmoid gates.
  torch::Tensor spatial_gate(const FeatureMap& x);

 private:
  int64_t channels_;
  torch::nn::Conv2d fc1_{nullptr};
  torch::nn::Conv2d fc2_{nullptr};
  torch::nn::Conv2d spatial_{nullptr};
};
TORCH_MODULE(Cbam);

// Efficient channel attention: global average pool, a 1-D convolution across
// the channel axis, sigmoid, per-channel rescale.
class ChannelAttentionImpl : public torch::nn::Module {
 public:
  explicit ChannelAttentionImpl(int64_t kernel = 3);

  FeatureMap forward(const FeatureMap& x);

  // (B, C, 1, 1) sigmoid gates.
  torch::Tensor gates(const FeatureMap& x);

 private:
  torch::nn::Conv1d conv_{nullptr};
};
TORCH_MODULE(ChannelAttention);

// Bilinear resampling to (round(H * scale), round(W * scale)).
FeatureMap resample(const FeatureMap& x, double scale);

// Bilinear resampling to an explicit spatial size.
FeatureMap resize_to(const FeatureMap& x, int64_t height, int64_t width);

// Nearest-neighbour resampling; used for binary masks.
FeatureMap resize_nearest(const FeatureMap& x, int64_t height, int64_t width);

// Fan-out scaled normal init for every convolution under `module`, unit/zero
// affine parameters for every batch norm, zero conv biases.
void initialize_weights(torch::nn::Module& module);

}  // namespace pfrnet
