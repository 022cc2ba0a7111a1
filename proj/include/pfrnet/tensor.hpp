#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pfrnet {

// Dense (batch, channel, row, col) activations. Every module boundary in the
// network passes these.
using FeatureMap = torch::Tensor;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const torch::Tensor& t);

// Throws ShapeError unless `x` is 4-D with all extents >= 1.
void require_feature_map(const torch::Tensor& x, std::string_view what);

// Throws ShapeError unless `x` is a feature map with exactly `channels` channels.
void require_channels(const torch::Tensor& x, int64_t channels, std::string_view what);

void require_same_spatial(const torch::Tensor& a, const torch::Tensor& b, std::string_view what);

// Throws unless `coarse` has `fine`'s batch and exactly half its spatial extents.
void require_half_size(const torch::Tensor& fine, const torch::Tensor& coarse, std::string_view what);

bool all_finite(const torch::Tensor& x);

}  // namespace pfrnet
