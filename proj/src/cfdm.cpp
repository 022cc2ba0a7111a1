#include "pfrnet/cfdm.hpp"

#include <string>

namespace pfrnet {

void DecoderConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("decoder: lambda must lie in (0, 1], got " + std::to_string(lambda));
  }
}

FeatureMap BranchSet::concat() const { return torch::cat({parts[0], parts[1], parts[2], parts[3]}, 1); }

BranchSet split4(const FeatureMap& y) {
  require_feature_map(y, "split4");
  const auto c = y.size(1);
  if (c % 4 != 0) {
    throw ShapeError("split4: channel count must be divisible by 4, got " + shape_string(y));
  }
  const auto w = c / 4;
  return {{y.narrow(1, 0, w), y.narrow(1, w, w), y.narrow(1, 2 * w, w), y.narrow(1, 3 * w, w)}};
}

PpoImpl::PpoImpl() { conv_ = register_module("conv", ConvBlock(kDecoderWidth, kDecoderWidth, 3)); }

FeatureMap PpoImpl::gated(const FeatureMap& rf, const FeatureMap& o_next) const {
  require_feature_map(o_next, "ppo");
  if (o_next.size(1) != 1) throw ShapeError("ppo: o_next must have one channel, got " + shape_string(o_next));
  require_half_size(rf, o_next, "ppo");
  auto gate = torch::sigmoid(resize_to(o_next, rf.size(2), rf.size(3)));
  return rf * gate + rf;
}

FeatureMap PpoImpl::forward(const FeatureMap& rf, const FeatureMap& o_next) {
  return conv_->forward(gated(rf, o_next));
}

torch::nn::Sequential make_context_branch(int j, int64_t channels) {
  torch::nn::Sequential seq;
  seq->push_back(ConvBlock(channels, channels, 1));
  switch (j) {
    case 1:
      seq->push_back(PlainConv(channels, channels, 3, 1));
      break;
    case 2:
      seq->push_back(ConvBlock(channels, channels, KernelSize{3, 1}));
      seq->push_back(PlainConv(channels, channels, 3, 3));
      break;
    case 3:
      seq->push_back(ConvBlock(channels, channels, KernelSize{1, 3}));
      seq->push_back(PlainConv(channels, channels, 3, 3));
      break;
    case 4:
      seq->push_back(ConvBlock(channels, channels, KernelSize{3, 1}));
      seq->push_back(ConvBlock(channels, channels, KernelSize{1, 3}));
      seq->push_back(PlainConv(channels, channels, 3, 5));
      break;
    default:
      throw std::invalid_argument("context branch index must be 1..4, got " + std::to_string(j));
  }
  return seq;
}

BranchInteractImpl::BranchInteractImpl() {
  for (int j = 1; j <= 4; ++j) {
    branches[static_cast<size_t>(j - 1)] = register_module("cb" + std::to_string(j), make_context_branch(j));
  }
}

std::array<FeatureMap, 4> BranchInteractImpl::forward(const BranchSet& y) {
  for (const auto& p : y.parts) require_channels(p, kBranchWidth, "branch_interact");
  const auto& [y1, y2, y3, y4] = y.parts;
  auto z1 = branches[0]->forward(y1 + y2);
  auto z2 = branches[1]->forward(z1 + y2 + y3);
  auto z3 = branches[2]->forward(z2 + y3 + y4);
  auto z4 = branches[3]->forward(z3 + y4);
  return {z1, z2, z3, z4};
}

FeatureMap residual_merge(const std::array<FeatureMap, 4>& z, const BranchSet& y, double lambda) {
  std::vector<torch::Tensor> merged;
  merged.reserve(4);
  for (size_t j = 0; j < 4; ++j) {
    if (!z[j].sizes().equals(y.parts[j].sizes())) {
      throw ShapeError("residual_merge: branch " + std::to_string(j + 1) + " shape mismatch " +
                       shape_string(z[j]) + " vs " + shape_string(y.parts[j]));
    }
    merged.push_back(y.parts[j] + lambda * z[j]);
  }
  return torch::cat(merged, 1);
}

DecodeHeadImpl::DecodeHeadImpl(HeadResidual residual) : residual_(residual) {
  linear_ = register_module("linear", PlainConv(kDecoderWidth, kDecoderWidth, 1));
  skip_ = register_module("skip", PlainConv(kDecoderWidth, kDecoderWidth, 1));
  out_ = register_module("out", PlainConv(kDecoderWidth, 1, 1));
}

FeatureMap DecodeHeadImpl::forward(const FeatureMap& merged, const FeatureMap& y) {
  require_channels(merged, kDecoderWidth, "head");
  require_channels(y, kDecoderWidth, "head");
  if (!merged.sizes().equals(y.sizes())) {
    throw ShapeError("head: Z " + shape_string(merged) + " and y " + shape_string(y) + " differ");
  }
  const auto& source = residual_ == HeadResidual::kFromY ? y : merged;
  return out_->forward(torch::relu(linear_->forward(merged)) + skip_->forward(source));
}

CfdmLevelImpl::CfdmLevelImpl(int level, DecoderConfig config, HeadResidual residual)
    : level_(level), config_(config) {
  if (level < 1 || level > 3) throw std::invalid_argument("cfdm: level must be 1, 2 or 3");
  config_.validate();
  if (level_ < 3) ppo = register_module("ppo", Ppo());
  interact = register_module("interact", BranchInteract());
  head = register_module("head", DecodeHead(residual));
}

CfdmLevelOutput CfdmLevelImpl::forward(const FeatureMap& rf, const std::optional<FeatureMap>& o_next) {
  require_channels(rf, kDecoderWidth, "cfdm");
  CfdmLevelOutput out;
  if (level_ == 3) {
    out.y = rf;
  } else {
    if (!o_next) throw std::invalid_argument("cfdm: levels 1 and 2 need the next-coarser output");
    out.y = ppo->forward(rf, *o_next);
  }
  auto parts = split4(out.y);
  out.z = interact->forward(parts);
  out.merged = residual_merge(out.z, parts, config_.lambda);
  out.logits = head->forward(out.merged, out.y);
  return out;
}

CfdmImpl::CfdmImpl(DecoderConfig config, HeadResidual residual) {
  for (int i = 0; i < 3; ++i) {
    levels[static_cast<size_t>(i)] =
        register_module("level" + std::to_string(i + 1), CfdmLevel(i + 1, config, residual));
  }
}

std::array<FeatureMap, 3> CfdmImpl::forward(const std::array<FeatureMap, 3>& rf) {
  auto o3 = levels[2]->forward(rf[2], std::nullopt).logits;
  auto o2 = levels[1]->forward(rf[1], o3).logits;
  auto o1 = levels[0]->forward(rf[0], o2).logits;
  return {o1, o2, o3};
}

}  // namespace pfrnet
