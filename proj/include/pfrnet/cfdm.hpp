#pragma once

#include <array>
#include <optional>

#include "pfrnet/blocks.hpp"

namespace pfrnet {

inline constexpr int64_t kDecoderWidth = 256;
inline constexpr int64_t kBranchWidth = kDecoderWidth / 4;

struct DecoderConfig {
  // Branch residual scale: z' = y + lambda * z. Must lie in (0, 1].
  double lambda = 0.5;

  void validate() const;
};

// Which tensor feeds the residual projection of the decoding head.
enum class HeadResidual { kFromY, kFromZ };

// Four contiguous 64-channel slices of a 256-channel map.
struct BranchSet {
  std::array<FeatureMap, 4> parts;

  FeatureMap concat() const;
};

BranchSet split4(const FeatureMap& y);

// Guidance-gated residual of the next-coarser logits onto a refined feature:
// y = Conv3x3(rf * sigmoid(up2(o_next)) + rf).
class PpoImpl : public torch::nn::Module {
 public:
  PpoImpl();

  FeatureMap forward(const FeatureMap& rf, const FeatureMap& o_next);
  // The tensor fed to the 3x3 conv_block.
  FeatureMap gated(const FeatureMap& rf, const FeatureMap& o_next) const;

 private:
  ConvBlock conv_{nullptr};
};
TORCH_MODULE(Ppo);

// CB_j, j in 1..4: conv_block stack ending in a dilated plain 3x3 convolution.
//   CB1 = D3x3^1 . C1x1
//   CB2 = D3x3^3 . C3x1 . C1x1
//   CB3 = D3x3^3 . C1x3 . C1x1
//   CB4 = D3x3^5 . C1x3 . C3x1 . C1x1
torch::nn::Sequential make_context_branch(int j, int64_t channels = kBranchWidth);

// z1 = CB1(y1 + y2); z2 = CB2(z1 + y2 + y3); z3 = CB3(z2 + y3 + y4); z4 = CB4(z3 + y4).
class BranchInteractImpl : public torch::nn::Module {
 public:
  BranchInteractImpl();

  std::array<FeatureMap, 4> forward(const BranchSet& y);

  std::array<torch::nn::Sequential, 4> branches{torch::nn::Sequential{nullptr}, torch::nn::Sequential{nullptr},
                                                torch::nn::Sequential{nullptr}, torch::nn::Sequential{nullptr}};
};
TORCH_MODULE(BranchInteract);

// Concatenation of y^j + lambda * z^j over the four branches. lambda may be 0
// here; DecoderConfig restricts the trained value to (0, 1].
FeatureMap residual_merge(const std::array<FeatureMap, 4>& z, const BranchSet& y, double lambda);

// O = Conv1x1(ReLU(Conv1x1(Z)) + Conv1x1(r)), r = y or Z per HeadResidual.
class DecodeHeadImpl : public torch::nn::Module {
 public:
  explicit DecodeHeadImpl(HeadResidual residual = HeadResidual::kFromY);

  FeatureMap forward(const FeatureMap& merged, const FeatureMap& y);

 private:
  HeadResidual residual_;
  PlainConv linear_{nullptr};
  PlainConv skip_{nullptr};
  PlainConv out_{nullptr};
};
TORCH_MODULE(DecodeHead);

struct CfdmLevelOutput {
  FeatureMap y;
  std::array<FeatureMap, 4> z;
  FeatureMap merged;
  FeatureMap logits;
};

// Decoder for one level. Level 3 has no PPO (y3 = RF3).
class CfdmLevelImpl : public torch::nn::Module {
 public:
  CfdmLevelImpl(int level, DecoderConfig config, HeadResidual residual = HeadResidual::kFromY);

  CfdmLevelOutput forward(const FeatureMap& rf, const std::optional<FeatureMap>& o_next);

  int level() const { return level_; }
  double lambda() const { return config_.lambda; }

  Ppo ppo{nullptr};
  BranchInteract interact{nullptr};
  DecodeHead head{nullptr};

 private:
  int level_;
  DecoderConfig config_;
};
TORCH_MODULE(CfdmLevel);

class CfdmImpl : public torch::nn::Module {
 public:
  explicit CfdmImpl(DecoderConfig config, HeadResidual residual = HeadResidual::kFromY);

  // Top-down decode; returns (O1, O2, O3).
  std::array<FeatureMap, 3> forward(const std::array<FeatureMap, 3>& rf);

  std::array<CfdmLevel, 3> levels{CfdmLevel{nullptr}, CfdmLevel{nullptr}, CfdmLevel{nullptr}};
};
TORCH_MODULE(Cfdm);

}  // namespace pfrnet
