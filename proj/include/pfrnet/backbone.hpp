#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "pfrnet/blocks.hpp"

namespace pfrnet {

// Four backbone levels at strides 4/8/16/32. The stride-2 stem level is not part
// of the pyramid.
struct FeaturePyramid {
  FeatureMap f1;
  FeatureMap f2;
  FeatureMap f3;
  FeatureMap f4;

  // Throws ShapeError unless batch sizes agree and each level halves the last.
  void validate() const;
};

struct BackboneSpec {
  std::string name = "stub";
  std::array<int64_t, 4> channels{16, 32, 64, 128};
  std::optional<std::filesystem::path> pretrained_weights_path;

  static BackboneSpec stub();
  // Stub topology with Res2Net-50 channel widths; full-scale shapes at desk cost.
  static BackboneSpec wide_stub();
  static BackboneSpec res2net50();
  // "stub", "wide_stub" or "res2net50".
  static BackboneSpec from_name(const std::string& name);
};

class BackboneImpl : public torch::nn::Module {
 public:
  virtual FeaturePyramid extract(const FeatureMap& image) = 0;
  virtual const BackboneSpec& spec() const = 0;
};

// Four stages of (strided 3x3 conv_block, residual 3x3 conv_block) behind a
// stride-2 stem.
class StubBackboneImpl : public BackboneImpl {
 public:
  explicit StubBackboneImpl(BackboneSpec spec);

  FeaturePyramid extract(const FeatureMap& image) override;
  const BackboneSpec& spec() const override { return spec_; }

 private:
  BackboneSpec spec_;
  ConvBlock stem_{nullptr};
  std::array<ConvBlock, 4> down_{ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}};
  std::array<ConvBlock, 4> residual_{ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}};
};

// Res2Net-50 v1b, 26w x 4s: deep stem, bottle2neck stages [3, 4, 6, 3].
// Parameter names follow the reference PyTorch layout (conv1.0, layer1.0.convs.0, ...).
class Res2Net50Impl : public BackboneImpl {
 public:
  explicit Res2Net50Impl(BackboneSpec spec);

  FeaturePyramid extract(const FeatureMap& image) override;
  const BackboneSpec& spec() const override { return spec_; }

 private:
  BackboneSpec spec_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  std::array<torch::nn::Sequential, 4> layers_{torch::nn::Sequential{nullptr}, torch::nn::Sequential{nullptr},
                                               torch::nn::Sequential{nullptr}, torch::nn::Sequential{nullptr}};
};

// Builds the backbone named by `spec`; loads `pretrained_weights_path` (a libtorch
// serialized module archive) when set. Throws if the file does not exist.
std::shared_ptr<BackboneImpl> make_backbone(const BackboneSpec& spec);

// Validates the image (3 channels, H and W divisible by 32) and runs the backbone.
FeaturePyramid extract_features(const FeatureMap& image, BackboneImpl& backbone);

void require_divisible_by_32(const FeatureMap& image, std::string_view what);

}  // namespace pfrnet
