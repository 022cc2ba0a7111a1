#include "pfrnet/backbone.hpp"

#include <cmath>

namespace pfrnet {
namespace {

namespace nn = torch::nn;

nn::Conv2d conv_nobias(int64_t in, int64_t out, int64_t k, int64_t stride = 1, int64_t pad = 0) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(false));
}

enum class BlockType { kNormal, kStage };

// Bottle2neck: 1x1 reduce, hierarchical 3x3 convs over `scale` width-splits, 1x1 expand.
class Bottle2neckImpl : public nn::Module {
 public:
  static constexpr int64_t kExpansion = 4;

  Bottle2neckImpl(int64_t inplanes, int64_t planes, int64_t stride, nn::Sequential downsample,
                  BlockType type, int64_t base_width = 26, int64_t scale = 4)
      : width_(static_cast<int64_t>(std::floor(static_cast<double>(planes) * base_width / 64.0))),
        scale_(scale),
        nums_(scale == 1 ? 1 : scale - 1),
        type_(type) {
    conv1_ = register_module("conv1", conv_nobias(inplanes, width_ * scale_, 1));
    bn1_ = register_module("bn1", nn::BatchNorm2d(width_ * scale_));
    convs_ = register_module("convs", nn::ModuleList());
    bns_ = register_module("bns", nn::ModuleList());
    for (int64_t i = 0; i < nums_; ++i) {
      convs_->push_back(conv_nobias(width_, width_, 3, stride, 1));
      bns_->push_back(nn::BatchNorm2d(width_));
    }
    if (type_ == BlockType::kStage) {
      pool_ = register_module("pool", nn::AvgPool2d(nn::AvgPool2dOptions(3).stride(stride).padding(1)));
    }
    conv3_ = register_module("conv3", conv_nobias(width_ * scale_, planes * kExpansion, 1));
    bn3_ = register_module("bn3", nn::BatchNorm2d(planes * kExpansion));
    if (downsample) downsample_ = register_module("downsample", std::move(downsample));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1_->forward(conv1_->forward(x)));
    auto spx = torch::split(out, width_, 1);
    std::vector<torch::Tensor> pieces;
    pieces.reserve(static_cast<size_t>(scale_));
    torch::Tensor sp;
    for (int64_t i = 0; i < nums_; ++i) {
      const auto idx = static_cast<size_t>(i);
      sp = (i == 0 || type_ == BlockType::kStage) ? spx[idx] : sp + spx[idx];
      sp = convs_[idx]->as<nn::Conv2d>()->forward(sp);
      sp = torch::relu(bns_[idx]->as<nn::BatchNorm2d>()->forward(sp));
      pieces.push_back(sp);
    }
    if (scale_ != 1) {
      const auto& last = spx[static_cast<size_t>(nums_)];
      pieces.push_back(type_ == BlockType::kStage ? pool_->forward(last) : last);
    }
    out = bn3_->forward(conv3_->forward(torch::cat(pieces, 1)));
    auto residual = downsample_ ? downsample_->forward(x) : x;
    return torch::relu(out + residual);
  }

 private:
  int64_t width_;
  int64_t scale_;
  int64_t nums_;
  BlockType type_;
  nn::Conv2d conv1_{nullptr};
  nn::BatchNorm2d bn1_{nullptr};
  nn::ModuleList convs_{nullptr};
  nn::ModuleList bns_{nullptr};
  nn::AvgPool2d pool_{nullptr};
  nn::Conv2d conv3_{nullptr};
  nn::BatchNorm2d bn3_{nullptr};
  nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottle2neck);

nn::Sequential make_res2net_layer(int64_t& inplanes, int64_t planes, int64_t blocks, int64_t stride) {
  nn::Sequential downsample{nullptr};
  if (stride != 1 || inplanes != planes * Bottle2neckImpl::kExpansion) {
    downsample = nn::Sequential(
        nn::AvgPool2d(nn::AvgPool2dOptions(stride).stride(stride).ceil_mode(true).count_include_pad(false)),
        conv_nobias(inplanes, planes * Bottle2neckImpl::kExpansion, 1),
        nn::BatchNorm2d(planes * Bottle2neckImpl::kExpansion));
  }
  nn::Sequential layer;
  layer->push_back(Bottle2neck(inplanes, planes, stride, downsample, BlockType::kStage));
  inplanes = planes * Bottle2neckImpl::kExpansion;
  for (int64_t i = 1; i < blocks; ++i) {
    layer->push_back(Bottle2neck(inplanes, planes, 1, nn::Sequential{nullptr}, BlockType::kNormal));
  }
  return layer;
}

}  // namespace

void FeaturePyramid::validate() const {
  const std::array<const FeatureMap*, 4> levels{&f1, &f2, &f3, &f4};
  for (const auto* f : levels) require_feature_map(*f, "feature pyramid");
  for (size_t i = 1; i < levels.size(); ++i) {
    const auto& fine = *levels[i - 1];
    const auto& coarse = *levels[i];
    if (coarse.size(0) != fine.size(0)) throw ShapeError("feature pyramid: batch sizes differ");
    if (fine.size(2) != 2 * coarse.size(2) || fine.size(3) != 2 * coarse.size(3)) {
      throw ShapeError("feature pyramid: level " + std::to_string(i + 1) + " " +
                       shape_string(coarse) + " is not half of " + shape_string(fine));
    }
  }
}

BackboneSpec BackboneSpec::stub() { return BackboneSpec{"stub", {16, 32, 64, 128}, std::nullopt}; }

BackboneSpec BackboneSpec::wide_stub() {
  return BackboneSpec{"wide_stub", {256, 512, 1024, 2048}, std::nullopt};
}

BackboneSpec BackboneSpec::res2net50() {
  return BackboneSpec{"res2net50", {256, 512, 1024, 2048}, std::nullopt};
}

BackboneSpec BackboneSpec::from_name(const std::string& name) {
  if (name == "stub") return stub();
  if (name == "wide_stub") return wide_stub();
  if (name == "res2net50") return res2net50();
  throw std::invalid_argument("unknown backbone '" + name + "' (expected stub, wide_stub or res2net50)");
}

StubBackboneImpl::StubBackboneImpl(BackboneSpec spec) : spec_(std::move(spec)) {
  for (auto c : spec_.channels) {
    if (c < 1) throw std::invalid_argument("backbone: channel counts must be positive");
  }
  const int64_t stem_channels = std::max<int64_t>(32, spec_.channels[0] / 2);
  stem_ = register_module("stem", ConvBlock(3, stem_channels, 3, 1, 2));
  int64_t in = stem_channels;
  for (size_t i = 0; i < 4; ++i) {
    const auto out = spec_.channels[i];
    down_[i] = register_module("down" + std::to_string(i + 1), ConvBlock(in, out, 3, 1, 2));
    residual_[i] = register_module("res" + std::to_string(i + 1), ConvBlock(out, out, 3));
    in = out;
  }
}

FeaturePyramid StubBackboneImpl::extract(const FeatureMap& image) {
  auto x = stem_->forward(image);
  std::array<FeatureMap, 4> levels;
  for (size_t i = 0; i < 4; ++i) {
    x = down_[i]->forward(x);
    x = x + residual_[i]->forward(x);
    levels[i] = x;
  }
  return {levels[0], levels[1], levels[2], levels[3]};
}

Res2Net50Impl::Res2Net50Impl(BackboneSpec spec) : spec_(std::move(spec)) {
  if (spec_.channels != BackboneSpec::res2net50().channels) {
    throw std::invalid_argument("res2net50: channel widths are fixed at (256, 512, 1024, 2048)");
  }
  stem_ = register_module(
      "conv1", nn::Sequential(conv_nobias(3, 32, 3, 2, 1), nn::BatchNorm2d(32), nn::ReLU(),
                              conv_nobias(32, 32, 3, 1, 1), nn::BatchNorm2d(32), nn::ReLU(),
                              conv_nobias(32, 64, 3, 1, 1)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(64));
  int64_t inplanes = 64;
  const std::array<int64_t, 4> planes{64, 128, 256, 512};
  const std::array<int64_t, 4> blocks{3, 4, 6, 3};
  for (size_t i = 0; i < 4; ++i) {
    layers_[i] = register_module("layer" + std::to_string(i + 1),
                                 make_res2net_layer(inplanes, planes[i], blocks[i], i == 0 ? 1 : 2));
  }
  initialize_weights(*this);
}

FeaturePyramid Res2Net50Impl::extract(const FeatureMap& image) {
  auto x = torch::relu(bn1_->forward(stem_->forward(image)));
  x = torch::max_pool2d(x, 3, 2, 1);
  auto f1 = layers_[0]->forward(x);
  auto f2 = layers_[1]->forward(f1);
  auto f3 = layers_[2]->forward(f2);
  auto f4 = layers_[3]->forward(f3);
  return {f1, f2, f3, f4};
}

std::shared_ptr<BackboneImpl> make_backbone(const BackboneSpec& spec) {
  for (auto c : spec.channels) {
    if (c < 1) throw std::invalid_argument("backbone: channel counts must be positive");
  }
  std::shared_ptr<BackboneImpl> backbone;
  if (spec.name == "stub" || spec.name == "wide_stub") {
    backbone = std::make_shared<StubBackboneImpl>(spec);
  } else if (spec.name == "res2net50") {
    backbone = std::make_shared<Res2Net50Impl>(spec);
  } else {
    throw std::invalid_argument("unknown backbone '" + spec.name + "'");
  }
  if (spec.pretrained_weights_path) {
    const auto& path = *spec.pretrained_weights_path;
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("backbone: pretrained weights file not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    backbone->load(archive);
  }
  return backbone;
}

void require_divisible_by_32(const FeatureMap& image, std::string_view what) {
  require_feature_map(image, what);
  if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0) {
    throw ShapeError(std::string(what) + ": image height and width must be divisible by 32, got " +
                     shape_string(image));
  }
}

FeaturePyramid extract_features(const FeatureMap& image, BackboneImpl& backbone) {
  require_channels(image, 3, "extract_features");
  require_divisible_by_32(image, "extract_features");
  auto pyramid = backbone.extract(image);
  pyramid.validate();
  return pyramid;
}

}  // namespace pfrnet
