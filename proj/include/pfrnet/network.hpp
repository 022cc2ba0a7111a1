#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>

#include "pfrnet/affm.hpp"
#include "pfrnet/backbone.hpp"
#include "pfrnet/cfdm.hpp"
#include "pfrnet/frm.hpp"

namespace pfrnet {

// Ablation configurations A..E.
enum class AblationVariant { kBase, kBaseCfdm, kBaseAffmFrm, kBaseFrmCfdm, kFull };

inline constexpr std::array<AblationVariant, 5> kAllVariants{
    AblationVariant::kBase, AblationVariant::kBaseCfdm, AblationVariant::kBaseAffmFrm,
    AblationVariant::kBaseFrmCfdm, AblationVariant::kFull};

struct EnabledModules {
  bool affm;
  bool frm;
  bool cfdm;
};

EnabledModules enabled_modules(AblationVariant variant);
// "Base", "Base+CFDM", "Base+AFFM+FRM", "Base+FRM+CFDM", "Full".
std::string to_string(AblationVariant variant);
// Accepts the names above, the letters A..E, or "full"/"base" in any case.
AblationVariant parse_variant(const std::string& text);

std::string to_string(HeadResidual residual);
HeadResidual parse_head_residual(const std::string& text);

// Per-channel input statistics applied inside the network.
struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

struct NetworkConfig {
  BackboneSpec backbone = BackboneSpec::stub();
  AblationVariant variant = AblationVariant::kFull;
  DecoderConfig decoder;
  HeadResidual head_residual = HeadResidual::kFromY;
  Normalization normalization;
};

// Logits O1..O3 at strides 4/8/16, O4 at stride 8, and the guidance map.
struct NetworkOutputs {
  FeatureMap o1;
  FeatureMap o2;
  FeatureMap o3;
  FeatureMap o4;
  GuidanceMap ggi;
};

class PfrnetImpl : public torch::nn::Module {
 public:
  explicit PfrnetImpl(NetworkConfig config);

  // `image` is (B, 3, H, W) in [0, 1] with H, W divisible by 32.
  NetworkOutputs forward(const FeatureMap& image);

  // sigmoid(O1) resampled to the input resolution. Runs in eval mode without
  // autograd and restores the previous training flag.
  FeatureMap predict(const FeatureMap& image);

  const NetworkConfig& config() const { return config_; }

  std::shared_ptr<BackboneImpl> backbone;
  Affm affm{nullptr};
  Frm frm{nullptr};
  Cfdm cfdm{nullptr};

 private:
  NetworkConfig config_;
  torch::Tensor mean_;
  torch::Tensor std_;
  // Minimal stand-ins for disabled modules.
  ProjectHigh plain_high_{nullptr};
  PlainConv plain_o4_{nullptr};
  std::array<ConvBlock, 3> plain_refine_{ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}};
  std::array<PlainConv, 3> plain_heads_{PlainConv{nullptr}, PlainConv{nullptr}, PlainConv{nullptr}};
};
TORCH_MODULE(Pfrnet);

// Number of trainable scalars, and how many of them have a nonzero gradient.
struct GradientCoverage {
  int64_t total = 0;
  int64_t nonzero = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(nonzero) / static_cast<double>(total); }
};
GradientCoverage gradient_coverage(const torch::nn::Module& module);

// Checkpoint: a libtorch archive with the module state under "model" and the
// NetworkConfig (including lambda) as a JSON string under "config", plus a
// free-form JSON string under "metadata".
void save_network(Pfrnet& net, const std::filesystem::path& path, const std::string& metadata = "{}");
Pfrnet load_network(const std::filesystem::path& path);
// The "metadata" string, or "{}" when absent.
std::string load_checkpoint_metadata(const std::filesystem::path& path);

std::string network_config_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const std::string& text);

}  // namespace pfrnet
