#include "pfrnet/network.hpp"

#include <algorithm>
#include <cctype>
#include <json.hpp>

namespace pfrnet {

EnabledModules enabled_modules(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::kBase:
      return {false, false, false};
    case AblationVariant::kBaseCfdm:
      return {false, false, true};
    case AblationVariant::kBaseAffmFrm:
      return {true, true, false};
    case AblationVariant::kBaseFrmCfdm:
      return {false, true, true};
    case AblationVariant::kFull:
      return {true, true, true};
  }
  throw std::logic_error("unhandled ablation variant");
}

std::string to_string(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::kBase:
      return "Base";
    case AblationVariant::kBaseCfdm:
      return "Base+CFDM";
    case AblationVariant::kBaseAffmFrm:
      return "Base+AFFM+FRM";
    case AblationVariant::kBaseFrmCfdm:
      return "Base+FRM+CFDM";
    case AblationVariant::kFull:
      return "Full";
  }
  throw std::logic_error("unhandled ablation variant");
}

AblationVariant parse_variant(const std::string& text) {
  std::string t;
  std::transform(text.begin(), text.end(), std::back_inserter(t),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (t == "A" || t == "BASE") return AblationVariant::kBase;
  if (t == "B" || t == "BASE+CFDM") return AblationVariant::kBaseCfdm;
  if (t == "C" || t == "BASE+AFFM+FRM") return AblationVariant::kBaseAffmFrm;
  if (t == "D" || t == "BASE+FRM+CFDM") return AblationVariant::kBaseFrmCfdm;
  if (t == "E" || t == "FULL" || t == "BASE+AFFM+FRM+CFDM") return AblationVariant::kFull;
  throw std::invalid_argument("unknown ablation variant '" + text + "'");
}

std::string to_string(HeadResidual residual) { return residual == HeadResidual::kFromY ? "y" : "z"; }

HeadResidual parse_head_residual(const std::string& text) {
  if (text == "y" || text == "Y") return HeadResidual::kFromY;
  if (text == "z" || text == "Z") return HeadResidual::kFromZ;
  throw std::invalid_argument("head residual must be 'y' or 'z', got '" + text + "'");
}

PfrnetImpl::PfrnetImpl(NetworkConfig config) : config_(std::move(config)) {
  // Saturated sigmoid gates otherwise yield subnormal floats, which are very slow on CPU.
  at::globalContext().setFlushDenormal(true);
  config_.decoder.validate();
  const auto mods = enabled_modules(config_.variant);
  const auto& ch = config_.backbone.channels;

  backbone = register_module("backbone", make_backbone(config_.backbone));
  mean_ = register_buffer("input_mean", torch::tensor(std::vector<double>(config_.normalization.mean.begin(),
                                                                          config_.normalization.mean.end()),
                                                      torch::kFloat)
                                            .view({1, 3, 1, 1}));
  std_ = register_buffer("input_std", torch::tensor(std::vector<double>(config_.normalization.std.begin(),
                                                                        config_.normalization.std.end()),
                                                    torch::kFloat)
                                          .view({1, 3, 1, 1}));

  if (mods.affm) {
    affm = register_module("affm", Affm(ch));
  } else {
    plain_high_ = register_module("plain_high", ProjectHigh(ch[1], ch[2], ch[3]));
    plain_o4_ = register_module("plain_o4", PlainConv(3 * kAffmWidth, 1, 1));
  }
  if (mods.frm) {
    frm = register_module("frm", Frm(ch));
  } else {
    for (size_t i = 0; i < 3; ++i) {
      plain_refine_[i] =
          register_module("plain_refine" + std::to_string(i + 1), ConvBlock(ch[i], kRefineWidth, 3));
    }
  }
  if (mods.cfdm) {
    cfdm = register_module("cfdm", Cfdm(config_.decoder, config_.head_residual));
  } else {
    for (size_t i = 0; i < 3; ++i) {
      plain_heads_[i] = register_module("plain_head" + std::to_string(i + 1), PlainConv(kRefineWidth, 1, 1));
    }
  }
}

NetworkOutputs PfrnetImpl::forward(const FeatureMap& image) {
  require_channels(image, 3, "pfrnet");
  require_divisible_by_32(image, "pfrnet");
  auto x = (image - mean_.to(image.dtype())) / std_.to(image.dtype());
  auto pyramid = extract_features(x, *backbone);

  NetworkOutputs out;
  if (affm) {
    auto a = affm->forward(pyramid);
    out.o4 = a.o4;
    out.ggi = a.ggi;
  } else {
    auto high = plain_high_->forward(pyramid.f2, pyramid.f3, pyramid.f4);
    out.o4 = plain_o4_->forward(torch::cat({high.x1, high.x2, high.x3}, 1));
    out.ggi = constant_guidance(out.o4, 0.5);
  }

  const std::array<const FeatureMap*, 3> levels{&pyramid.f1, &pyramid.f2, &pyramid.f3};
  std::array<FeatureMap, 3> rf;
  for (size_t i = 0; i < 3; ++i) {
    rf[i] = frm ? frm->levels[i]->forward(*levels[i], out.ggi) : plain_refine_[i]->forward(*levels[i]);
  }

  if (cfdm) {
    auto o = cfdm->forward(rf);
    out.o1 = o[0];
    out.o2 = o[1];
    out.o3 = o[2];
  } else {
    out.o1 = plain_heads_[0]->forward(rf[0]);
    out.o2 = plain_heads_[1]->forward(rf[1]);
    out.o3 = plain_heads_[2]->forward(rf[2]);
  }
  return out;
}

FeatureMap PfrnetImpl::predict(const FeatureMap& image) {
  const bool was_training = is_training();
  eval();
  torch::NoGradGuard no_grad;
  FeatureMap pred;
  try {
    auto out = forward(image);
    pred = resize_to(torch::sigmoid(out.o1), image.size(2), image.size(3)).clamp(0.0, 1.0);
  } catch (...) {
    train(was_training);
    throw;
  }
  train(was_training);
  return pred;
}

GradientCoverage gradient_coverage(const torch::nn::Module& module) {
  GradientCoverage cov;
  for (const auto& p : module.parameters()) {
    if (!p.requires_grad()) continue;
    cov.total += p.numel();
    if (p.grad().defined()) cov.nonzero += (p.grad() != 0).sum().item<int64_t>();
  }
  return cov;
}

std::string network_config_json(const NetworkConfig& config) {
  nlohmann::json j;
  j["backbone"] = {{"name", config.backbone.name}, {"channels", config.backbone.channels}};
  j["variant"] = to_string(config.variant);
  j["lambda"] = config.decoder.lambda;
  j["head_residual"] = to_string(config.head_residual);
  j["normalization"] = {{"mean", config.normalization.mean}, {"std", config.normalization.std}};
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  NetworkConfig c;
  c.backbone = BackboneSpec::from_name(j.at("backbone").at("name").get<std::string>());
  c.backbone.channels = j.at("backbone").at("channels").get<std::array<int64_t, 4>>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.decoder.lambda = j.at("lambda").get<double>();
  c.head_residual = parse_head_residual(j.at("head_residual").get<std::string>());
  c.normalization.mean = j.at("normalization").at("mean").get<std::array<double, 3>>();
  c.normalization.std = j.at("normalization").at("std").get<std::array<double, 3>>();
  return c;
}

void save_network(Pfrnet& net, const std::filesystem::path& path, const std::string& metadata) {
  torch::serialize::OutputArchive model;
  net->save(model);
  torch::serialize::OutputArchive archive;
  archive.write("model", model);
  archive.write("config", c10::IValue(network_config_json(net->config())));
  archive.write("metadata", c10::IValue(metadata));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

Pfrnet load_network(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue config_value;
  if (!archive.try_read("config", config_value)) {
    throw std::runtime_error("checkpoint " + path.string() + " has no network config");
  }
  auto config = network_config_from_json(config_value.toStringRef());
  Pfrnet net(config);
  torch::serialize::InputArchive model;
  archive.read("model", model);
  net->load(model);
  return net;
}

std::string load_checkpoint_metadata(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue value;
  if (!archive.try_read("metadata", value)) return "{}";
  return value.toStringRef();
}

}  // namespace pfrnet
