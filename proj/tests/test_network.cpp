#include <doctest.h>

#include "pfrnet/losses.hpp"
#include "pfrnet/network.hpp"
#include "support.hpp"

using namespace pfrnet;
using testing::same_size;

namespace {

Pfrnet make_net(AblationVariant v = AblationVariant::kFull, uint64_t seed = 0) {
  torch::manual_seed(seed);
  NetworkConfig c;
  c.variant = v;
  return Pfrnet(c);
}

torch::Tensor toy_mask(int64_t b, int64_t s, uint64_t seed) {
  return (testing::rand({b, 1, s, s}, seed) > 0.6).to(torch::kFloat);
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("full shapes at 352 with res2net50") {
  torch::manual_seed(0);
  NetworkConfig c;
  c.backbone = BackboneSpec::res2net50();
  Pfrnet net(c);
  net->eval();
  torch::NoGradGuard g;
  const auto o = net->forward(testing::rand({1, 3, 352, 352}, 1));
  CHECK(same_size(o.o1, {1, 1, 88, 88}));
  CHECK(same_size(o.o2, {1, 1, 44, 44}));
  CHECK(same_size(o.o3, {1, 1, 22, 22}));
  CHECK(same_size(o.o4, {1, 1, 44, 44}));
  CHECK(same_size(o.ggi.values, {1, 1, 44, 44}));
}

TEST_CASE("stub shapes at 64") {
  auto net = make_net();
  const auto o = net->forward(testing::rand({2, 3, 64, 64}, 2));
  CHECK(same_size(o.o1, {2, 1, 16, 16}));
  CHECK(same_size(o.o2, {2, 1, 8, 8}));
  CHECK(same_size(o.o3, {2, 1, 4, 4}));
  CHECK(same_size(o.o4, {2, 1, 8, 8}));
}

TEST_CASE("every variant matches the full output shapes") {
  const auto x = testing::rand({2, 3, 64, 64}, 3);
  auto full = make_net();
  const auto ref = full->forward(x);
  for (auto v : kAllVariants) {
    auto net = make_net(v);
    const auto o = net->forward(x);
    CHECK(o.o1.sizes() == ref.o1.sizes());
    CHECK(o.o2.sizes() == ref.o2.sizes());
    CHECK(o.o3.sizes() == ref.o3.sizes());
    CHECK(o.o4.sizes() == ref.o4.sizes());
    CHECK(o.ggi.values.sizes() == ref.ggi.values.sizes());
    const auto m = enabled_modules(v);
    CHECK(static_cast<bool>(net->affm) == m.affm);
    CHECK(static_cast<bool>(net->frm) == m.frm);
    CHECK(static_cast<bool>(net->cfdm) == m.cfdm);
  }
}

TEST_CASE("base variant uses constant guidance") {
  auto net = make_net(AblationVariant::kBase);
  const auto o = net->forward(testing::rand({1, 3, 64, 64}, 4));
  CHECK(testing::max_abs(o.ggi.values - 0.5) == 0.0);
}

TEST_CASE("variant table and names") {
  CHECK(enabled_modules(AblationVariant::kBase).affm == false);
  CHECK(enabled_modules(AblationVariant::kBaseCfdm).cfdm == true);
  CHECK(enabled_modules(AblationVariant::kBaseCfdm).frm == false);
  CHECK(enabled_modules(AblationVariant::kBaseAffmFrm).affm == true);
  CHECK(enabled_modules(AblationVariant::kBaseAffmFrm).cfdm == false);
  CHECK(enabled_modules(AblationVariant::kBaseFrmCfdm).affm == false);
  CHECK(enabled_modules(AblationVariant::kBaseFrmCfdm).frm == true);
  const auto f = enabled_modules(AblationVariant::kFull);
  CHECK((f.affm && f.frm && f.cfdm));
  const char letters[] = "ABCDE";
  for (size_t i = 0; i < kAllVariants.size(); ++i) {
    CHECK(parse_variant(to_string(kAllVariants[i])) == kAllVariants[i]);
    CHECK(parse_variant(std::string(1, letters[i])) == kAllVariants[i]);
  }
  CHECK(parse_variant("full") == AblationVariant::kFull);
  CHECK_THROWS_AS(parse_variant("F"), std::invalid_argument);
  CHECK(parse_head_residual(to_string(HeadResidual::kFromZ)) == HeadResidual::kFromZ);
}

TEST_CASE("predict") {
  auto net = make_net();
  net->train();
  const auto x = testing::rand({1, 3, 64, 64}, 5);
  const auto a = net->predict(x);
  const auto b = net->predict(x);
  CHECK(same_size(a, {1, 1, 64, 64}));
  CHECK(a.min().item<double>() >= 0.0);
  CHECK(a.max().item<double>() <= 1.0);
  CHECK(torch::equal(a, b));
  CHECK(net->is_training());
  CHECK_FALSE(a.requires_grad());
}

TEST_CASE("zero O1 logits predict one half") {
  auto net = make_net();
  {
    torch::NoGradGuard g;
    for (auto& p : net->named_parameters()) {
      if (p.key().rfind("cfdm.level1.head.out.", 0) == 0) p.value().zero_();
    }
  }
  const auto pred = net->predict(testing::rand({1, 3, 64, 64}, 6));
  CHECK(testing::max_abs(pred - 0.5) == 0.0);
}

TEST_CASE("input preconditions") {
  auto net = make_net();
  CHECK_THROWS_AS(net->forward(torch::rand({1, 3, 100, 100})), ShapeError);
  CHECK_THROWS_AS(net->forward(torch::rand({1, 1, 64, 64})), ShapeError);
  NetworkConfig c;
  c.decoder.lambda = 0.0;
  CHECK_THROWS_AS(Pfrnet{c}, std::invalid_argument);
}

TEST_CASE("outputs stay finite across seeds") {
  int bad = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto net = make_net(AblationVariant::kFull, seed);
    net->eval();
    const auto o = net->forward(testing::rand({1, 3, 32, 32}, 1000 + seed));
    if (!(all_finite(o.o1) && all_finite(o.o2) && all_finite(o.o3) && all_finite(o.o4))) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("gradient reaches nearly every parameter") {
  auto net = make_net(AblationVariant::kFull, 7);
  net->train();
  const auto losses = total_loss(net->forward(testing::rand({2, 3, 64, 64}, 8)), toy_mask(2, 64, 9));
  losses.total.backward();
  const auto cov = gradient_coverage(*net);
  CHECK(cov.total > 0);
  CHECK(cov.fraction() >= 0.99);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("net");
  torch::manual_seed(10);
  NetworkConfig c;
  c.variant = AblationVariant::kBaseFrmCfdm;
  c.decoder.lambda = 0.3;
  c.head_residual = HeadResidual::kFromZ;
  Pfrnet net(c);
  // move the BN statistics off their defaults
  net->forward(testing::rand({2, 3, 64, 64}, 11));
  save_network(net, dir / "ckpt.pt", R"({"step":3})");
  auto back = load_network(dir / "ckpt.pt");
  CHECK(back->config().variant == AblationVariant::kBaseFrmCfdm);
  CHECK(back->config().decoder.lambda == 0.3);
  CHECK(back->config().head_residual == HeadResidual::kFromZ);
  const auto x = testing::rand({1, 3, 64, 64}, 12);
  CHECK(torch::equal(net->predict(x), back->predict(x)));
  CHECK(load_checkpoint_metadata(dir / "ckpt.pt") == R"({"step":3})");
  CHECK_THROWS_AS(load_network(dir / "missing.pt"), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint_metadata(dir / "missing.pt"), std::runtime_error);
}

TEST_CASE("network config json round trip") {
  NetworkConfig c;
  c.backbone = BackboneSpec::wide_stub();
  c.variant = AblationVariant::kBaseCfdm;
  c.decoder.lambda = 0.6;
  const auto back = network_config_from_json(network_config_json(c));
  CHECK(back.backbone.name == "wide_stub");
  CHECK(back.backbone.channels == c.backbone.channels);
  CHECK(back.variant == c.variant);
  CHECK(back.decoder.lambda == 0.6);
  CHECK(back.normalization.mean == c.normalization.mean);
}

}  // TEST_SUITE
