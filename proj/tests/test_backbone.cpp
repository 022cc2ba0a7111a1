#include <doctest.h>

#include "pfrnet/backbone.hpp"
#include "support.hpp"

using namespace pfrnet;
using testing::same_size;

TEST_SUITE("backbone") {

TEST_CASE("stub pyramid at 64") {
  torch::manual_seed(0);
  auto bb = make_backbone(BackboneSpec::stub());
  const auto p = extract_features(testing::rand({1, 3, 64, 64}, 1), *bb);
  CHECK(same_size(p.f1, {1, 16, 16, 16}));
  CHECK(same_size(p.f2, {1, 32, 8, 8}));
  CHECK(same_size(p.f3, {1, 64, 4, 4}));
  CHECK(same_size(p.f4, {1, 128, 2, 2}));
}

TEST_CASE("res2net50 pyramid at 352") {
  torch::manual_seed(0);
  auto bb = make_backbone(BackboneSpec::res2net50());
  bb->eval();
  torch::NoGradGuard g;
  const auto p = extract_features(testing::rand({1, 3, 352, 352}, 2), *bb);
  CHECK(same_size(p.f1, {1, 256, 88, 88}));
  CHECK(same_size(p.f2, {1, 512, 44, 44}));
  CHECK(same_size(p.f3, {1, 1024, 22, 22}));
  CHECK(same_size(p.f4, {1, 2048, 11, 11}));
  CHECK(all_finite(p.f4));
}

TEST_CASE("res2net50 parameter layout") {
  torch::manual_seed(0);
  auto bb = make_backbone(BackboneSpec::res2net50());
  const auto params = bb->named_parameters();
  CHECK(params.contains("conv1.0.weight"));
  CHECK(params.contains("layer1.0.convs.0.weight"));
  CHECK(params.contains("layer4.2.conv3.weight"));
  CHECK_FALSE(params.contains("layer4.3.conv3.weight"));
  int64_t n = 0;
  for (const auto& p : bb->parameters()) n += p.numel();
  // 25.7M with the classifier; the pyramid trunk alone is ~23.6M
  CHECK(n > 23'000'000);
  CHECK(n < 24'500'000);
}

TEST_CASE("image not divisible by 32") {
  auto bb = make_backbone(BackboneSpec::stub());
  CHECK_THROWS_AS(extract_features(torch::rand({1, 3, 100, 100}), *bb), ShapeError);
  CHECK_THROWS_AS(extract_features(torch::rand({1, 3, 64, 80}), *bb), ShapeError);
  CHECK_THROWS_AS(extract_features(torch::rand({1, 1, 64, 64}), *bb), ShapeError);
}

TEST_CASE("pyramid strides hold for every legal size") {
  torch::manual_seed(1);
  auto bb = make_backbone(BackboneSpec::stub());
  bb->eval();
  torch::NoGradGuard g;
  for (auto [h, w] : {std::pair<int64_t, int64_t>{32, 32}, {96, 64}, {128, 32}, {160, 224}}) {
    const auto p = extract_features(torch::rand({2, 3, h, w}), *bb);
    CHECK_NOTHROW(p.validate());
    CHECK(p.f1.size(2) == h / 4);
    CHECK(p.f1.size(3) == w / 4);
    CHECK(p.f4.size(2) == h / 32);
    CHECK(p.f4.size(3) == w / 32);
    CHECK(p.f4.size(0) == 2);
  }
}

TEST_CASE("stub is deterministic under a fixed seed") {
  const auto x = testing::rand({2, 3, 64, 64}, 3);
  torch::manual_seed(42);
  auto a = make_backbone(BackboneSpec::stub());
  torch::manual_seed(42);
  auto b = make_backbone(BackboneSpec::stub());
  const auto pa = a->extract(x);
  const auto pb = b->extract(x);
  CHECK(torch::equal(pa.f1, pb.f1));
  CHECK(torch::equal(pa.f4, pb.f4));
}

TEST_CASE("backbone names") {
  CHECK(BackboneSpec::from_name("stub").channels == std::array<int64_t, 4>{16, 32, 64, 128});
  CHECK(BackboneSpec::from_name("res2net50").channels == std::array<int64_t, 4>{256, 512, 1024, 2048});
  CHECK(BackboneSpec::from_name("wide_stub").channels == BackboneSpec::res2net50().channels);
  CHECK_THROWS_AS(BackboneSpec::from_name("resnet18"), std::invalid_argument);
  auto bad = BackboneSpec::res2net50();
  bad.channels[0] = 128;
  CHECK_THROWS_AS(make_backbone(bad), std::invalid_argument);
}

TEST_CASE("pretrained weights load from an archive") {
  testing::TempDir dir("bb");
  torch::manual_seed(5);
  auto src = make_backbone(BackboneSpec::stub());
  torch::serialize::OutputArchive archive;
  src->save(archive);
  archive.save_to((dir / "stub.pt").string());

  auto spec = BackboneSpec::stub();
  spec.pretrained_weights_path = dir / "stub.pt";
  torch::manual_seed(6);
  auto dst = make_backbone(spec);
  src->eval();
  dst->eval();
  const auto x = testing::rand({1, 3, 64, 64}, 7);
  CHECK(torch::equal(src->extract(x).f3, dst->extract(x).f3));

  spec.pretrained_weights_path = dir / "missing.pt";
  CHECK_THROWS_AS(make_backbone(spec), std::runtime_error);
}

TEST_CASE("pyramid validation") {
  FeaturePyramid p{torch::zeros({1, 4, 16, 16}), torch::zeros({1, 4, 8, 8}), torch::zeros({1, 4, 4, 4}),
                   torch::zeros({1, 4, 3, 2})};
  CHECK_THROWS_AS(p.validate(), ShapeError);
  p.f4 = torch::zeros({2, 4, 2, 2});
  CHECK_THROWS_AS(p.validate(), ShapeError);
  p.f4 = torch::zeros({1, 4, 2, 2});
  CHECK_NOTHROW(p.validate());
}

}  // TEST_SUITE
