#include <doctest.h>

#include <cmath>

#include "pfrnet/blocks.hpp"
#include "support.hpp"

using namespace pfrnet;
using testing::max_abs;
using testing::same_size;

TEST_SUITE("blocks") {

TEST_CASE("conv_block keeps the spatial grid") {
  torch::manual_seed(0);
  ConvBlock a(64, 256, 3);
  CHECK(same_size(a->forward(testing::randn({1, 64, 32, 32}, 1)), {1, 256, 32, 32}));
  ConvBlock b(256, 1, 1);
  CHECK(same_size(b->forward(testing::randn({2, 256, 8, 8}, 2)), {2, 1, 8, 8}));
}

TEST_CASE("conv_block on zeros is SiLU of the BN shift") {
  torch::manual_seed(1);
  ConvBlock block(4, 6, 3);
  {
    torch::NoGradGuard g;
    block->bn->weight.copy_(testing::randn({6}, 3));
    block->bn->bias.copy_(testing::randn({6}, 4));
    block->bn->running_mean.zero_();
    block->bn->running_var.zero_();
  }
  block->eval();
  torch::NoGradGuard g;
  const auto out = block->forward(torch::zeros({1, 4, 5, 5}));
  for (int64_t c = 0; c < 6; ++c) {
    const double b = block->bn->bias[c].item<double>();
    const double expected = b / (1.0 + std::exp(-b));
    for (int64_t r = 0; r < 5; ++r) {
      for (int64_t k = 0; k < 5; ++k) CHECK(out[0][c][r][k].item<double>() == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("conv_block rejects bad arguments") {
  CHECK_THROWS_AS(ConvBlock(8, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(ConvBlock(8, 4, 2), std::invalid_argument);
  CHECK_THROWS_AS(ConvBlock(8, 4, KernelSize{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(PlainConv(8, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(PlainConv(8, -1, 1), std::invalid_argument);
}

TEST_CASE("plain_conv padding follows the kernel and dilation") {
  PlainConv dilated(64, 64, 3, 5);
  const auto& p = std::get<torch::ExpandingArray<2>>(dilated->conv->options.padding());
  CHECK(p->at(0) == 5);
  CHECK(p->at(1) == 5);
  CHECK(same_size(dilated->forward(testing::randn({1, 64, 16, 16}, 5)), {1, 64, 16, 16}));

  PlainConv wide(64, 64, KernelSize{1, 3});
  const auto& q = std::get<torch::ExpandingArray<2>>(wide->conv->options.padding());
  CHECK(q->at(0) == 0);
  CHECK(q->at(1) == 1);
  CHECK(same_size(wide->forward(testing::randn({1, 64, 16, 16}, 6)), {1, 64, 16, 16}));
}

TEST_CASE("identity 1x1 plain_conv") {
  PlainConv id(1, 1, 1);
  {
    torch::NoGradGuard g;
    id->conv->weight.fill_(1.0);
    id->conv->bias.zero_();
  }
  const auto x = testing::randn({2, 1, 7, 9}, 7);
  CHECK(torch::equal(id->forward(x), x));
}

TEST_CASE("cbam shape, magnitude and zero input") {
  torch::manual_seed(2);
  Cbam cbam(128);
  const auto x = testing::randn({1, 128, 16, 16}, 8) * 3.0;
  const auto y = cbam->forward(x);
  CHECK(same_size(y, {1, 128, 16, 16}));
  CHECK((y.abs() <= x.abs()).all().item<bool>());
  CHECK(torch::count_nonzero(cbam->forward(torch::zeros({1, 128, 16, 16}))).item<int64_t>() == 0);
  const auto fcg = cbam->channel_gate(testing::randn({1, 128, 16, 16}, 18));
  CHECK(fcg.min().item<double>() >= 0.0);
  CHECK(fcg.max().item<double>() <= 1.0);
  // float sigmoid rounds to 1 past about 17; the open interval holds in double
  cbam->to(torch::kDouble);
  const auto u = testing::randn({1, 128, 16, 16}, 18, torch::kDouble);
  const auto cg = cbam->channel_gate(u);
  CHECK(same_size(cg, {1, 128, 1, 1}));
  CHECK(cg.min().item<double>() > 0.0);
  CHECK(cg.max().item<double>() < 1.0);
  const auto sg = cbam->spatial_gate(u * cg);
  CHECK(same_size(sg, {1, 1, 16, 16}));
  CHECK(sg.min().item<double>() > 0.0);
  CHECK(sg.max().item<double>() < 1.0);
}

TEST_CASE("channel_attention gates lie in (0, 1)") {
  torch::manual_seed(3);
  ChannelAttention ca;
  const auto x = testing::randn({1, 256, 8, 8}, 9);
  const auto y = ca->forward(x);
  CHECK(same_size(y, {1, 256, 8, 8}));
  CHECK((y.abs() <= x.abs()).all().item<bool>());
  CHECK(torch::count_nonzero(ca->forward(torch::zeros({1, 256, 8, 8}))).item<int64_t>() == 0);
  const auto g = ca->gates(x);
  CHECK(same_size(g, {1, 256, 1, 1}));
  CHECK(g.min().item<double>() > 0.0);
  CHECK(g.max().item<double>() < 1.0);
  // the gated map is exactly the per-channel rescale
  CHECK(torch::allclose(y, x * g));
}

TEST_CASE("resample sizes") {
  CHECK(same_size(resample(testing::randn({1, 256, 11, 11}, 10), 2.0), {1, 256, 22, 22}));
  CHECK(same_size(resample(testing::randn({1, 1, 44, 44}, 11), 0.5), {1, 1, 22, 22}));
  CHECK(same_size(resize_to(testing::randn({2, 3, 5, 7}, 12), 9, 4), {2, 3, 9, 4}));
  CHECK_THROWS(resample(torch::zeros({1, 1, 4, 4}), 0.0));
}

TEST_CASE("resample of a constant map is the constant") {
  for (double scale : {0.5, 2.0, 3.0, 0.25, 1.5}) {
    const auto x = torch::full({1, 2, 12, 12}, 0.37);
    CHECK(max_abs(resample(x, scale) - 0.37) <= 1e-6);
  }
  const auto m = torch::full({1, 1, 6, 6}, 1.0);
  CHECK(max_abs(resize_nearest(m, 13, 3) - 1.0) == 0.0);
}

TEST_CASE("nearest resize keeps a binary mask binary") {
  const auto mask = (testing::rand({1, 1, 17, 23}, 13) > 0.5).to(torch::kFloat);
  const auto r = resize_nearest(mask, 40, 9);
  CHECK(same_size(r, {1, 1, 40, 9}));
  CHECK(((r == 0) | (r == 1)).all().item<bool>());
}

TEST_CASE("blocks preserve batch and stay finite") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    ConvBlock conv(16, 32, 3, 2);
    PlainConv plain(16, 8, KernelSize{3, 1});
    Cbam cbam(16);
    ChannelAttention ca;
    const auto x = testing::randn({3, 16, 9, 9}, 100 + seed) * 50.0;
    for (const auto& y : {conv->forward(x), plain->forward(x), cbam->forward(x), ca->forward(x), resample(x, 2.0)}) {
      CHECK(y.size(0) == 3);
      CHECK(all_finite(y));
    }
  }
}

TEST_CASE("feature map preconditions") {
  CHECK_THROWS_AS(require_feature_map(torch::zeros({3, 4}), "t"), ShapeError);
  CHECK_THROWS_AS(require_feature_map(torch::zeros({1, 0, 2, 2}), "t"), ShapeError);
  CHECK_THROWS_AS(require_channels(torch::zeros({1, 3, 2, 2}), 4, "t"), ShapeError);
  CHECK_THROWS_AS(require_half_size(torch::zeros({1, 1, 8, 8}), torch::zeros({1, 1, 5, 4}), "t"), ShapeError);
  CHECK_NOTHROW(require_half_size(torch::zeros({1, 1, 8, 8}), torch::zeros({1, 9, 4, 4}), "t"));
}

}  // TEST_SUITE
