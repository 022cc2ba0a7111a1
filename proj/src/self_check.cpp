#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "pfrnet/harness.hpp"
#include "pfrnet/losses.hpp"

namespace pfrnet {
namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

torch::Tensor binary_toy(uint64_t seed, int64_t h, int64_t w) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto gt = (torch::rand({1, 1, h, w}, gen, torch::kDouble) > 0.5).to(torch::kDouble);
  gt.index_put_({0, 0, 0, 0}, 1.0);
  gt.index_put_({0, 0, h - 1, w - 1}, 0.0);
  return gt;
}

std::string check_shape_suite(const SelfCheckOptions& opt) {
  torch::manual_seed(0);
  NetworkConfig cfg;
  cfg.backbone = BackboneSpec::from_name(opt.shape_backbone);
  Pfrnet net(cfg);
  net->eval();
  torch::NoGradGuard no_grad;
  const auto out = net->forward(torch::rand({1, 3, 352, 352}));
  auto hw = [](const FeatureMap& t) { return std::make_pair(t.size(2), t.size(3)); };
  using P = std::pair<int64_t, int64_t>;
  expect(hw(out.o1) == P{88, 88}, "O1 " + shape_string(out.o1));
  expect(hw(out.o2) == P{44, 44}, "O2 " + shape_string(out.o2));
  expect(hw(out.o3) == P{22, 22}, "O3 " + shape_string(out.o3));
  expect(hw(out.o4) == P{44, 44}, "O4 " + shape_string(out.o4));
  expect(hw(out.ggi.values) == P{44, 44}, "GGI " + shape_string(out.ggi.values));
  return opt.shape_backbone + " at 352: O1 88, O2 44, O3 22, O4 44, GGI 44";
}

std::string check_dla() {
  Dla dla;
  torch::NoGradGuard no_grad;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    auto gen = at::detail::createCPUGenerator(1000 + k);
    auto x1 = torch::randn({2, 8, 4, 4}, gen);
    auto x2 = torch::randn({2, 8, 4, 4}, gen);
    auto x3 = torch::randn({2, 8, 4, 4}, gen);
    expect(torch::equal(dla->forward(x1, x2, x3), torch::cat({x1, x2, x3}, 1)), "beta=0 output differs from concat");
    auto cols = dla->attention(x1, x2, x3).sum(1);
    worst = std::max(worst, (cols - 1.0).abs().max().item<double>());
  }
  expect(worst <= 1e-6, "attention column sum off by " + num(worst));
  return "identity bit-exact; column sums within " + num(worst);
}

std::string check_guidance() {
  torch::manual_seed(3);
  RefineLevel level(2, 32);
  level->eval();
  torch::NoGradGuard no_grad;
  const auto f = torch::randn({1, 32, 8, 8});
  const auto ones = constant_guidance(f, 1.0);
  const double diff = (level->forward(f, ones) - level->forward_unguided(f)).abs().max().item<double>();
  expect(diff <= 1e-6, "GGI=1 differs from unguided by " + num(diff));
  const auto zero = level->trace(f, constant_guidance(f, 0.0));
  expect(torch::count_nonzero(zero.g_refine).item<int64_t>() == 0, "GGI=0 leaves nonzero g_refine");
  return "GGI=1 matches unguided within " + num(diff) + "; GGI=0 zeroes g_refine";
}

std::string check_split(const SelfCheckOptions& opt) {
  auto gen = at::detail::createCPUGenerator(5);
  const auto y = torch::randn({2, 256, 4, 4}, gen);
  expect(torch::equal(opt.split(y).concat(), y), "concat(split(y)) != y");
  std::array<FeatureMap, 4> z;
  for (auto& t : z) t = torch::randn({2, 64, 4, 4}, gen);
  expect(torch::equal(residual_merge(z, opt.split(y), 0.0), y), "lambda=0 merge != y");
  return "split/concat and lambda=0 merge bit-exact";
}

std::string check_dependency(const SelfCheckOptions& opt) {
  torch::manual_seed(11);
  BranchInteract interact;
  interact->to(torch::kDouble);
  interact->eval();
  const double z1_far = branch_sensitivity(interact, opt.split, 1, {3, 4}, 21);
  const double z2_far = branch_sensitivity(interact, opt.split, 2, {4}, 22);
  const double z1_near = branch_sensitivity(interact, opt.split, 1, {1, 2}, 23);
  const double z4_all = branch_sensitivity(interact, opt.split, 4, {1}, 24);
  expect(z1_far == 0.0, "z1 depends on y3/y4 (sensitivity " + num(z1_far) + ")");
  expect(z2_far == 0.0, "z2 depends on y4 (sensitivity " + num(z2_far) + ")");
  expect(z1_near > 0.0 && z4_all > 0.0, "expected couplings missing");
  return "z1 _|_ {y3,y4}, z2 _|_ y4; z1<-y1,y2 " + num(z1_near) + ", z4<-y1 " + num(z4_all);
}

std::string check_loss_gradients() {
  auto gen = at::detail::createCPUGenerator(7);
  const auto x = torch::randn({1, 1, 4, 4}, gen, torch::kDouble);
  const auto gt = binary_toy(8, 4, 4);
  std::ostringstream detail;
  double worst = 0.0;
  auto run = [&](const std::string& name, const std::function<torch::Tensor(const torch::Tensor&)>& f,
                 const torch::Tensor& at) {
    const double e = gradient_relative_error(f, at);
    worst = std::max(worst, e);
    detail << name << ' ' << num(e) << "; ";
    expect(e < 1e-4, name + " gradient relative error " + num(e));
  };
  run("dice", [&](const torch::Tensor& l) { return dice_loss(l, gt); }, x);
  run("wbce", [&](const torch::Tensor& l) { return weighted_bce(l, gt); }, x);
  run("wiou", [&](const torch::Tensor& l) { return weighted_iou(l, gt); }, x);
  const auto stacked = torch::randn({4, 1, 4, 4}, gen, torch::kDouble);
  run("total", [&](const torch::Tensor& s) {
    NetworkOutputs o;
    o.o1 = s.narrow(0, 0, 1);
    o.o2 = s.narrow(0, 1, 1);
    o.o3 = s.narrow(0, 2, 1);
    o.o4 = s.narrow(0, 3, 1);
    return total_loss(o, gt).total;
  }, stacked);
  return detail.str() + "max " + num(worst);
}

std::string check_loss_values() {
  const auto gt = binary_toy(9, 16, 16);
  const auto perfect = (gt * 2.0 - 1.0) * 30.0;
  const double d = dice_loss(perfect, gt).item<double>();
  const double b = weighted_bce(perfect, gt).item<double>();
  const double i = weighted_iou(perfect, gt).item<double>();
  expect(d < 1e-3 && b < 1e-3 && i < 1e-3, "perfect-prediction loss too large: " + num(d) + ", " + num(b) + ", " + num(i));
  const auto half = torch::zeros({1, 1, 32, 32}, torch::kDouble);
  const double closed = dice_loss(half, torch::ones_like(half)).item<double>();
  expect(std::abs(closed - 1.0 / 3.0) < 1e-3, "half-confidence dice " + num(closed));
  return "perfect losses " + num(d) + "/" + num(b) + "/" + num(i) + "; half-confidence dice " + num(closed);
}

std::string check_metrics() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> p(256);
    std::vector<double> g(256);
    double sum = 0.0;
    for (size_t i = 0; i < 256; ++i) {
      p[i] = unit(rng);
      g[i] = unit(rng) < 0.5 ? 0.0 : 1.0;
      sum += std::abs(p[i] - g[i]);
    }
    worst = std::max(worst, std::abs(mae(GrayMap(16, 16, p), GrayMap(16, 16, g)) - sum / 256.0));
  }
  expect(worst <= 1e-9, "MAE differs from brute force by " + num(worst));
  std::vector<double> g(32 * 32, 0.0);
  for (int r = 8; r < 20; ++r) {
    for (int c = 10; c < 26; ++c) g[static_cast<size_t>(r) * 32 + c] = 1.0;
  }
  const GrayMap gt(32, 32, g);
  const auto m = evaluate_pair("self", gt, gt);
  expect(std::abs(m.s_alpha - 1) <= 1e-3 && std::abs(m.e_phi - 1) <= 1e-3 && std::abs(m.f_beta_w - 1) <= 1e-3 &&
             std::abs(m.mae) <= 1e-3,
         "pred==gt gives " + num(m.s_alpha) + ", " + num(m.e_phi) + ", " + num(m.f_beta_w) + ", " + num(m.mae));
  const double worked = mae(GrayMap(2, 2, {0, 0.5, 1, 0.25}), GrayMap(2, 2, {0, 1, 1, 0}));
  expect(worked == 0.1875, "worked MAE example gives " + num(worked));
  return "MAE brute force within " + num(worst) + "; identity (1,1,1,0); worked example 0.1875";
}

std::string check_schedule() {
  const auto c = TrainConfig::full();
  expect(lr_at_epoch(c, 0) == 1e-4 && lr_at_epoch(c, 49) == 1e-4, "first stage lr");
  expect(lr_at_epoch(c, 50) == 1e-5, "second stage lr " + num(lr_at_epoch(c, 50)));
  expect(lr_at_epoch(c, 100) == 1e-6, "third stage lr " + num(lr_at_epoch(c, 100)));
  return "1e-4 / 1e-5 / 1e-6 at epochs 0, 50, 100";
}

}  // namespace

double branch_sensitivity(BranchInteract& interact, const std::function<BranchSet(const FeatureMap&)>& split,
                          int target, const std::vector<int>& branches, uint64_t seed) {
  if (target < 1 || target > 4) throw std::invalid_argument("branch_sensitivity: target must be 1..4");
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  const auto y = torch::randn({1, kDecoderWidth, 6, 6}, gen, torch::kDouble);
  const double h = 1e-3;
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    auto dir = torch::zeros_like(y);
    for (int j : branches) {
      if (j < 1 || j > 4) throw std::invalid_argument("branch_sensitivity: branches must be 1..4");
      dir.narrow(1, (j - 1) * kBranchWidth, kBranchWidth).copy_(torch::randn({1, kBranchWidth, 6, 6}, gen, torch::kDouble));
    }
    const auto plus = interact->forward(split(y + h * dir))[target - 1];
    const auto minus = interact->forward(split(y - h * dir))[target - 1];
    worst = std::max(worst, ((plus - minus) / (2 * h)).abs().max().item<double>());
  }
  return worst;
}

double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x) {
  auto xa = x.detach().to(torch::kDouble).clone().requires_grad_(true);
  f(xa).backward();
  const auto analytic = xa.grad().detach().reshape({-1});
  auto numeric = torch::zeros_like(analytic);
  const double h = 1e-5;
  torch::NoGradGuard no_grad;
  const auto base = x.detach().to(torch::kDouble).contiguous();
  for (int64_t i = 0; i < base.numel(); ++i) {
    auto xp = base.clone();
    auto xm = base.clone();
    xp.view({-1})[i] += h;
    xm.view({-1})[i] -= h;
    numeric[i] = (f(xp).item<double>() - f(xm).item<double>()) / (2 * h);
  }
  const double scale = std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).norm().item<double>() / scale;
}

bool SelfCheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string SelfCheckReport::text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.name << std::right << std::fixed
        << std::setprecision(2) << std::setw(7) << c.seconds << "s  " << c.detail << '\n';
  }
  out << (passed() ? "all checks passed" : "self-check FAILED") << '\n';
  return out.str();
}

SelfCheckReport self_check(const SelfCheckOptions& options) {
  // Checks that build modules touch the global generator; leave it as found.
  auto generator = at::detail::getDefaultCPUGenerator();
  const auto saved = generator.get_state();
  const std::vector<std::pair<std::string, std::function<std::string()>>> battery{
      {"shape suite", [&] { return check_shape_suite(options); }},
      {"dla identity", check_dla},
      {"guidance algebra", check_guidance},
      {"split/concat", [&] { return check_split(options); }},
      {"dependency isolation", [&] { return check_dependency(options); }},
      {"loss gradients", check_loss_gradients},
      {"loss values", check_loss_values},
      {"metric oracles", check_metrics},
      {"lr schedule", check_schedule},
  };
  SelfCheckReport report;
  for (const auto& [name, run] : battery) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = run();
      r.passed = true;
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.progress) *options.progress << (r.passed ? "PASS " : "FAIL ") << name << ": " << r.detail << '\n';
    report.checks.push_back(std::move(r));
  }
  generator.set_state(saved);
  return report;
}

}  // namespace pfrnet
