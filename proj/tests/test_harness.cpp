#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pfrnet/harness.hpp"
#include "support.hpp"

using namespace pfrnet;

namespace {

// Small enough for a few seconds per run.
TrainConfig tiny(int steps = 6) {
  auto c = TrainConfig::desk();
  c.batch_size = 2;
  c.synth_count = 4;
  c.synth_size = 32;
  c.resolution = 32;
  c.max_steps = steps;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class RunRoot {
 public:
  RunRoot() : dir_("runs") { setenv(kRunRootEnv, dir_.path().c_str(), 1); }
  ~RunRoot() { unsetenv(kRunRootEnv); }
  const std::filesystem::path& path() const { return dir_.path(); }

 private:
  testing::TempDir dir_;
};

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("full-scale defaults") {
  const auto c = TrainConfig::full();
  CHECK(c.lr0 == 1e-4);
  CHECK(c.lr_decay_every == 50);
  CHECK(c.lr_decay_factor == 10.0);
  CHECK(c.batch_size == 36);
  CHECK(c.epochs == 100);
  CHECK(c.lambda == 0.5);
  CHECK(c.variant == AblationVariant::kFull);
  CHECK(c.backbone == "res2net50");
  CHECK(c.resolution == 352);
  CHECK(c.flip);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("desk profile") {
  const auto c = TrainConfig::desk();
  CHECK(c.backbone == "stub");
  CHECK(c.batch_size == 4);
  CHECK(c.synth_count == 8);
  CHECK(c.synth_size == 64);
  CHECK(c.resolution == 64);
  CHECK(c.max_steps == 200);
  CHECK(c.lr0 == 1e-4);
  // 200 steps of 2 per epoch stay inside the first stage
  CHECK(lr_at_epoch(c, 99) == 1e-4);
  CHECK_NOTHROW(c.validate());
  CHECK(TrainConfig::profile("desk").backbone == "stub");
  CHECK_THROWS_AS(TrainConfig::profile("huge"), std::invalid_argument);
}

TEST_CASE("learning-rate staircase") {
  const auto c = TrainConfig::full();
  CHECK(lr_at_epoch(c, 0) == 1e-4);
  CHECK(lr_at_epoch(c, 49) == 1e-4);
  CHECK(lr_at_epoch(c, 50) == 1e-5);
  CHECK(lr_at_epoch(c, 99) == 1e-5);
  CHECK(lr_at_epoch(c, 100) == 1e-6);
  CHECK(lr_at_epoch(c, 49) == lr_at_epoch(c, 49));
  CHECK_THROWS_AS(lr_at_epoch(c, -1), std::invalid_argument);
  double last = 1.0;
  for (int e = 0; e < 200; ++e) {
    CHECK(lr_at_epoch(c, e) <= last);
    last = lr_at_epoch(c, e);
  }
}

TEST_CASE("config validation") {
  auto c = TrainConfig::full();
  c.lr0 = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig::full();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig::full();
  c.resolution = 100;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig::full();
  c.lambda = 1.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig::full();
  c.backbone = "vgg";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("config text") {
  const auto c = parse_train_config(
      "# desk run\n"
      "profile = desk\n"
      "lambda = 0.3   # sweep row\n"
      "variant = Base+CFDM\n"
      "\n"
      "flip = true\n"
      "seed = 9\n");
  CHECK(c.backbone == "stub");
  CHECK(c.lambda == 0.3);
  CHECK(c.variant == AblationVariant::kBaseCfdm);
  CHECK(c.flip);
  CHECK(c.seed == 9);
  const auto back = parse_train_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
  CHECK(config_hash(back) == config_hash(c));
  auto other = c;
  other.seed = 10;
  CHECK(config_hash(other) != config_hash(c));
  CHECK_THROWS_AS(parse_train_config("colour = red\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("batch_size = four\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("just words\n"), std::invalid_argument);
  auto o = TrainConfig::full();
  apply_override(o, "lr0=3e-4");
  apply_override(o, " flip = no ");
  CHECK(o.lr0 == 3e-4);
  CHECK_FALSE(o.flip);
  CHECK_THROWS_AS(apply_override(o, "flip=maybe"), std::invalid_argument);
}

TEST_CASE("run directories") {
  RunRoot root;
  const auto c = tiny();
  const auto a = make_run_dir(c);
  const auto b = make_run_dir(c);
  CHECK(a.parent_path() == root.path());
  CHECK(std::filesystem::is_directory(a));
  CHECK(a != b);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(c);
  CHECK(a.filename().string().rfind(hash.str() + "-", 0) == 0);
  CHECK(make_run_dir(c, "sweep-").filename().string().rfind("sweep-", 0) == 0);
}

TEST_CASE("training writes every artifact under one run directory") {
  RunRoot root;
  const auto c = tiny(4);
  const auto result = train(c, training_data(c));
  CHECK(result.finished);
  CHECK(result.run_dir.parent_path() == root.path());
  for (const char* name : {"checkpoint_final.pt", "checkpoint_best.pt", "train_log.csv", "config.txt",
                           "state/model.pt", "state/optimizer.pt", "state/progress.json", "state/log.json"}) {
    CHECK(std::filesystem::exists(result.run_dir / name));
  }
  CHECK(result.final_checkpoint.parent_path() == result.run_dir);
  CHECK(parse_train_config("profile = full\n" + slurp(result.run_dir / "config.txt")).resolution == 32);
  REQUIRE(result.log.steps.size() == 4);
  for (size_t i = 0; i < result.log.steps.size(); ++i) {
    const auto& s = result.log.steps[i];
    CHECK(s.step == static_cast<int64_t>(i) + 1);
    CHECK(s.epoch == static_cast<int>(i / 2));
    CHECK(s.lr == 1e-4);
    CHECK(s.total == doctest::Approx(s.structure[0] + s.structure[1] + s.structure[2] + s.dice).epsilon(1e-6));
  }
  CHECK(result.log.epoch_lr.size() == 2);
  CHECK(result.log.wall_seconds > 0.0);
  const auto csv = slurp(result.run_dir / "train_log.csv");
  CHECK(csv.rfind("step,epoch,lr,total,", 0) == 0);
  const auto meta = nlohmann::json::parse(load_checkpoint_metadata(result.final_checkpoint));
  CHECK(meta.at("resolution") == 32);
  CHECK(meta.at("step") == 4);
  const auto log = TrainLog::from_json(result.log.json());
  CHECK(log.steps.size() == 4);
  CHECK(log.steps[2].total == result.log.steps[2].total);
}

TEST_CASE("identical seeds give identical traces") {
  RunRoot root;
  auto c = tiny(6);
  c.flip = true;
  const auto data = training_data(c);
  const auto a = train(c, data);
  const auto b = train(c, data);
  REQUIRE(a.log.steps.size() == b.log.steps.size());
  for (size_t i = 0; i < a.log.steps.size(); ++i) CHECK(a.log.steps[i].total == b.log.steps[i].total);
  c.seed = 1;
  const auto other = train(c, data);
  CHECK(other.log.steps[0].total != a.log.steps[0].total);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  RunRoot root;
  auto c = tiny(6);
  c.flip = true;
  const auto data = training_data(c);
  const auto full = train(c, data);

  TrainOptions first;
  first.run_dir = root.path() / "resumed";
  first.stop_after = 3;
  const auto part = train(c, data, first);
  CHECK_FALSE(part.finished);
  CHECK(part.log.steps.size() == 3);
  CHECK_FALSE(std::filesystem::exists(part.final_checkpoint));

  TrainOptions second;
  second.run_dir = first.run_dir;
  second.resume = true;
  const auto rest = train(c, data, second);
  CHECK(rest.finished);
  REQUIRE(rest.log.steps.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    CAPTURE(i);
    CHECK(rest.log.steps[i].step == static_cast<int64_t>(i) + 1);
    CHECK(rest.log.steps[i].total == full.log.steps[i].total);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  RunRoot root;
  testing::TempDir dir("nan");
  torch::manual_seed(0);
  auto bb = make_backbone(BackboneSpec::stub());
  {
    torch::NoGradGuard g;
    bb->parameters().front().fill_(std::numeric_limits<float>::quiet_NaN());
  }
  torch::serialize::OutputArchive archive;
  bb->save(archive);
  archive.save_to((dir / "nan.pt").string());
  auto c = tiny(2);
  c.pretrained = (dir / "nan.pt").string();
  try {
    train(c, training_data(c));
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("non-finite loss at step 1") != std::string::npos);
  }
  CHECK_THROWS_AS(train(tiny(), {}), std::invalid_argument);
}

TEST_CASE("evaluate writes 8-bit maps at GT resolution") {
  RunRoot root;
  testing::TempDir dir("eval");
  auto c = tiny(2);
  const auto result = train(c, training_data(c));
  save_dataset(synth_generate(3, 2, 64), dir / "data");
  EvalOptions opts;
  opts.dataset_name = "toy";
  const auto report = evaluate(result.final_checkpoint, dir / "data", dir / "out", opts);
  CHECK(report.n_images() == 2);
  CHECK(report.dataset == "toy");
  for (const auto& m : report.per_image) {
    const auto map = read_gray8(dir / "out" / "predictions" / (m.id + ".png"));
    CHECK(map.rows == 64);
    CHECK(map.cols == 64);
  }
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "metrics.json"));
  for (const char* k : {"s_alpha", "e_phi", "f_beta_w", "mae"}) CHECK(j.contains(k));
  CHECK(j.size() == 7);
  CHECK_THROWS_AS(evaluate(dir / "nope.pt", dir / "data", dir / "out2"), std::runtime_error);
}

TEST_CASE("predict_image keeps the image size") {
  torch::manual_seed(0);
  Pfrnet net(NetworkConfig{});
  const auto g = predict_image(net, torch::rand({1, 3, 50, 70}), 64);
  CHECK(g.rows == 50);
  CHECK(g.cols == 70);
}

TEST_CASE("lambda sweep") {
  RunRoot root;
  CHECK(kDefaultLambdas == std::vector<double>{0.2, 0.3, 0.4, 0.5, 0.6});
  const auto c = tiny(2);

  SUBCASE("rows and schema") {
    SweepOptions opts;
    opts.out_dir = root.path() / "sweep";
    const auto table = sweep_lambda(c, {0.2, 0.6}, opts);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].lambda == 0.2);
    CHECK(table.rows[1].report.has_value());
    const auto text = table.text();
    CHECK(text.find("lambda  S_alpha  E_phi    F_beta_w  M") != std::string::npos);
    CHECK(std::filesystem::exists(opts.out_dir / "sweep.txt"));
    CHECK(slurp(opts.out_dir / "sweep.csv").rfind("dataset,lambda,s_alpha,e_phi,f_beta_w,mae,error\n", 0) == 0);
    CHECK(std::filesystem::exists(table.rows[0].run_dir / "checkpoint_final.pt"));
    CHECK(std::filesystem::exists(table.rows[0].run_dir / "metrics.json"));
  }

  SUBCASE("single value and failing rows") {
    const auto one = sweep_lambda(c, {0.4});
    CHECK(one.rows.size() == 1);
    CHECK(one.rows[0].report.has_value());
    const auto mixed = sweep_lambda(c, {0.0, 0.5});
    REQUIRE(mixed.rows.size() == 2);
    CHECK_FALSE(mixed.rows[0].report.has_value());
    CHECK(mixed.rows[0].error.find("lambda") != std::string::npos);
    CHECK(mixed.rows[1].report.has_value());
    CHECK_THROWS_AS(sweep_lambda(c, {}), std::invalid_argument);
  }
}

TEST_CASE("self-check battery passes") {
  SelfCheckOptions opt;
  opt.shape_backbone = "stub";
  const auto report = self_check(opt);
  CHECK(report.passed());
  std::set<std::string> names;
  for (const auto& c : report.checks) names.insert(c.name);
  for (const char* n : {"shape suite", "dla identity", "guidance algebra", "split/concat", "dependency isolation",
                        "loss gradients", "loss values", "metric oracles", "lr schedule"}) {
    CHECK(names.count(n) == 1);
  }
  CHECK(report.text().find("all checks passed") != std::string::npos);
}

}  // TEST_SUITE
