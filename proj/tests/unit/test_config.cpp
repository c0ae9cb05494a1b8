#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "crowdhg/config.hpp"
#include "crowdhg/error.hpp"

using namespace crowdhg;
using namespace crowdhg::config;

namespace {

std::filesystem::path write_file(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdhg_test_config";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("documents parse sections, comments, strings and lists") {
  const auto doc = Document::parse(R"(# leading comment
[train]
steps = 2000   # trailing comment
dataset = "runs/a#b.jsonl"

[model]
group_sizes = [1, 3, 5]
)",
                                   "run.toml");
  const auto& e = doc.entries();
  REQUIRE(e.size() == 3);
  CHECK(e.at("train.steps").value == "2000");
  CHECK(e.at("train.steps").origin == "run.toml:3");
  CHECK(e.at("train.dataset").value == "\"runs/a#b.jsonl\"");
  CHECK(e.at("model.group_sizes").value == "[1, 3, 5]");

  const auto cfg = from_document(doc);
  CHECK(cfg.train.steps == 2000);
  CHECK(cfg.train_dataset == "runs/a#b.jsonl");
  CHECK(cfg.model.group_sizes == std::vector<std::size_t>{1, 3, 5});
}

TEST_CASE("malformed documents name the line") {
  CHECK(error_of([] { (void)Document::parse("[train\nsteps = 1\n", "f"); }).find("f:1") != std::string::npos);
  CHECK(error_of([] { (void)Document::parse("steps = 1\n", "f"); }).find("outside of a [section]") != std::string::npos);
  CHECK(error_of([] { (void)Document::parse("[a]\nnot a pair\n", "f"); }).find("f:2") != std::string::npos);
  CHECK(error_of([] { (void)Document::parse("[a]\nx = 1\nx = 2\n", "f"); }).find("duplicate") != std::string::npos);
}

TEST_CASE("unknown keys and bad values are rejected with their origin") {
  const auto unknown = error_of([] { (void)from_document(Document::parse("[train]\nstepz = 3\n", "cfg.toml")); });
  CHECK(unknown.find("cfg.toml:2") != std::string::npos);
  CHECK(unknown.find("train.stepz") != std::string::npos);

  CHECK(error_of([] { (void)from_document(Document::parse("[train]\nsteps = -3\n", "c")); }).find("c:2") !=
        std::string::npos);
  CHECK(!error_of([] { (void)from_document(Document::parse("[train]\nlearning_rate = fast\n", "c")); }).empty());
  CHECK(!error_of([] { (void)from_document(Document::parse("[scene]\ngeometric_occlusion = yes\n", "c")); }).empty());
  CHECK(!error_of([] { (void)from_document(Document::parse("[model]\ngroup_sizes = 1, 3\n", "c")); }).empty());
  CHECK(!error_of([] { (void)from_document(Document::parse("[loss]\nreproj_units = \"meters\"\n", "c")); }).empty());
}

TEST_CASE("overrides win over the file and keep their own origin") {
  const auto path = write_file("over.toml", "[train]\nsteps = 10\nlearning_rate = 0.01\n");
  const std::vector<std::string> sets = {"train.steps=25", "model.group_sizes=[1, 2]"};
  const auto cfg = load_run_config(path, sets);
  CHECK(cfg.train.steps == 25);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.model.group_sizes == std::vector<std::size_t>{1, 2});

  const std::vector<std::string> unknown = {"train.nope=1"};
  const auto msg = error_of([&] { (void)load_run_config(path, unknown); });
  CHECK(msg.find("--set") != std::string::npos);
  const std::vector<std::string> malformed = {"steps"};
  CHECK(!error_of([&] { (void)load_run_config(path, malformed); }).empty());
  CHECK(!error_of([&] { (void)load_run_config("/nonexistent/run.toml", {}); }).empty());
}

TEST_CASE("defaults are valid and to_text round-trips") {
  const auto defaults = load_run_config({}, {});
  CHECK(defaults.train.weights.reproj == 5.0);
  CHECK(defaults.model.group_sizes == std::vector<std::size_t>{1, 3, 5});

  const std::vector<std::string> sets = {"train.steps=123", "scene.pose_noise=0.07", "train.checkpoint=\"a b/c.json\"",
                                         "metrics.f1_thresholds=[0.5, 1]", "adapt.reproj_units=\"pixel\""};
  const auto cfg = load_run_config({}, sets);
  const auto text = to_text(cfg);
  const auto back = from_document(Document::parse(text, "roundtrip"));
  CHECK(to_text(back) == text);
  CHECK(back.train.steps == 123);
  CHECK(back.scene.pose_noise == 0.07);
  CHECK(back.train.checkpoint_path == "a b/c.json");
  CHECK(back.f1_thresholds == std::vector<double>{0.5, 1.0});
  CHECK(back.adapt.reproj_units == losses::ReprojUnits::pixel);
}

TEST_CASE("cross-field validation") {
  const std::vector<std::vector<std::string>> bad = {
      {"train.batch_size=0"}, {"gen.count=0"}, {"metrics.f1_thresholds=[]"}, {"model.group_sizes=[3, 1]"},
      {"scene.occlusion_rate=2"}, {"gradcheck.eps=0"}, {"loss.crowd=-1"}};
  for (const auto& sets : bad) {
    INFO(sets[0]);
    CHECK_THROWS_AS(load_run_config({}, sets), ValidationError);
  }
}

TEST_CASE("skeleton files load and fall back to the built-in figure") {
  RunConfig cfg;
  CHECK(cfg.load_skeleton() == body::Skeleton::standard());
  cfg.skeleton = write_file("skel.json", body::Skeleton::standard().to_json().dump());
  CHECK(cfg.load_skeleton() == body::Skeleton::standard());
  cfg.skeleton = write_file("broken.json", "{\"format\": ");
  CHECK_THROWS_AS((void)cfg.load_skeleton(), FormatError);
}
