#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <sstream>

#include "json.hpp"
#include "polyrep/pipeline.hpp"
#include "test_util.hpp"

using namespace polyrep;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> small_run(const fs::path& root, const std::string& name) {
  return {"run.name=" + name,          "run.root=\"" + root.string() + "\"", "run.seed=2",
          "synthetic.n_samples=100",   "synthetic.image_size=32",          "imageproc.size=32",
          "train.max_epochs=4",        "classifier.n_rounds=30",           "explain.n_repeats=2"};
}

double mean_f1(const fs::path& metrics_json) {
  const auto j = nlohmann::json::parse(testutil::read_text(metrics_json));
  return j.at("mean").at("f1_macro").get<double>();
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Runs the CLI with stdout and stderr captured to `out`; returns the exit code.
int cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string("\"") + POLYREP_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config: defaults round-trip, strict keys, overrides") {
  Config def;
  def.propagate_seed();
  const Config back = config_from_json(nlohmann::json::parse(config_to_json(def).dump()));
  CHECK(config_hash(back) == config_hash(def));

  CHECK(message_of([] { config_from_json(nlohmann::json::parse(R"({"train": {"lr": 1}})")); })
            .find("unknown config key train.lr") != std::string::npos);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"nonsense": {}})")), Error);

  nlohmann::json j = config_to_json(def);
  apply_override(j, "train.lr0=0.01");
  apply_override(j, "run.name=trial");
  apply_override(j, "fusion.blocks=[\"tabular\"]");
  const Config o = config_from_json(j);
  CHECK(o.train.lr0 == 0.01);
  CHECK(o.run.name == "trial");
  CHECK(o.fusion.blocks == std::vector<std::string>{"tabular"});
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), Error);

  Config t = def;
  t.run.threads = 7;
  CHECK(config_hash(t) == config_hash(def));
  t.run.seed = 9;
  t.propagate_seed();
  CHECK(config_hash(t) != config_hash(def));

  Config bad = def;
  bad.classifier.max_depth = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("bundled config matches the defaults") {
  const Config bundled = load_config(fs::path(POLYREP_SOURCE_DIR) / "configs" / "synthetic.json");
  const Config def = load_config("");
  CHECK(config_hash(bundled) == config_hash(def));
}

TEST_CASE("runner: missing upstream artifact names the stage") {
  testutil::TempDir dir("missing");
  const Config cfg = load_config("", small_run(dir.path(), "m"));
  std::ostringstream log;
  pipeline::Runner runner(cfg, log);
  const std::string msg = message_of([&] { runner.run("fuse"); });
  CHECK(msg.find("stage first") != std::string::npos);
  CHECK(msg.find("'ingest'") != std::string::npos);
  CHECK_THROWS_AS(runner.run("no-such-stage"), Error);
}

TEST_CASE("runner: e2e artifacts, no-op reruns, --force, block selection") {
  testutil::TempDir dir("e2e");
  const Config cfg = load_config("", small_run(dir.path(), "r"));
  std::ostringstream log;
  pipeline::Runner runner(cfg, log);
  CHECK(runner.run("e2e"));
  CHECK(log.str().find("config_hash=") != std::string::npos);
  CHECK(log.str().find("seed=2") != std::string::npos);

  for (const auto& [stage, file] : std::vector<std::pair<std::string, std::string>>{
           {"triplets", "triplets.csv"},
           {"embed", "embeddings.csv"},
           {"radiomics", "radiomics.csv"},
           {"fuse", "fused.csv"},
           {"train-eval", "metrics.json"},
           {"importance", "importance.csv"},
           {"ablate-channels", "ablation.csv"},
           {"report", "report.csv"}}) {
    CHECK_MESSAGE(fs::exists(runner.stage_dir(stage) / file), stage << "/" << file);
  }
  CHECK(runner.stage_dir("fuse") == runner.run_dir() / "fuse");

  const std::string report = testutil::read_text(runner.stage_dir("report") / "report.csv");
  CHECK(std::count(report.begin(), report.end(), '\n') == 8);
  CHECK(report.rfind("metric,all,", 0) == 0);

  const std::string before = testutil::read_text(runner.stage_dir("train-eval") / "metrics.json");
  CHECK_FALSE(runner.run("train-eval"));
  CHECK_FALSE(runner.run("e2e"));
  pipeline::StageOptions force;
  force.force = true;
  CHECK(runner.run("train-eval", force));
  CHECK(testutil::read_text(runner.stage_dir("train-eval") / "metrics.json") == before);

  const double all_f1 = mean_f1(runner.stage_dir("train-eval") / "metrics.json");
  pipeline::StageOptions tab;
  tab.blocks = std::vector<std::string>{"tabular"};
  CHECK(runner.run("train-eval", tab));
  const double tab_f1 = mean_f1(runner.stage_dir("train-eval") / "metrics.json");
  CHECK(all_f1 >= tab_f1);
  CHECK(tab_f1 < all_f1);

  // A changed classifier setting invalidates train-eval but not fuse.
  const Config changed = load_config("", [&] {
    auto o = small_run(dir.path(), "r");
    o.push_back("classifier.n_rounds=10");
    return o;
  }());
  pipeline::Runner again(changed, log);
  CHECK_FALSE(again.run("fuse"));
  CHECK(again.run("train-eval"));
}

TEST_CASE("cli: exit codes and error output") {
  testutil::TempDir dir("cli");
  const fs::path out = dir / "out.txt";
  CHECK(cli("show-config", out) == 0);
  CHECK(testutil::read_text(out).find("\"classifier\"") != std::string::npos);

  CHECK(cli("show-config --set train.nope=1", out) == 1);
  CHECK(testutil::read_text(out).rfind("error:", 0) == 0);
  CHECK(testutil::read_text(out).find("train.nope") != std::string::npos);

  const std::string root = "--set run.root='\"" + (dir / "runs").string() + "\"'";
  CHECK(cli("train-eval " + root, out) == 1);
  CHECK(testutil::read_text(out).find("stage first") != std::string::npos);

  CHECK(cli("show-config -c " + (dir / "absent.json").string(), out) == 1);
  CHECK(cli("frobnicate", out) != 0);
}
