#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aop/harness/experiment.hpp"
#include "aop/harness/plot.hpp"
#include "aop/harness/stream_io.hpp"
#include "aop/harness/sweep.hpp"
#include "aop/harness/synthetic.hpp"
#include "tiny_config.hpp"

namespace fs = std::filesystem;
using namespace aop;
using namespace aop::testing;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("aop_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config tree parsing") {
  std::istringstream ok("# comment\n[a]\nx = 1\ny = two words\n\n[b]\nz=3\n");
  const auto t = ConfigTree::parse(ok);
  CHECK(t.get("a", "y") == "two words");
  CHECK(t.get("b", "z") == "3");
  CHECK_FALSE(t.get("b", "x").has_value());

  std::istringstream dup("[a]\nx = 1\nx = 2\n");
  CHECK_THROWS_AS(ConfigTree::parse(dup), ParseError);
  std::istringstream orphan("x = 1\n");
  CHECK_THROWS_AS(ConfigTree::parse(orphan), ParseError);
  std::istringstream noeq("[a]\njust text\n");
  CHECK_THROWS_AS(ConfigTree::parse(noeq), ParseError);
}

TEST_CASE("experiment config round trip, hash and overrides") {
  ExperimentConfig c;
  apply_override(c, "attack.poison_rate=0.05");
  apply_override(c, "learner.pool_size=12");
  const auto back = ExperimentConfig::from_tree(c.to_tree());
  CHECK(back.to_tree().canonical() == c.to_tree().canonical());
  CHECK(back.hash() == c.hash());

  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  CHECK(moved.hash() == c.hash());
  ExperimentConfig other = c;
  apply_override(other, "run.seed=5");
  CHECK(other.hash() != c.hash());
  CHECK(c.hash().size() == 16);

  CHECK_THROWS_AS(apply_override(c, "nope.key=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "learner.pool_size"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "learner.pool_size=ten"), ConfigError);

  ExperimentConfig bad;
  apply_override(bad, "attack.poison_rate=1.5");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  ExperimentConfig overlap;
  apply_override(overlap, "surrogate_data.family=gratings");
  CHECK_THROWS_AS(overlap.validate(), ConfigError);
  apply_override(overlap, "attack.allow_family_overlap=true");
  CHECK_NOTHROW(overlap.validate());
  ExperimentConfig missing;
  apply_override(missing, "data.manifest=/definitely/not/here.txt");
  CHECK_THROWS_AS(missing.validate(), ConfigError);

  const auto dir = scratch("config");
  save_experiment_config(c, (dir / "c.txt").string());
  CHECK(load_experiment_config((dir / "c.txt").string()).hash() == c.hash());
  std::ofstream(dir / "bad.txt") << "[learner]\nwat = 1\n";
  CHECK_THROWS_AS(load_experiment_config((dir / "bad.txt").string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic streams") {
  SyntheticSpec spec;
  const auto a = generate_synthetic_stream(spec, 3);
  const auto b = generate_synthetic_stream(spec, 3);
  CHECK(a == b);
  CHECK(a.train_size() == 1000);
  CHECK(a.tasks.size() == 5);
  CHECK_NOTHROW(a.validate());
  CHECK(!(generate_synthetic_stream(spec, 4) == a));
  SyntheticSpec bad = spec;
  bad.num_tasks = 0;
  CHECK_THROWS_AS(generate_synthetic_stream(bad, 1), ConfigError);
}

TEST_CASE("stream manifests") {
  SyntheticSpec spec;
  spec.shape = {1, 8, 8};
  spec.num_tasks = 2;
  spec.classes_per_task = 2;
  spec.train_per_class = 4;
  spec.test_per_class = 2;
  const auto stream = generate_synthetic_stream(spec, 1);
  const auto dir = scratch("stream");
  save_stream(stream, dir / "stream.txt");
  CHECK(load_stream(dir / "stream.txt") == stream);

  {
    std::ifstream in(dir / "stream.txt");
    std::ostringstream edited;
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("task = 2 3", 0) == 0) line = "task = 1 3";
      edited << line << '\n';
    }
    std::ofstream(dir / "dup.txt") << edited.str();
  }
  CHECK_THROWS_AS(load_stream(dir / "dup.txt"), ValidationError);

  fs::path missing;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".txt") {
      missing = e.path();
      break;
    }
  }
  REQUIRE(!missing.empty());
  fs::remove(missing);
  try {
    load_stream(dir / "stream.txt");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(missing.filename().string()) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("sweep points") {
  ExperimentConfig base;
  base.output_dir = "runs/base";
  const auto p = sweep_point(base, SweepAxis::poison_rate, "0.05");
  CHECK(p.attack.aop.poison_rate == 0.05);
  CHECK(fs::path(p.output_dir) == fs::path("runs/base") / "poison_rate_0.05");
  CHECK(sweep_point(base, SweepAxis::loss_mode, "ce").attack.aop.dynamic.loss_mode == LossMode::softmax_ce);
  CHECK(sweep_point(base, SweepAxis::surrogate_spec, "gratings").attack.allow_family_overlap);
  CHECK_THROWS_AS(sweep_point(base, SweepAxis::poison_rate, "lots"), ConfigError);
  CHECK(parse_sweep_axis("dynamic_rounds") == SweepAxis::dynamic_rounds);
  CHECK_THROWS_AS(parse_sweep_axis("depth"), ConfigError);
}

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.config_hash = "00ff";
  m.code_version = "1.0";
  m.status = "complete";
  m.seeds = {{"attack", 12345678901234ULL}};
  m.stage_seconds = {{"attack", 1.5}};
  m.files = {{"metrics", "metrics.csv"}};
  m.summary = {{"final_asr", "0.5"}};
  const auto dir = scratch("manifest");
  m.write(dir / "manifest.txt");
  const auto r = RunManifest::read(dir / "manifest.txt");
  CHECK(r.config_hash == m.config_hash);
  CHECK(r.seeds == m.seeds);
  CHECK(r.files == m.files);
  CHECK(r.summary == m.summary);
  CHECK(r.stage_seconds.at("attack") == 1.5);
  fs::remove_all(dir);
}

TEST_CASE("png output") {
  const auto dir = scratch("plot");
  Canvas c(10, 6);
  c.fill_rect(1, 1, 4, 4, {255, 0, 0});
  CHECK(c.pixel(2, 2) == Rgb{255, 0, 0});
  c.save_png(dir / "sub" / "c.png");
  const std::string bytes = slurp(dir / "sub" / "c.png");
  REQUIRE(bytes.size() > 8);
  CHECK(bytes.substr(1, 3) == "PNG");
  plot_lines(dir / "l.png", "ASR", {{"asr", {0.1, 0.5, 0.9}, {0, 0, 255}}});
  CHECK(fs::exists(dir / "l.png"));
  CHECK_THROWS_AS(plot_bars(dir / "b.png", "x", {}), InputError);
  fs::remove_all(dir);
}

TEST_CASE("tiny end-to-end run is deterministic") {
  const auto dir = scratch("run");
  auto cfg = tiny_experiment((dir / "a").string());
  const auto a = run_experiment(cfg);
  cfg.output_dir = (dir / "b").string();
  run_experiment(cfg);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "trigger.bin") == slurp(dir / "b" / "trigger.bin"));
  CHECK(a.manifest.status == "complete");
  for (const char* f : {"manifest.txt", "config.txt", "model.bin", "plots/metrics.png", "data/stream.txt"})
    CHECK(fs::exists(dir / "a" / f));
  CHECK(read_metrics_csv(dir / "a" / "metrics.csv").size() == 2);
  CHECK(a.attack->trigger.linf_norm() <= cfg.attack.aop.epsilon);

  // Rate 0: the victim is the clean model, so its ASR is the clean base rate.
  auto zero = tiny_experiment((dir / "z").string());
  apply_override(zero, "attack.poison_rate=0");
  const auto z = run_experiment(zero);
  CHECK(z.victim.records.back().asr_avg == z.clean.records.back().asr_avg);

  const auto defenses = run_defenses(cfg, *a.victim_model, build_victim_stream(cfg), a.attack->trigger, a.target);
  REQUIRE(defenses.reports.size() == 3);
  for (const auto& r : defenses.reports) CHECK_NOTHROW(r.validate());
  fs::remove_all(dir);
}

TEST_CASE("failed runs leave a marker") {
  const auto dir = scratch("fail");
  auto cfg = tiny_experiment(dir.string());
  cfg.attack.target_index = 7;
  CHECK_THROWS(run_experiment(cfg));
  fs::remove_all(dir);

  RunManifest m;
  fs::create_directories(dir);
  mark_failed(dir, m, InputError("boom"));
  CHECK(m.status == "failed");
  CHECK(slurp(dir / "FAILED").find("input: boom") != std::string::npos);
  fs::remove_all(dir);
}

#ifdef AOP_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AOP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli exit codes follow the error category") {
  const auto dir = scratch("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == static_cast<int>(ErrorCategory::config));
  CHECK(run_cli("run --set learner.pool_size=0 -o " + (dir / "x").string()) == static_cast<int>(ErrorCategory::config));
  CHECK(run_cli("evaluate -o " + dir.string() + " --model " + (dir / "missing.bin").string()) ==
        static_cast<int>(ErrorCategory::io));
  CHECK(run_cli("plot " + (dir / "nothing").string()) != 0);
  CHECK(run_cli("generate-data --data.tasks=2 --data.image_size=8 --surrogate_data.image_size=8 -o " +
                dir.string()) == 0);
  CHECK(fs::exists(dir / "data" / "stream.txt"));
  fs::remove_all(dir);
}
#endif
