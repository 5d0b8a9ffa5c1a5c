// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

using namespace groundsim;
namespace fs = std::filesystem;

namespace {

std::string micro_config_text(const std::string& method, const std::string& seeds) {
  return R"({
    "env": {"id": "cart_pole"},
    "method": ")" + method + R"(",
    "seeds": )" + seeds + R"(,
    "grounding": {"n_grounding_steps": 1, "real_trajectories_per_step": 2,
                  "eval_episodes": 2, "precision_samples": 10},
    "policy": {"hidden": [8, 8], "critic_hidden": [8, 8], "iters_per_grounding": 1,
               "steps_per_iter": 80,
               "optim": {"minibatch_size": 64, "epochs": 2, "critic_epochs": 2}},
    "transformer": {"hidden": [8, 8], "iters_per_grounding": 1, "steps_per_iter": 80,
                    "optim": {"minibatch_size": 64, "epochs": 2, "critic_epochs": 2}},
    "dynamics": {"hidden": [8, 8], "max_epochs": 4, "patience": 2}
  })";
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("minimal config applies the documented defaults") {
  const GslConfig c = parse_config_text(R"({"env": {"id": "cart_pole"}, "method": "rgat"})");
  CHECK(c.env_id == EnvId::CartPoleContinuous);
  CHECK(c.method == Method::Rgat);
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK(c.n_grounding_steps == 10);
  CHECK(c.real_trajectories_per_step == 50);
  CHECK(c.max_episode_steps == 200);
  CHECK(c.init_noise == 0.05);
  CHECK(c.policy_hidden == std::vector<int>{64, 64});
  CHECK(c.policy_log_std_init == -0.5);
  CHECK(c.transformer_log_std_init == -1.6);
  CHECK(c.policy_opt.optim.max_kl == 0.01);
  CHECK(c.policy_opt.optim.entropy_coeff == 0.0);
  CHECK(c.policy_opt.iters_per_grounding == 25);
  CHECK(c.policy_opt.steps_per_iter == 4000);
  CHECK(c.transformer_opt.optim.max_kl == 1e-4);
  CHECK(c.transformer_opt.optim.entropy_coeff == 1e-5);
  CHECK(c.transformer_opt.optim.discount == 0.99);
  CHECK(c.dynamics.minibatch_size == 256);
  CHECK(c.dynamics.max_epochs == 200);
  CHECK(c.dynamics.patience == 20);
  CHECK(c.real_params.pole_mass == c.sim_params.pole_mass);
}

TEST_CASE("double-integrator defaults differ where they should") {
  const GslConfig c =
      parse_config_text(R"({"env": {"id": "double_integrator"}, "method": "gat"})");
  CHECK(c.max_episode_steps == 100);
  CHECK(c.action_low.size() == 2);
  CHECK(c.sim_params.force_scale == 3.0);
}

TEST_CASE("unknown keys are errors that name the key path") {
  CHECK_THROWS_WITH_AS((void)parse_config_text(R"({"foo": 1})"),
                       doctest::Contains("'foo'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      (void)parse_config_text(R"({"env": {"id": "cart_pole"}, "grounding": {"foo": 1}})"),
      doctest::Contains("'grounding.foo'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      (void)parse_config_text(
          R"({"env": {"sim_params": {"pole_masss": 1.0}}, "method": "rgat"})"),
      doctest::Contains("'env.sim_params.pole_masss'"), ConfigError);
}

TEST_CASE("invariant violations surface as config errors") {
  CHECK_THROWS_AS((void)parse_config_text(
                      R"({"env": {"id": "cart_pole", "sim_params": {"timestep": 0.5}}})"),
                  ConfigError);
  CHECK_THROWS_AS((void)parse_config_text(R"({"method": "nonsense"})"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text(R"({"seeds": []})"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("not json"), ConfigError);
}

TEST_CASE("real params inherit sim params and take overrides") {
  const GslConfig c = parse_config_text(R"({
    "env": {"id": "cart_pole",
            "sim_params": {"pole_mass": 0.4},
            "real_params": {"pole_mass": 0.8}},
    "method": "rgat"})");
  CHECK(c.sim_params.pole_mass == 0.4);
  CHECK(c.real_params.pole_mass == 0.8);
  CHECK(c.real_params.cart_mass == c.sim_params.cart_mass);
}

TEST_CASE("canonical form round-trips and digests ignore formatting") {
  const std::string a = R"({"env": {"id": "cart_pole"}, "method": "rgat", "seeds": [3, 1]})";
  const std::string b =
      "{\n  \"seeds\": [3, 1],\n  \"method\": \"rgat\",\n  \"env\": {\"id\": \"cart_pole\"}\n}";
  const GslConfig ca = parse_config_text(a);
  const GslConfig cb = parse_config_text(b);
  CHECK(canonical_config(ca) == canonical_config(cb));
  CHECK(config_digest(ca) == config_digest(cb));

  // parse(canonicalize(parse(x))) is a fixed point.
  const GslConfig cc = parse_config_text(canonical_config(ca));
  CHECK(canonical_config(cc) == canonical_config(ca));
  CHECK(config_to_json(cc) == config_to_json(ca));
}

TEST_CASE("fnv1a64 matches known vectors") {
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
  CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a64_hex("hello") == "a430d84680aabd0b");
}

TEST_CASE("csv escaping follows RFC 4180 quoting rules") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("with,comma") == "\"with,comma\"");
  CHECK(csv_escape("with\"quote") == "\"with\"\"quote\"");
  CHECK(csv_escape("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("run_experiment writes the documented artifact set") {
  TempDir tmp("groundsim_harness_run");
  const GslConfig config = parse_config_text(micro_config_text("rgat", "[1, 2]"));
  const RunManifest manifest = run_experiment(config, tmp.path.string(), /*quiet=*/true);

  CHECK(manifest.failed_seeds.empty());
  CHECK(manifest.method == "rgat");
  CHECK(manifest.config_digest == config_digest(config));
  CHECK(fs::exists(tmp.path / "config.json"));
  CHECK(fs::exists(tmp.path / "manifest.json"));

  // 2 seeds x 1 grounding step: header plus exactly 2 data rows.
  const std::string curve = slurp(tmp.path / "curve.csv");
  int lines = 0;
  for (char ch : curve) lines += ch == '\n';
  CHECK(lines == 3);
  CHECK(curve.rfind(kCurveHeader, 0) == 0);

  // Every JSONL line parses as a standalone object.
  std::ifstream events(tmp.path / "events.jsonl");
  std::string line;
  int n_events = 0, n_updates = 0;
  while (std::getline(events, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.is_object());
    ++n_events;
    const std::string type = j.at("type").get<std::string>();
    if (type == "policy_update" || type == "transformer_update") {
      ++n_updates;
      CHECK(j.at("kl").get<double>() <= 1.5 * j.at("max_kl").get<double>());
    }
  }
  CHECK(n_events > 0);
  CHECK(n_updates == 2 * 2);  // (1 policy + 1 transformer) iter x 2 seeds

  // Precision scatter and checkpoints per seed and step.
  CHECK(fs::exists(tmp.path / "seed1" / "precision_step0.csv"));
  CHECK(fs::exists(tmp.path / "seed2" / "precision_step0.csv"));
  CHECK(fs::exists(tmp.path / "seed1" / "checkpoints" / "step0" / "policy.bin"));
  CHECK(fs::exists(tmp.path / "seed1" / "checkpoints" / "step0" / "transformer.bin"));
  CHECK(fs::exists(tmp.path / "seed1" / "checkpoints" / "step0" / "forward.bin"));
  CHECK(fs::exists(tmp.path / "seed1" / "checkpoints" / "step0" / "meta.json"));
}

TEST_CASE("rerunning an identical config produces a byte-identical curve.csv") {
  TempDir tmp_a("groundsim_rerun_a");
  TempDir tmp_b("groundsim_rerun_b");
  const GslConfig config = parse_config_text(micro_config_text("gat", "[5]"));
  (void)run_experiment(config, tmp_a.path.string(), true);
  (void)run_experiment(config, tmp_b.path.string(), true);
  CHECK(slurp(tmp_a.path / "curve.csv") == slurp(tmp_b.path / "curve.csv"));
  CHECK(slurp(tmp_a.path / "events.jsonl") == slurp(tmp_b.path / "events.jsonl"));
  CHECK(slurp(tmp_a.path / "seed5" / "precision_step0.csv") ==
        slurp(tmp_b.path / "seed5" / "precision_step0.csv"));
}

TEST_CASE("summarize: single run equals its own curve; identical seeds zero stderr") {
  TempDir tmp("groundsim_summarize");
  const GslConfig config = parse_config_text(micro_config_text("sim_only", "[3, 3]"));
  (void)run_experiment(config, tmp.path.string(), true);

  const Summary s = summarize({tmp.path.string()});
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].method == "sim_only");
  CHECK(s.rows[0].grounding_step == 0);
  CHECK(s.rows[0].n_seeds == 2);
  CHECK(s.rows[0].stderr_return == 0.0);  // identical seeds, identical returns

  const std::string csv = s.to_csv();
  CHECK(csv.find("sim_only,0,") != std::string::npos);
  CHECK_FALSE(s.to_text().empty());
}

TEST_CASE("summarize rejects mismatched grounding-step counts") {
  TempDir tmp_a("groundsim_mismatch_a");
  TempDir tmp_b("groundsim_mismatch_b");
  const GslConfig one = parse_config_text(micro_config_text("sim_only", "[1]"));
  GslConfig two = one;
  two.n_grounding_steps = 2;
  (void)run_experiment(one, tmp_a.path.string(), true);
  (void)run_experiment(two, tmp_b.path.string(), true);
  CHECK_THROWS((void)summarize({tmp_a.path.string(), tmp_b.path.string()}));
}

TEST_CASE("checkpoints reload and replay the run's own precision stream") {
  TempDir tmp("groundsim_ckpt");
  const GslConfig config = parse_config_text(micro_config_text("rgat", "[4]"));
  (void)run_experiment(config, tmp.path.string(), true);

  const std::string ckpt_dir = (tmp.path / "seed4" / "checkpoints" / "step0").string();
  const Checkpoint ckpt = load_checkpoint(ckpt_dir);
  CHECK(ckpt.seed == 4);
  CHECK(ckpt.step_index == 0);
  CHECK(ckpt.transformer.has_value());
  CHECK(ckpt.forward.has_value());

  // Re-export with the default stream: identical to the run's own file for
  // the same sample count.
  const fs::path replay = tmp.path / "replay.csv";
  export_precision(ckpt_dir, replay.string(), config.precision_samples, std::nullopt);
  CHECK(slurp(replay) == slurp(tmp.path / "seed4" / "precision_step0.csv"));

  // A seed override produces different samples.
  const fs::path other = tmp.path / "other.csv";
  export_precision(ckpt_dir, other.string(), config.precision_samples, 999);
  CHECK(slurp(other) != slurp(replay));
}

TEST_CASE("every config key appears in the config reference docs") {
  const fs::path docs = fs::path(PROJECT_SOURCE_DIR) / "docs" / "config.md";
  REQUIRE_MESSAGE(fs::exists(docs), "docs/config.md is missing");
  const std::string text = slurp(docs);
  for (const std::string& key : config_key_reference()) {
    CAPTURE(key);
    CHECK(text.find("`" + key + "`") != std::string::npos);
  }
}

TEST_CASE("format_double survives a round trip") {
  for (double v : {0.0, 1.0, -1.5, 3.141592653589793, 1e-17, 123456789.123456789}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
