#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdppo/harness.hpp"
#include "cdppo/hashing.hpp"
#include "oracles.hpp"

using namespace cdppo;
namespace fs = std::filesystem;

namespace {

const char* kTiny =
    "task = multi_target\nmodel.hidden_dim = 16\nmodel.encoder_hidden = 16\nmodel.embed_dim = 8\n"
    "task.corpus_size = 32\ntask.num_prompts = 32\nsft.epochs = 2\ntrain.batch_size = 16\n"
    "eval.inputs = 4\neval.m = 4\ntask.eval_prompts = 4\nicm.hidden = 16\nicm.updates = 2\n";

fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "run.cfg";
  write_file_atomic(p, std::string(kTiny) + extra);
  return p;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CDPPO_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return read_file(p); }

std::vector<std::string> csv_rows(const fs::path& p) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config("# comment\ntask = pattern_coverage\nreward.eta = 0.5  # inline\nseeds = 3,4\n");
  CHECK(c.task.kind == TaskKind::pattern_coverage);
  CHECK(c.train.eta == 0.5);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.train.kl_beta == 0.05);
  CHECK(c.train.clip_ratio == 0.2);
  CHECK(c.train.gae_lambda == 0.95);
  CHECK(c.train.gae_gamma == 1.0);
  CHECK(c.train.ppo_epochs == 1);
  CHECK(c.train.gate.k == 1);
  CHECK(c.eval.m == 10);

  auto error_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("method = ppo\n").find("task") != std::string::npos);
  CHECK(error_of("task = multi_target\nreward.zeta = 1\n").find("reward.zeta") != std::string::npos);
  CHECK(error_of("task = multi_target\nreward.eta = 1\nreward.eta = 2\n").find("reward.eta") != std::string::npos);
  CHECK(error_of("task = multi_target\nreward.eta = fast\n").find("reward.eta") != std::string::npos);
  CHECK(error_of("task = multi_target\neval.m = 1\n").find("eval.m") != std::string::npos);
  CHECK(error_of("task = multi_target\ngate.k = 99\n") != "no error");
  CHECK(error_of("task = multi_target\nno equals sign\n") != "no error");
}

TEST_CASE("config serialization round trip") {
  ExperimentConfig c = parse_config(std::string(kTiny) + "reward.eta = 0.123456789012345\ngate.mode = random_fraction\n"
                                                         "gate.fraction = 0.4\nmethod = sent_rewards\nseeds = 9\n");
  const std::string text = serialize_config(c);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(parse_config(text).train.eta == 0.123456789012345);
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("delta_percent sign convention") {
  CHECK(delta_percent(0.2132, 0.2839, true) == doctest::Approx(33.16).epsilon(1e-3));
  CHECK(delta_percent(0.3367, 0.2590, false) == doctest::Approx(23.08).epsilon(1e-3));
  CHECK(delta_percent(0.5, 0.5, true) == 0.0);
  CHECK(std::isnan(delta_percent(0.0, 1.0, true)));
}

TEST_CASE("train, eval, compare") {
  const fs::path dir = oracle::temp_dir("harness_run");
  const fs::path cfg = write_config(dir);
  REQUIRE(cli("train --config " + cfg.string() + " --seed 1 --out " + (dir / "a").string(), dir / "a.log") == 0);
  REQUIRE(cli("train --config " + cfg.string() + " --seed 1 --out " + (dir / "b").string(), dir / "b.log") == 0);

  SUBCASE("artifacts are reproducible") {
    for (const char* f : {"config.txt", "corpus.txt", "metrics.jsonl", "final.ckpt", "reference.ckpt", "checkpoint.ckpt"})
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    auto ma = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    auto mb = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
    ma.erase("wall_clock_seconds");
    mb.erase("wall_clock_seconds");
    CHECK(ma == mb);
    CHECK(ma.at("metrics_hash") == git_blob_hash(slurp(dir / "a" / "metrics.jsonl")));
    CHECK(ma.at("config_hash") == git_blob_hash(slurp(dir / "a" / "config.txt")));
    CHECK_NOTHROW(verify_manifest(dir / "a"));
  }
  SUBCASE("metrics log schema") {
    std::istringstream in(slurp(dir / "a" / "metrics.jsonl"));
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line); ++lines) {
      const auto j = nlohmann::ordered_json::parse(line);
      std::vector<std::string> keys;
      for (const auto& [k, v] : j.items()) keys.push_back(k);
      CHECK(keys == std::vector<std::string>{"iter", "mean_reward_rm", "mean_kl", "kept_frac", "mean_ri_raw",
                                             "mean_ri_white", "loss_policy", "loss_critic", "loss_icm", "lr"});
      CHECK(j.at("iter").get<std::size_t>() == lines);
    }
    CHECK(lines == 8);
  }
  SUBCASE("eval is deterministic and compare against itself is zero") {
    REQUIRE(cli("eval --run " + (dir / "a").string(), dir / "e1.log") == 0);
    const std::string first = slurp(dir / "a" / "eval" / "report.json");
    REQUIRE(cli("eval --run " + (dir / "a").string(), dir / "e2.log") == 0);
    CHECK(slurp(dir / "a" / "eval" / "report.json") == first);
    REQUIRE(cli("eval --run " + (dir / "b").string(), dir / "e3.log") == 0);
    CHECK(slurp(dir / "b" / "eval" / "report.json") == first);

    const auto report = nlohmann::json::parse(first);
    CHECK(report.at("per_input").size() == 4);
    CHECK(report.at("protocol").at("m") == 4);
    std::istringstream comp(slurp(dir / "a" / "eval" / "completions.jsonl"));
    std::size_t n = 0;
    for (std::string line; std::getline(comp, line);) ++n;
    CHECK(n == 16);

    REQUIRE(cli("compare " + (dir / "a").string() + " " + (dir / "b").string() + " --out " + (dir / "cmp").string(),
                dir / "c.log") == 0);
    const auto rows = csv_rows(dir / "cmp" / "compare.csv");
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto f = split(rows[i]);
      CHECK(f[1] == f[2]);
      CHECK(std::stod(f[3]) == 0.0);
      CHECK(std::stod(f[4]) == 0.0);
    }
    CHECK(slurp(dir / "cmp" / "compare.md").find("| Diversity |") != std::string::npos);
  }
  SUBCASE("eval options") {
    CHECK(cli("eval --run " + (dir / "a").string() + " --m 1", dir / "m1.log") == 2);
    CHECK(cli("eval --run " + (dir / "a").string() + " --m 2", dir / "m2.log") == 0);
    CHECK(cli("eval --run " + (dir / "a").string() + " --checkpoint " + (dir / "a" / "reference.ckpt").string(),
              dir / "ref.log") == 0);
    CHECK(fs::exists(dir / "a" / "eval_reference" / "report.json"));
    CHECK(cli("eval --run " + (dir / "a").string() + " --checkpoint " + (dir / "a" / "checkpoint.ckpt").string(),
              dir / "unrecorded.log") == 1);
  }
  SUBCASE("tampered checkpoint is rejected") {
    std::string bytes = slurp(dir / "b" / "final.ckpt");
    bytes[bytes.size() - 3] ^= 0x1;
    write_file_atomic(dir / "b" / "final.ckpt", bytes);
    CHECK_THROWS(verify_manifest(dir / "b"));
    CHECK(cli("eval --run " + (dir / "b").string(), dir / "tamper.log") == 1);
    CHECK(slurp(dir / "tamper.log").find("final.ckpt") != std::string::npos);
  }
  SUBCASE("compare rejects different protocols") {
    REQUIRE(cli("eval --run " + (dir / "a").string(), dir / "pa.log") == 0);
    REQUIRE(cli("eval --run " + (dir / "b").string() + " --temperature 0.8", dir / "pb.log") == 0);
    CHECK(cli("compare " + (dir / "a").string() + " " + (dir / "b").string() + " --out " + (dir / "cmp2").string(),
              dir / "pc.log") == 2);
  }
}

TEST_CASE("external completions and embeddings") {
  const fs::path dir = oracle::temp_dir("harness_external");
  REQUIRE(cli("train --config " + write_config(dir).string() + " --out " + (dir / "r").string(), dir / "t.log") == 0);
  write_file_atomic(dir / "c.jsonl",
                    "{\"input_id\": \"q\", \"id\": \"u\", \"completion\": [\"t5\", \"t6\"]}\n"
                    "{\"input_id\": \"q\", \"id\": \"v\", \"completion\": [\"t5\", \"t7\"]}\n");
  write_file_atomic(dir / "e.jsonl", "{\"id\": \"u\", \"vector\": [1, 0]}\n{\"id\": \"v\", \"vector\": [0, 1]}\n");
  REQUIRE(cli("eval --run " + (dir / "r").string() + " --completions " + (dir / "c.jsonl").string() + " --embeddings " +
                  (dir / "e.jsonl").string(),
              dir / "e.log") == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "r" / "eval" / "report.json"));
  CHECK(report.at("metrics").at("sentbert").get<double>() == 0.0);
  CHECK(report.at("protocol").at("embedder") == "external");

  write_file_atomic(dir / "one.jsonl", "{\"input_id\": \"q\", \"completion\": [\"t5\"]}\n");
  CHECK(cli("eval --run " + (dir / "r").string() + " --completions " + (dir / "one.jsonl").string(), dir / "o.log") == 2);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = oracle::temp_dir("harness_cli");
  CHECK(cli("", dir / "none.log") == 2);
  CHECK(cli("frobnicate", dir / "bad.log") == 2);
  CHECK(cli("train --out " + (dir / "x").string(), dir / "noconfig.log") == 2);
  write_file_atomic(dir / "missing.cfg", "method = ppo\n");
  CHECK(cli("train --config " + (dir / "missing.cfg").string() + " --out " + (dir / "y").string(), dir / "m.log") == 2);
  CHECK(slurp(dir / "m.log").find("task") != std::string::npos);
  write_file_atomic(dir / "unknown.cfg", "task = multi_target\ntrain.speed = 3\n");
  CHECK(cli("train --config " + (dir / "unknown.cfg").string() + " --out " + (dir / "z").string(), dir / "u.log") == 2);
  CHECK(slurp(dir / "u.log").find("train.speed") != std::string::npos);
  CHECK(cli("train --config " + (dir / "nope.cfg").string() + " --out " + (dir / "w").string(), dir / "nf.log") != 0);
  CHECK(cli("eval --run " + (dir / "no_such_run").string(), dir / "nr.log") != 0);
  CHECK(cli("sweep --config " + write_config(dir).string() + " --axis gamma --values 1 --out " + (dir / "s").string(),
            dir / "axis.log") == 2);
  CHECK(cli("selftest", dir / "st.log") == 0);
}

TEST_CASE("selftest reports a corrupted golden file") {
  const fs::path dir = oracle::temp_dir("harness_golden");
  std::string text = slurp(CDPPO_DEFAULT_GOLDEN);
  const auto pos = text.find("1.3333333333333333");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 18, "1.5");
  write_file_atomic(dir / "bad.json", text);
  CHECK(cli("selftest --golden " + (dir / "bad.json").string(), dir / "bad.log") == 1);
  CHECK(slurp(dir / "bad.log").find("[FAIL] metric goldens") != std::string::npos);
  write_file_atomic(dir / "broken.json", "{ not json");
  CHECK(cli("selftest --golden " + (dir / "broken.json").string(), dir / "broken.log") == 1);
}

TEST_CASE("resume after an interrupted run") {
  const fs::path dir = oracle::temp_dir("harness_resume");
  const ExperimentConfig cfg = parse_config(kTiny);
  cmd_train(cfg, dir / "full");
  cmd_train(cfg, dir / "cut", {false, 2});
  CHECK_FALSE(fs::exists(dir / "cut" / "manifest.json"));
  CHECK(csv_rows(dir / "cut" / "metrics.jsonl").size() == 2);
  cmd_train(cfg, dir / "cut", {true, std::nullopt});
  CHECK(slurp(dir / "cut" / "metrics.jsonl") == slurp(dir / "full" / "metrics.jsonl"));
  CHECK(slurp(dir / "cut" / "final.ckpt") == slurp(dir / "full" / "final.ckpt"));

  ExperimentConfig other = cfg;
  other.train.eta = 0.5;
  CHECK_THROWS(cmd_train(other, dir / "cut", {true, std::nullopt}));
}

TEST_CASE("ppo and eta = 0 runs write identical logs") {
  const fs::path dir = oracle::temp_dir("harness_reduction");
  ExperimentConfig a = parse_config(std::string(kTiny) + "method = ppo\n");
  ExperimentConfig b = parse_config(std::string(kTiny) + "method = cd_rlhf\nreward.eta = 0\n");
  cmd_train(a, dir / "ppo");
  cmd_train(b, dir / "cd");
  CHECK(slurp(dir / "ppo" / "metrics.jsonl") == slurp(dir / "cd" / "metrics.jsonl"));
  CHECK(slurp(dir / "ppo" / "final.ckpt") == slurp(dir / "cd" / "final.ckpt"));
}

TEST_CASE("sweeps") {
  const fs::path dir = oracle::temp_dir("harness_sweep");
  ExperimentConfig cfg = parse_config(std::string(kTiny) + "seeds = 0,1\n");

  SUBCASE("beta sweep schema") {
    cmd_sweep(cfg, SweepAxis::beta, {0.05, 0.075}, dir / "beta", false);
    const auto rows = csv_rows(dir / "beta" / "sweep.csv");
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "axis,value,seed,method,diversity,ead,selfbleu,sentbert,rm_score,mean_kl,kept_frac");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto f = split(rows[i]);
      REQUIRE(f.size() == 11);
      CHECK(f[0] == "beta");
      for (std::size_t k = 4; k < 11; ++k) CHECK(std::isfinite(std::stod(f[k])));
    }
    CHECK(fs::exists(dir / "beta" / "beta_0.075" / "seed1" / "eval" / "report.json"));
  }
  SUBCASE("top_k = V matches the ppo baseline") {
    cfg.seeds = {0};
    cmd_sweep(cfg, SweepAxis::top_k, {1, 32}, dir / "topk", true);
    const auto rows = csv_rows(dir / "topk" / "sweep.csv");
    REQUIRE(rows.size() == 4);
    const auto kv = split(rows[2]), base = split(rows[3]);
    CHECK(kv[1] == "32");
    CHECK(base[1] == "ppo");
    CHECK(base[3] == "ppo");
    for (std::size_t k = 4; k < 10; ++k) CHECK(kv[k] == base[k]);
    CHECK(std::stod(kv[10]) == 0.0);
    CHECK(base[10].empty());
  }
  SUBCASE("gate_fraction sweep tracks the requested fraction") {
    cfg.seeds = {0};
    cmd_sweep(cfg, SweepAxis::gate_fraction, {0.2, 1.0}, dir / "frac", false);
    const auto rows = csv_rows(dir / "frac" / "sweep.csv");
    CHECK(std::fabs(std::stod(split(rows[1])[10]) - 0.2) < 0.05);
    CHECK(std::stod(split(rows[2])[10]) == 1.0);
  }
  SUBCASE("invalid values") {
    CHECK_THROWS_AS(cmd_sweep(cfg, SweepAxis::beta, {}, dir / "e", false), ConfigError);
    CHECK_THROWS_AS(cmd_sweep(cfg, SweepAxis::top_k, {1.5}, dir / "e", false), ConfigError);
    CHECK_THROWS_AS(parse_sweep_axis("gamma"), ConfigError);
  }
}
