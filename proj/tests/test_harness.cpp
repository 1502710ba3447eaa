#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ovmse/checkpoint.hpp"
#include "ovmse/config.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/harness.hpp"
#include "ovmse/metrics.hpp"

using namespace ovmse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ovmse_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig matrix_config(const fs::path& root) {
  RunConfig c;
  c.set("env.name", "matrix");
  c.set("net.hidden_dim", "16");
  c.set("net.mixing_hidden_dim", "8");
  c.set("train.batch_size", "8");
  c.set("dataset.episodes", "40");
  c.set("dataset.behavior_steps", "600");
  c.set("dataset.behavior_eval_every", "100");
  c.set("offline.dataset", (root / "data" / "dataset.jsonl").string());
  c.set("offline.updates", "60");
  c.set("offline.log_every", "20");
  c.set("offline.eval_every", "30");
  c.set("offline.checkpoint_every", "30");
  c.set("online.offline_dir", (root / "pre").string());
  c.set("online.total_steps", "120");
  c.set("online.warmup_episodes", "8");
  c.set("eval.every", "40");
  c.set("eval.episodes", "4");
  c.set("diagnose.probe_episodes", "4");
  c.set("diagnose.every", "5");
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(OVMSE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("evaluate: degenerate count and scripted optimum") {
  MatrixGame g;
  const NetShape shape = NetShape::for_env(g.spec(), 8, 4);
  QFunction optimal = [](const Tensor& x) {
    Tensor q({x.rows(), 3}, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) q.at(r, 0) = 1.0;
    return q;
  };
  CHECK_THROWS_AS(evaluate(g, optimal, shape, 0, 1), UsageError);
  const EvalResult e = evaluate(g, optimal, shape, 16, 1);
  CHECK(e.mean_return == 8.0);
  CHECK(e.success_rate == 1.0);
  CHECK(e.std_return == 0.0);
  Rng rng(3);
  QmixNets random(shape, rng);
  CHECK(evaluate(g, q_function(random.agent), shape, 16, 1).mean_return <= 8.0);
}

TEST_CASE("metrics csv round-trips and rejects schema drift") {
  std::vector<MetricsRow> rows(3);
  rows[0].step = 0;
  rows[0].success_rate = 0.0;
  rows[1].step = 10;
  rows[1].success_rate = 0.5;
  rows[1].loss = 0.1 + 0.2;
  rows[2].step = 20;
  rows[2].success_rate = 1.0;
  rows[2].lambda_memory = 1.0 / 3.0;
  const std::string text = encode_metrics(rows);
  CHECK(decode_metrics(text, "mem") == rows);
  // Trapezoid: (0 + 0.5) / 2 * 10 + (0.5 + 1) / 2 * 10 = 10, over a span of 20.
  CHECK(normalized_auc(rows, 2) == doctest::Approx(0.5));
  std::string bad = text;
  bad.replace(bad.find("success_rate"), 12, "success_rat");
  try {
    decode_metrics(bad, "mem");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("success_rat") != std::string::npos);
  }
  CHECK(quantile({4, 1, 3, 2}, 0.5) == 2.5);
}

TEST_CASE("plots are deterministic") {
  const fs::path dir = scratch("plots");
  std::vector<MetricsRow> a(2), b(2);
  for (int i = 0; i < 2; ++i) {
    a[i].step = b[i].step = static_cast<std::uint64_t>(i * 10);
    a[i].success_rate = 0.2 * i;
    b[i].success_rate = 0.4 * i;
  }
  write_metrics(dir / "a.csv", a);
  write_metrics(dir / "b.csv", b);
  const auto first = emit_plots({{"x", {dir / "a.csv", dir / "b.csv"}}, {"y", {dir / "a.csv"}}},
                                dir / "p1");
  const auto second = emit_plots({{"x", {dir / "a.csv", dir / "b.csv"}}, {"y", {dir / "a.csv"}}},
                                 dir / "p2");
  REQUIRE(first.size() == 1);
  REQUIRE(second.size() == 1);
  CHECK(read_file_bytes(first[0]) == read_file_bytes(second[0]));
  CHECK(read_file_bytes(first[0]).find("<svg") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config parsing") {
  const RunConfig c = RunConfig::parse("# comment\nenv.n_agents = 3\n\ntrain.lr=0.001\n");
  CHECK(c.get_uint("env.n_agents") == 3);
  CHECK(c.get_double("train.lr") == 0.001);
  CHECK(c.is_default("seed"));
  CHECK_THROWS_AS(RunConfig::parse("no.such.key = 1"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("env.n_agents"), ConfigError);
  RunConfig d;
  CHECK_THROWS_AS(d.apply_override("bogus=1"), ConfigError);
  CHECK_THROWS_AS(apply_algorithm_preset(d, "nope"), ConfigError);
  apply_algorithm_preset(d, "switch-cql");
  CHECK_FALSE(d.get_bool("online.use_memory"));
  CHECK(d.get("explore.mode") == "independent");
  CHECK(online_explorer(d).epsilon.start == 0.3);
  d.set("online.total_steps", "1000");
  CHECK(online_config(d).lambda_anneal_steps == 500);
  CHECK(online_explorer(d).epsilon.duration == 200);
  CHECK(split_list("a, b,,c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("matrix pipeline: dataset, pretraining, fine-tuning, diagnostic") {
  const fs::path root = scratch("pipeline");
  const RunConfig cfg = matrix_config(root);

  const DatasetRun data = generate_dataset(cfg, 1, root / "data");
  CHECK(data.dataset.episodes.size() == 40);
  CHECK(data.oracle_return == 8.0);
  const std::string bytes = read_file_bytes(data.dataset_path);
  const DatasetRun again = generate_dataset(cfg, 1, root / "data2");
  CHECK(read_file_bytes(again.dataset_path) == bytes);

  const OfflineResult pre = run_offline_phase(cfg, 1, root / "pre");
  CHECK(pre.updates == 60);
  CHECK(fs::exists(pre.artifacts.policy));
  CHECK(fs::exists(pre.artifacts.offline_target));
  const std::string metrics = read_file_bytes(root / "pre" / "metrics.csv");
  run_offline_phase(cfg, 1, root / "pre_again");
  CHECK(read_file_bytes(root / "pre_again" / "metrics.csv") == metrics);

  // Resume from the midpoint state reproduces the rest of the uninterrupted run.
  RunConfig resume = cfg;
  resume.set("offline.resume_from", (root / "pre" / "state_30.ckpt").string());
  const OfflineResult resumed = run_offline_phase(resume, 1, root / "pre_resumed");
  REQUIRE(resumed.rows.size() < pre.rows.size());
  CHECK(std::equal(resumed.rows.begin(), resumed.rows.end(),
                   pre.rows.end() - static_cast<std::ptrdiff_t>(resumed.rows.size())));
  CHECK(resumed.rows.front().step > 30);
  CHECK(file_hash(root / "pre_resumed" / "policy.ckpt") == pre.artifacts.policy_hash);

  RunConfig fine = cfg;
  apply_algorithm_preset(fine, "ovmse");
  const OnlineResult a = run_online_phase(fine, 2, root / "fine_a");
  const OnlineResult b = run_online_phase(fine, 2, root / "fine_b");
  CHECK(a.final_checkpoint_hash == b.final_checkpoint_hash);
  CHECK(a.ovm_law_violations == 0);
  CHECK(a.env_steps >= 120);
  CHECK(read_metrics(root / "fine_a" / "metrics.csv") == a.rows);

  const QCurve q = diagnose_unlearning(cfg, 3, root / "diag", {"ovmse", "switch-cql"});
  REQUIRE(q.series.size() == 2);
  CHECK(q.probe_hashes[0] == q.probe_hashes[1]);
  CHECK(q.series[0].front().q == doctest::Approx(q.offline_probe_mean));
  CHECK(q.series[1].front().q == doctest::Approx(q.offline_probe_mean));
  CHECK(fs::exists(root / "diag" / "qcurve.csv"));

  RunConfig missing = cfg;
  missing.set("offline.dataset", (root / "nowhere.jsonl").string());
  CHECK_THROWS_AS(run_offline_phase(missing, 1, root / "x"), ArtifactError);
  fs::remove_all(root);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("eval --override no.such=1 --checkpoint x") == 2);
  CHECK(run_cli("eval --override env.name=matrix --checkpoint " + (dir / "missing.ckpt").string()) ==
        3);
  CHECK(run_cli("pretrain --seed 0 --out " + dir.string() +
                " --override env.name=matrix --override offline.dataset=" +
                (dir / "none.jsonl").string()) == 3);
  CHECK(run_cli("bogus-subcommand") == 2);
  fs::remove_all(dir);
}
