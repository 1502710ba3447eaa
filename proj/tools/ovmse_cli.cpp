// Command-line front end: dataset generation, pretraining, fine-tuning,
// the unlearning diagnostic, evaluation and plotting.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ovmse/config.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/harness.hpp"
#include "ovmse/metrics.hpp"

namespace fs = std::filesystem;
using namespace ovmse;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kArtifact = 3, kNumerical = 4 };

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--seed", args.seed, "run a single seed (default: every seed in 'seeds')");
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
  cmd->add_option("--override", args.overrides, "key=value, repeatable")->take_all();
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig() : RunConfig::load(args.config_path);
  for (const auto& o : args.overrides) cfg.apply_override(o);
  return cfg;
}

// (seed, directory) pairs: --seed writes straight into --out, otherwise one
// subdirectory per configured seed.
std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs(const CommonArgs& args,
                                                          const RunConfig& cfg) {
  if (args.seed) return {{*args.seed, fs::path(args.out)}};
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  for (auto s : cfg.get_uint_list("seeds")) {
    out.emplace_back(s, fs::path(args.out) / ("seed_" + std::to_string(s)));
  }
  if (out.empty()) throw ConfigError("no seeds configured");
  return out;
}

void print_eval(const EvalResult& e) {
  std::cout << "episodes=" << e.episodes << " mean_return=" << format_double(e.mean_return)
            << " std=" << format_double(e.std_return)
            << " mean_discounted_return=" << format_double(e.mean_discounted_return)
            << " success_rate=" << format_double(e.success_rate) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline-to-online cooperative multi-agent Q-learning toolkit"};
  app.footer(config_help());
  app.require_subcommand(1);

  CommonArgs gen_args, pre_args, fine_args, diag_args, eval_args, plot_args;
  auto* gen = app.add_subcommand("gen-dataset", "train a behaviour policy and record a dataset");
  add_common(gen, gen_args);
  auto* pre = app.add_subcommand("pretrain", "offline QMIX+CQL pretraining");
  add_common(pre, pre_args);
  auto* fine = app.add_subcommand("finetune", "online fine-tuning from offline artifacts");
  add_common(fine, fine_args);
  std::string algorithm;
  fine->add_option("--algorithm", algorithm,
                   "preset: ovmse, ovm, se, switch-cql, macql or qmix (applied before overrides)");
  auto* diag = app.add_subcommand("diagnose", "probe-buffer value tracking across algorithms");
  add_common(diag, diag_args);
  auto* ev = app.add_subcommand("eval", "greedy evaluation of a policy checkpoint");
  add_common(ev, eval_args);
  std::string checkpoint;
  std::optional<std::size_t> episodes;
  ev->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  ev->add_option("--episodes", episodes, "episode count (default eval.episodes)");
  auto* plot = app.add_subcommand("plot", "render metrics.csv files as SVG charts");
  add_common(plot, plot_args);
  std::vector<std::string> series_args;
  plot->add_option("series", series_args, "LABEL=metrics.csv, repeatable; same label = seeds")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      const RunConfig cfg = build_config(gen_args);
      for (const auto& [seed, dir] : seed_dirs(gen_args, cfg)) {
        const DatasetRun run = generate_dataset(cfg, seed, dir);
        std::cout << "seed " << seed << ": " << run.dataset.episodes.size() << " episodes, mean return "
                  << format_double(run.dataset.mean_return()) << " -> " << run.dataset_path.string()
                  << (run.threshold_reached ? "" : " (behaviour threshold not reached)") << "\n";
      }
    } else if (*pre) {
      const RunConfig cfg = build_config(pre_args);
      for (const auto& [seed, dir] : seed_dirs(pre_args, cfg)) {
        const OfflineResult r = run_offline_phase(cfg, seed, dir);
        std::cout << "seed " << seed << ": " << r.updates << " updates, ";
        print_eval(r.final_eval);
      }
    } else if (*fine) {
      RunConfig cfg;
      if (!fine_args.config_path.empty()) cfg = RunConfig::load(fine_args.config_path);
      if (!algorithm.empty()) apply_algorithm_preset(cfg, algorithm);
      for (const auto& o : fine_args.overrides) cfg.apply_override(o);
      for (const auto& [seed, dir] : seed_dirs(fine_args, cfg)) {
        const OnlineResult r = run_online_phase(cfg, seed, dir);
        std::cout << "seed " << seed << ": " << r.env_steps << " env steps, " << r.updates
                  << " updates, success AUC " << format_double(r.success_auc) << ", final "
                  << r.final_checkpoint_hash << "\n";
      }
    } else if (*diag) {
      const RunConfig cfg = build_config(diag_args);
      const auto algos = split_list(cfg.get("diagnose.algorithms"));
      for (const auto& [seed, dir] : seed_dirs(diag_args, cfg)) {
        const QCurve c = diagnose_unlearning(cfg, seed, dir, algos);
        std::cout << "seed " << seed << ": offline probe mean "
                  << format_double(c.offline_probe_mean) << " -> " << (dir / "qcurve.csv").string()
                  << "\n";
      }
    } else if (*ev) {
      const RunConfig cfg = build_config(eval_args);
      const std::size_t n = episodes ? *episodes : cfg.get_uint("eval.episodes");
      const std::uint64_t seed = eval_args.seed ? *eval_args.seed : cfg.get_uint("seed");
      print_eval(evaluate_checkpoint(cfg, checkpoint, n, seed));
    } else if (*plot) {
      std::vector<std::pair<std::string, std::vector<fs::path>>> series;
      for (const auto& s : series_args) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw UsageError("plot input '" + s + "' is not LABEL=path");
        }
        const std::string label = s.substr(0, eq);
        auto it = std::find_if(series.begin(), series.end(),
                               [&](const auto& p) { return p.first == label; });
        if (it == series.end()) {
          series.push_back({label, {}});
          it = series.end() - 1;
        }
        it->second.emplace_back(s.substr(eq + 1));
      }
      for (const auto& p : emit_plots(series, plot_args.out)) std::cout << p.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kConfig;
  } catch (const ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return kArtifact;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
