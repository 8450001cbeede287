// asi: dataset generation, training, evaluation, skip sweeps and gradient
// checks from the command line.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asi/checkpoint.hpp"
#include "asi/envs.hpp"
#include "asi/errors.hpp"
#include "asi/harness.hpp"
#include "asi/train.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

using Overrides = std::vector<std::pair<std::string, std::string>>;

bool is_env_key(const std::string& key) {
  return key.rfind("funnel_", 0) == 0 || key.rfind("chain_", 0) == 0 || key == "bounciness";
}

/// Registers --<key> for the selected config keys; values land in `store`.
void add_key_flags(CLI::App& cmd, std::map<std::string, std::string>& store,
                   bool (*select)(const std::string&)) {
  for (const auto& [key, help] : asi::config_keys()) {
    if (select(key)) cmd.add_option("--" + key, store[key], help);
  }
}

Overrides collect(const CLI::App& cmd, const std::map<std::string, std::string>& store) {
  Overrides out;
  for (const auto& [key, value] : store) {
    if (cmd.count("--" + key) > 0) out.emplace_back(key, value);
  }
  return out;
}

asi::EnvConfig env_from_flags(const Overrides& env_flags) {
  return asi::parse_experiment_config("{}", env_flags).env_config;
}

void print_dataset_summary(const std::vector<asi::Trajectory>& data, std::size_t labels) {
  std::vector<std::size_t> hist(labels, 0);
  std::size_t lo = SIZE_MAX, hi = 0, total = 0;
  for (const auto& t : data) {
    if (t.label >= hist.size()) hist.resize(t.label + 1, 0);
    ++hist[t.label];
    lo = std::min(lo, t.length());
    hi = std::max(hi, t.length());
    total += t.length();
  }
  std::printf("count %zu\nlabels", data.size());
  for (std::size_t i = 0; i < hist.size(); ++i) std::printf(" %zu:%zu", i, hist[i]);
  std::printf("\nlength min %zu mean %.2f max %zu\n", lo,
              static_cast<double>(total) / static_cast<double>(data.size()), hi);
}

int cmd_gen(const std::string& env_name, std::size_t n, std::uint64_t seed, const std::string& out,
            const Overrides& env_flags) {
  const asi::EnvId env = asi::parse_env(env_name);
  const asi::EnvConfig ec = env_from_flags(env_flags);
  const auto data = asi::gen_dataset(ec, env, n, seed);
  asi::write_dataset(data, out);
  std::printf("wrote %s (%s)\n", out.c_str(), std::string(asi::env_name(env)).c_str());
  print_dataset_summary(data, asi::label_count(env, ec));
  return 0;
}

int cmd_train(const std::string& config_path, const Overrides& overrides) {
  const asi::ExperimentConfig config =
      config_path.empty() ? asi::parse_experiment_config("{}", overrides)
                          : asi::load_experiment_config(config_path, overrides);
  const auto result = asi::run_experiment(config, asi::worker_threads_from_env());
  for (const auto& run : result.runs) {
    for (const auto& line : run.log) std::printf("seed %llu %s\n", static_cast<unsigned long long>(run.seed), line.c_str());
    const auto& last = run.result.metrics.back();
    std::printf("seed %llu done: steps %llu forward_passes %llu val_accuracy %.4f mean_skip %.3f\n",
                static_cast<unsigned long long>(run.seed),
                static_cast<unsigned long long>(run.result.optimizer_steps),
                static_cast<unsigned long long>(run.result.training_forward_passes),
                last.val_accuracy, last.mean_skip);
  }
  std::printf("metrics: %s\n", (config.out_dir / "metrics.csv").string().c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, const std::string& env_name,
             std::size_t cap, const Overrides& env_flags) {
  const asi::EnvId env = asi::parse_env(env_name);
  const asi::EnvConfig ec = env_from_flags(env_flags);
  asi::DynamicsModel model = asi::load_checkpoint(checkpoint);
  const auto data = asi::read_dataset(data_path);
  const asi::FrameShape& in = model.input_shape();
  const asi::Shape& frame = data.front().frames.front().shape();
  if (frame != in.as_shape()) {
    throw asi::DimensionError("checkpoint expects frames of " + asi::to_string(in) +
                              " but the dataset holds " + asi::shape_string(frame));
  }
  const asi::EvalReport report = asi::evaluate_accuracy(model, data, env, cap, ec);
  const auto unlabeled = std::count(report.predicted.begin(), report.predicted.end(), std::nullopt);
  std::printf("trajectories %zu\naccuracy %.4f\nunlabeled %td\nmean_rollout_length %.3f\n"
              "forward_passes %llu\n",
              data.size(), report.accuracy, unlabeled, report.mean_rollout_length,
              static_cast<unsigned long long>(report.forward_passes));
  return 0;
}

int cmd_sweep(const std::string& env_name, const std::vector<std::size_t>& dts, std::size_t n,
              std::uint64_t seed, std::uint64_t budget, const asi::TrainConfig& tc,
              const Overrides& env_flags) {
  const asi::EnvId env = asi::parse_env(env_name);
  const auto data = asi::gen_dataset(env_from_flags(env_flags), env, n,
                                     asi::derive_seed(seed, asi::stream::kTrainSplit));
  asi::SweepOptions options;
  options.forward_pass_budget = budget;
  asi::TrainConfig cfg = tc;
  cfg.seed = seed;
  const auto rows = asi::skip_sweep(data, dts, cfg, options);
  std::printf("dt,mean_loss,rate,forward_passes\n");
  for (const auto& r : rows) {
    std::printf("%zu,%.9g,%.9g,%llu\n", r.dt, r.mean_loss, r.rate,
                static_cast<unsigned long long>(r.forward_passes));
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double step) {
  constexpr double kTolerance = 1e-4;
  bool ok = true;
  for (const auto& e : asi::run_gradcheck_suite(seed, step)) {
    const bool pass = e.max_relative_error < kTolerance;
    ok = ok && pass;
    std::printf("%-26s %-4s max_rel_error %.3e coords %zu\n", e.name.c_str(), pass ? "ok" : "FAIL",
                e.max_relative_error, e.coordinates);
  }
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive skip interval dynamics models"};
  app.require_subcommand(1);

  std::map<std::string, std::string> env_store;
  std::map<std::string, std::string> train_store;

  auto* gen = app.add_subcommand("gen", "Generate a trajectory dataset");
  std::string gen_env = "chain-world", gen_out;
  std::size_t gen_n = 200;
  std::uint64_t gen_seed = 1;
  gen->add_option("--env", gen_env, "chain-world | funnel-lite");
  gen->add_option("--n", gen_n, "trajectories")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "output file")->required();
  add_key_flags(*gen, env_store, is_env_key);

  auto* tr = app.add_subcommand("train", "Train per config; flags override config keys");
  std::string config_path;
  tr->add_option("--config", config_path, "flat JSON config file");
  add_key_flags(*tr, train_store, [](const std::string&) { return true; });

  auto* ev = app.add_subcommand("eval", "Roll out a checkpoint and report accuracy");
  std::string ev_ckpt, ev_data, ev_env = "chain-world";
  std::size_t ev_cap = 2 * asi::kMaxTrajectoryLength;
  ev->add_option("--checkpoint", ev_ckpt, "ASIMODEL file")->required();
  ev->add_option("--data", ev_data, "ASITRAJ1 file")->required();
  ev->add_option("--env", ev_env, "environment whose classifier applies");
  ev->add_option("--rollout_cap", ev_cap, "abstract steps per rollout")->check(CLI::PositiveNumber);
  add_key_flags(*ev, env_store, is_env_key);

  auto* sw = app.add_subcommand("sweep", "Fixed-skip sweep: converged loss per frame");
  std::string sw_env = "chain-world";
  std::vector<std::size_t> sw_dts{1, 2, 4, 8};
  std::size_t sw_n = 200;
  std::uint64_t sw_seed = 1, sw_budget = 20000;
  asi::TrainConfig sw_cfg = asi::ExperimentConfig::desk_train_config(3000);
  sw->add_option("--env", sw_env, "chain-world | funnel-lite");
  sw->add_option("--dts", sw_dts, "comma-separated skips")->delimiter(',')->check(CLI::PositiveNumber);
  sw->add_option("--n", sw_n, "training trajectories")->check(CLI::PositiveNumber);
  sw->add_option("--seed", sw_seed, "seed");
  sw->add_option("--budget", sw_budget, "training forward passes per skip")->check(CLI::PositiveNumber);
  sw->add_option("--sampling_k", sw_cfg.sampling_steps, "ground-truth feeding schedule length")
      ->check(CLI::PositiveNumber);
  sw->add_option("--lr", sw_cfg.lr_schedule.base_lr, "Adam learning rate");
  add_key_flags(*sw, env_store, is_env_key);

  auto* gc = app.add_subcommand("gradcheck", "Check every backward rule against finite differences");
  std::uint64_t gc_seed = 1;
  double gc_step = 1e-5;
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--step", gc_step, "central-difference step")->check(CLI::Range(1e-5, 1e-2));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_env, gen_n, gen_seed, gen_out, collect(*gen, env_store));
    if (*tr) return cmd_train(config_path, collect(*tr, train_store));
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_env, ev_cap, collect(*ev, env_store));
    if (*sw) return cmd_sweep(sw_env, sw_dts, sw_n, sw_seed, sw_budget, sw_cfg, collect(*sw, env_store));
    if (*gc) return cmd_gradcheck(gc_seed, gc_step);
  } catch (const asi::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const asi::ContractError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const asi::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const asi::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const asi::DimensionError& e) {
    std::fprintf(stderr, "incompatible input: %s\n", e.what());
    return kExitIo;
  } catch (const asi::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  }
  return kExitUsage;
}
