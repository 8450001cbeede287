// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion.
//
//   asi_acceptance [--criterion N ...] [--cache DIR] [--clean]
//
// Training runs are cached under DIR (one text file per method and seed) so
// criteria that read the same runs do not retrain; --clean empties it first.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asi/envs.hpp"
#include "asi/harness.hpp"
#include "asi/ops.hpp"
#include "asi/tape.hpp"
#include "asi/train.hpp"

#ifndef ASI_EXE
#error "ASI_EXE must name the asi executable"
#endif

namespace fs = std::filesystem;
using namespace asi;

namespace {

// ------------------------------------------------------------ tolerances
constexpr Real kGradTolerance = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr std::size_t kGradSeeds = 10;
constexpr std::size_t kMatchCases = 1000;
constexpr double kMatchSeconds = 5.0;
constexpr std::size_t kReductionTrajectories = 100;
constexpr Real kAblationAccuracy = 0.80;
constexpr Real kAblationGap = 0.05;
constexpr double kAblationSeconds = 15 * 60;
constexpr std::uint64_t kAblationBudget = 150000;
constexpr Real kMinMeanSkip = 1.5;
constexpr Real kMaxRolloutRatio = 2.0 / 3.0;
constexpr std::size_t kSweepInteriorNeeded = 4;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Real median(std::vector<Real> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Verdict {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------ run cache

struct CachedRun {
  std::vector<MetricsRow> rows;
  double wall_s = 0;
  const MetricsRow& last() const { return rows.back(); }
};

class RunCache {
 public:
  explicit RunCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }

  /// Loads `<tag>_s<seed>.txt` when its signature matches, else trains.
  CachedRun get(const std::string& tag, const std::string& signature, std::uint64_t seed,
                const std::function<ExperimentConfig()>& make) {
    const fs::path file = dir_ / (tag + "_s" + std::to_string(seed) + ".txt");
    if (auto hit = load(file, signature)) return *hit;
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig config = make();
    const RunOutput out = run_seed(config, seed);
    CachedRun run{out.result.metrics, seconds_since(t0)};
    store(file, signature, run);
    std::printf("  trained %s seed %llu in %.1f s\n", tag.c_str(), static_cast<unsigned long long>(seed),
                run.wall_s);
    std::fflush(stdout);
    return run;
  }

 private:
  static std::optional<CachedRun> load(const fs::path& file, const std::string& signature) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    std::string sig;
    std::getline(in, sig);
    if (sig != signature) return std::nullopt;
    CachedRun run;
    in >> run.wall_s;
    MetricsRow r;
    while (in >> r.epoch >> r.optimizer_step >> r.forward_passes >> r.train_loss >> r.val_accuracy >>
           r.mean_skip >> r.mean_rollout_length) {
      run.rows.push_back(r);
    }
    if (run.rows.empty()) return std::nullopt;
    return run;
  }

  static void store(const fs::path& file, const std::string& signature, const CachedRun& run) {
    std::ofstream out(file);
    out << signature << "\n" << fmt("%.3f", run.wall_s) << "\n";
    for (const auto& r : run.rows) {
      out << fmt("%.17g %llu %llu %.17g %.17g %.17g %.17g\n", r.epoch,
                 static_cast<unsigned long long>(r.optimizer_step),
                 static_cast<unsigned long long>(r.forward_passes), r.train_loss, r.val_accuracy, r.mean_skip,
                 r.mean_rollout_length);
    }
  }

  fs::path dir_;
};

// ------------------------------------------------------------ configurations

/// Chain-world ablation runs (criteria 5, 6, 9): training stops when the
/// forward-pass budget is spent.
ExperimentConfig chain_ablation_config(const Method& method) {
  ExperimentConfig c;
  c.env = EnvId::ChainWorld;
  c.method = method;
  c.n_train = 200;
  c.n_valid = 200;
  c.architecture = "small-conv-3";
  c.n_kernels = 8;
  c.save_checkpoints = false;
  c.train.horizon = 8;
  c.train.exploration_steps = 2000;
  c.train.sampling_steps = 2000;
  c.train.batch_trajectories = 2;
  c.train.lr_schedule = {1e-3, 6000, 0.2};
  c.train.max_training_steps = 1000000;
  c.train.forward_pass_budget = kAblationBudget;
  c.train.evals_per_epoch = 1;
  c.train.rollout_cap = kMaxTrajectoryLength;
  return c;
}

std::string ablation_signature(const Method& m) { return "chain-ablation v1 " + m.name(); }

constexpr std::size_t kSwitchEpochs = 60;
constexpr std::size_t kSwitchAt = 30;

/// Funnel-lite switch runs (criterion 8): bounciness 0 for the first half,
/// default bounciness afterwards, validated on default-bounciness data.
ExperimentConfig funnel_switch_config(const Method& method, const fs::path& data_dir, std::uint64_t seed) {
  EnvConfig soft;
  soft.funnel.bounciness = 0;
  const EnvConfig bouncy;
  const std::size_t n = 200;
  const auto stem = data_dir / ("funnel_s" + std::to_string(seed));
  const std::uint64_t split = derive_seed(seed, stream::kTrainSplit);
  write_dataset(gen_dataset(soft, EnvId::FunnelLite, n, split), stem.string() + "_soft.bin");
  write_dataset(gen_dataset(bouncy, EnvId::FunnelLite, n, split), stem.string() + "_bouncy.bin");
  write_dataset(gen_dataset(bouncy, EnvId::FunnelLite, n, derive_seed(seed, stream::kValidSplit)),
                stem.string() + "_valid.bin");

  ExperimentConfig c;
  c.env = EnvId::FunnelLite;
  c.method = method;
  c.n_train = n;
  c.n_valid = n;
  c.n_kernels = 8;
  c.save_checkpoints = false;
  c.train_data = stem.string() + "_soft.bin";
  c.alternate_data = stem.string() + "_bouncy.bin";
  c.valid_data = stem.string() + "_valid.bin";
  c.switch_epoch = kSwitchAt;
  const std::uint64_t steps = kSwitchEpochs * n / 2;
  c.train = ExperimentConfig::desk_train_config(steps);
  c.train.lr_schedule.base_lr = 2e-3;
  c.train.evals_per_epoch = 1;
  c.train.rollout_cap = kMaxTrajectoryLength;
  return c;
}

// ------------------------------------------------------------ criteria

Verdict criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Real worst = 0;
  std::string worst_name;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
    for (const auto& e : run_gradcheck_suite(seed)) {
      ++checks;
      if (e.max_relative_error >= worst) {
        worst = e.max_relative_error;
        worst_name = e.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTolerance && secs < kGradSeconds,
          fmt("%zu checks over %zu seeds, max rel error %.2e (%s) < %.0e, %.1f s < %.0f s", checks, kGradSeeds,
              worst, worst_name.c_str(), kGradTolerance, secs, kGradSeconds)};
}

/// Enumerates every candidate frame and keeps the first of the minimal losses.
std::size_t enumerate_best(const Tensor& pred, const Trajectory& traj, std::size_t t, std::size_t h,
                           Real& loss) {
  std::vector<std::pair<Real, std::size_t>> scored;
  const std::size_t hi = std::min(t + h, traj.length() - 1);
  for (std::size_t c = t + 1; c <= hi; ++c) scored.emplace_back(bce_value(pred.data(), traj.frames[c].data()), c);
  const auto best = *std::min_element(scored.begin(), scored.end());  // pairs order ties by index
  loss = best.first;
  return best.second;
}

Verdict criterion_matching() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(0xACCE55);
  std::size_t agree = 0, ties = 0;
  for (std::size_t c = 0; c < kMatchCases; ++c) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(2, 30));
    Trajectory traj;
    if (rng.bernoulli(0.5)) {
      traj = gen_trajectory(EnvConfig{}, rng.bernoulli(0.5) ? EnvId::ChainWorld : EnvId::FunnelLite, rng.next_u64());
    } else {
      const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
      for (std::size_t i = 0; i < len; ++i) {
        if (i > 0 && rng.bernoulli(0.3)) {
          traj.frames.push_back(traj.frames[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
          continue;
        }
        std::vector<Real> v(n);
        for (auto& x : v) x = static_cast<Real>(rng.uniform_int(0, 2)) / 2;
        traj.frames.push_back(Tensor::from({n}, v));
      }
    }
    const std::size_t T = traj.length();
    const Shape shape = traj.frames[0].shape();
    std::vector<Real> p(shape_numel(shape));
    const bool copy = rng.bernoulli(0.3);
    const auto src = traj.frames[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T) - 1))].data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = copy ? src[i] : rng.uniform();
    const Tensor pred = Tensor::from(shape, p);
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T) - 2));
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 12));

    Real loss = 0;
    const std::size_t want = enumerate_best(pred, traj, t, h, loss);
    const MatchResult got = temporal_match(pred, traj, t, h);
    if (got.matched_t == want && got.step_loss == loss) ++agree;
    std::set<Real> seen;
    for (std::size_t k = t + 1; k <= std::min(t + h, T - 1); ++k) {
      if (!seen.insert(bce_value(pred.data(), traj.frames[k].data())).second) {
        ++ties;
        break;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {agree == kMatchCases && secs < kMatchSeconds,
          fmt("%zu/%zu cases agree (%zu with tied losses), %.2f s < %.0f s", agree, kMatchCases, ties, secs,
              kMatchSeconds)};
}

Verdict criterion_reduction() {
  TrainConfig cfg;
  cfg.horizon = 1;
  cfg.exploration_steps = 1;  // mu(500) = 0
  cfg.sampling_steps = 1000;  // eps(500) = 0.5
  const std::uint64_t step = 500;
  auto model = DynamicsModel::build("small-conv-3", 4, kFrameShape, 77);
  std::size_t identical = 0, records = 0;
  for (std::size_t i = 0; i < kReductionTrajectories; ++i) {
    const EnvId env = i % 2 == 0 ? EnvId::ChainWorld : EnvId::FunnelLite;
    const auto traj = gen_trajectory(EnvConfig{}, env, derive_seed(31, stream::kDataset, i));
    auto ra = TrajectoryRng::derive(5, i);
    auto rb = TrajectoryRng::derive(5, i);
    Tape ta, tb;
    TrajectoryLossReport a, b;
    {
      TapeGuard g(ta);
      a = asi_train_trajectory(model, traj, cfg, step, ra);
    }
    {
      TapeGuard g(tb);
      b = fixed_train_trajectory(model, traj, 1, cfg, step, rb);
    }
    records += a.step_records.size();
    if (a.step_records == b.step_records && a.mean_loss.item() == b.mean_loss.item()) ++identical;
  }
  return {identical == kReductionTrajectories,
          fmt("%zu/%zu trajectories bit-identical (%zu step records)", identical, kReductionTrajectories, records)};
}

Verdict criterion_schedules() {
  const std::uint64_t K = 7500;
  const LrSchedule lr{5e-4, 15000, 0.2};
  const bool mu = exploration_prob(0, K) == 1.0 && exploration_prob(K, K) == 0.0 && exploration_prob(K / 2, K) == 0.5;
  const bool eps = sampling_prob(0, K) == 1.0 && sampling_prob(K, K) == 0.0 && sampling_prob(K / 2, K) == 0.5;
  const bool drop = lr.lr_at(0) == 5e-4 && lr.lr_at(14999) == 5e-4 && lr.lr_at(15000) == 5e-4 * 0.2 &&
                    lr.lr_at(15000) / lr.lr_at(14999) == 0.2;
  return {mu && eps && drop, fmt("mu %s, eps %s, lr drop x0.2 at n_D %s", mu ? "exact" : "WRONG",
                                 eps ? "exact" : "WRONG", drop ? "exact" : "WRONG")};
}

std::vector<CachedRun> ablation_runs(RunCache& cache, const Method& m) {
  std::vector<CachedRun> runs;
  for (auto seed : kSeeds) {
    runs.push_back(cache.get(m.name(), ablation_signature(m), seed, [&] { return chain_ablation_config(m); }));
  }
  return runs;
}

std::vector<Real> final_accuracies(const std::vector<CachedRun>& runs) {
  std::vector<Real> v;
  for (const auto& r : runs) v.push_back(r.last().val_accuracy);
  return v;
}

std::string list(const std::vector<Real>& v, const char* f = "%.3f") {
  std::string s;
  for (Real x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

Verdict criterion_ablation(RunCache& cache) {
  const auto asi_runs = ablation_runs(cache, Method::asi());
  const auto fixed_runs = ablation_runs(cache, Method::fixed(1));
  double secs = 0;
  for (const auto& r : asi_runs) secs += r.wall_s;
  for (const auto& r : fixed_runs) secs += r.wall_s;
  const auto a = final_accuracies(asi_runs), f = final_accuracies(fixed_runs);
  bool budget_ok = true;
  for (const auto& r : asi_runs) budget_ok = budget_ok && r.last().forward_passes >= kAblationBudget;
  const Real ma = median(a), mf = median(f);
  std::printf("  asi final accuracy [%s]\n  fixed-1 final accuracy [%s]\n", list(a).c_str(), list(f).c_str());
  return {budget_ok && ma >= kAblationAccuracy && ma - mf >= kAblationGap && secs <= kAblationSeconds,
          fmt("median accuracy at %llu passes: asi %.3f >= %.2f, fixed-1 %.3f, gap %.3f >= %.2f; %.0f s <= %.0f s",
              static_cast<unsigned long long>(kAblationBudget), ma, kAblationAccuracy, mf, ma - mf, kAblationGap,
              secs, kAblationSeconds)};
}

Verdict criterion_efficiency(RunCache& cache) {
  const auto asi_runs = ablation_runs(cache, Method::asi());
  const auto fixed_runs = ablation_runs(cache, Method::fixed(1));
  std::vector<Real> skip, asi_len, fixed_len;
  for (const auto& r : asi_runs) {
    skip.push_back(r.last().mean_skip);
    asi_len.push_back(r.last().mean_rollout_length);
  }
  for (const auto& r : fixed_runs) fixed_len.push_back(r.last().mean_rollout_length);
  const Real tau = median(skip), la = median(asi_len), lf = median(fixed_len);
  std::printf("  asi mean skip [%s]\n  asi passes/trajectory [%s]\n  fixed-1 passes/trajectory [%s]\n",
              list(skip).c_str(), list(asi_len, "%.1f").c_str(), list(fixed_len, "%.1f").c_str());
  return {tau > kMinMeanSkip && la < kMaxRolloutRatio * lf,
          fmt("median mean skip %.2f > %.1f; passes per trajectory asi %.2f < %.2f (2/3 of fixed-1 %.2f)", tau,
              kMinMeanSkip, la, kMaxRolloutRatio * lf, lf)};
}

Verdict criterion_sweep() {
  const std::vector<std::size_t> dts{1, 2, 4, 8};
  std::size_t interior = 0;
  std::string per_seed;
  for (auto seed : kSeeds) {
    const auto data = gen_dataset(EnvConfig{}, EnvId::ChainWorld, 200, derive_seed(seed, stream::kTrainSplit));
    TrainConfig tc = ExperimentConfig::desk_train_config(3000);
    tc.seed = seed;
    SweepOptions opt;
    opt.forward_pass_budget = 20000;
    const auto rows = skip_sweep(data, dts, tc, opt);
    const auto best = std::min_element(rows.begin(), rows.end(), [](auto& x, auto& y) { return x.rate < y.rate; });
    std::string rates;
    for (const auto& r : rows) rates += fmt(" %zu:%.4f/%.4f", r.dt, r.mean_loss, r.rate);
    std::printf("  seed %llu dt:loss/rate%s -> argmin dt %zu\n", static_cast<unsigned long long>(seed),
                rates.c_str(), best->dt);
    std::fflush(stdout);
    if (best->dt != dts.front() && best->dt != dts.back()) ++interior;
    per_seed += fmt("%s%zu", per_seed.empty() ? "" : ",", best->dt);
  }
  return {interior >= kSweepInteriorNeeded,
          fmt("argmin dt per seed [%s]; interior in %zu/5 seeds, need >= %zu", per_seed.c_str(), interior,
              kSweepInteriorNeeded)};
}

/// best accuracy up to the switch minus worst within two epochs after it.
Real switch_drop(const CachedRun& run) {
  Real best = 0, worst = 1;
  for (const auto& r : run.rows) {
    if (r.epoch <= static_cast<Real>(kSwitchAt)) best = std::max(best, r.val_accuracy);
    if (r.epoch > static_cast<Real>(kSwitchAt) && r.epoch <= static_cast<Real>(kSwitchAt + 2))
      worst = std::min(worst, r.val_accuracy);
  }
  return best - worst;
}

Verdict criterion_switch(RunCache& cache) {
  std::vector<Real> drops[2];
  const Method methods[2] = {Method::asi(), Method::fixed(1)};
  for (int k = 0; k < 2; ++k) {
    for (auto seed : kSeeds) {
      const auto run = cache.get("switch_" + methods[k].name(), "funnel-switch v1 " + methods[k].name(), seed,
                                 [&] { return funnel_switch_config(methods[k], cache.dir(), seed); });
      drops[k].push_back(switch_drop(run));
    }
  }
  std::printf("  asi drops [%s]\n  fixed-1 drops [%s]\n", list(drops[0]).c_str(), list(drops[1]).c_str());
  const Real a = median(drops[0]), f = median(drops[1]);
  return {a < f, fmt("median drop asi %.3f < fixed-1 %.3f (switch after epoch %zu of %zu)", a, f, kSwitchAt,
                     kSwitchEpochs)};
}

Verdict criterion_exploration(RunCache& cache) {
  const auto with = final_accuracies(ablation_runs(cache, Method::asi()));
  const auto without = final_accuracies(ablation_runs(cache, Method::asi_no_explore()));
  std::printf("  asi [%s]\n  asi-no-explore [%s]\n", list(with).c_str(), list(without).c_str());
  const Real a = median(with), b = median(without);
  return {a >= b, fmt("median final accuracy asi %.3f >= asi-no-explore %.3f", a, b)};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(ASI_EXE) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// CSV text with the trailing wall_ms column removed from every line.
std::string without_wall_ms(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Verdict criterion_determinism(RunCache& cache) {
  const fs::path dir = cache.dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({"env": "chain-world", "method": "asi", "max_training_steps": 60,
  "n_train": 30, "n_valid": 20, "seeds": [4, 9], "rollout_cap": 32, "save_checkpoints": false})";
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    codes |= run_cli("train --config " + (dir / "config.json").string() + " --out_dir " + (dir / run).string());
  }
  const std::string a = without_wall_ms(dir / "a" / "metrics.csv");
  const std::string b = without_wall_ms(dir / "b" / "metrics.csv");
  const auto rows = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  return {codes == 0 && rows > 1 && a == b,
          fmt("two train runs: exit %d, %zu csv lines, identical excluding wall_ms: %s", codes, rows,
              a == b ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string cache_dir = "acceptance_cache";
  bool clean = false;
  app.add_option("--criterion", only, "run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--cache", cache_dir, "directory for cached training runs");
  app.add_flag("--clean", clean, "empty the cache first");
  CLI11_PARSE(app, argc, argv);

  if (clean) fs::remove_all(cache_dir);
  RunCache cache(cache_dir);
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"matching oracle equivalence", criterion_matching},
      {"reduction identity", criterion_reduction},
      {"schedule exactness", criterion_schedules},
      {"scaled ablation", [&] { return criterion_ablation(cache); }},
      {"efficiency accounting", [&] { return criterion_efficiency(cache); }},
      {"skip-sweep shape", criterion_sweep},
      {"robustness switch", [&] { return criterion_switch(cache); }},
      {"exploration ablation", [&] { return criterion_exploration(cache); }},
      {"determinism", [&] { return criterion_determinism(cache); }},
  };
  if (only.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) only.push_back(i);
  }
  int failures = 0;
  for (int id : only) {
    const auto& [name, check] = criteria[static_cast<std::size_t>(id - 1)];
    std::printf("criterion %2d %s\n", id, name);
    std::fflush(stdout);
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d %s: %s\n", id, v.pass ? "PASS" : "FAIL", v.summary.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
