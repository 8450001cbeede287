#include "asi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "asi/checkpoint.hpp"
#include "asi/errors.hpp"
#include "asi/grad_check.hpp"
#include "asi/ops.hpp"
#include "asi/tape.hpp"

namespace asi {

using nlohmann::json;

// -------------------------------------------------------------------- config

TrainConfig ExperimentConfig::desk_train_config(std::uint64_t max_training_steps) {
  TrainConfig c;
  c.horizon = 8;
  c.max_training_steps = max_training_steps;
  c.exploration_steps = std::max<std::uint64_t>(1, max_training_steps / 3);
  c.sampling_steps = c.exploration_steps;
  c.lr_schedule = {1e-3, std::max<std::uint64_t>(1, 2 * max_training_steps / 3), 0.2};
  c.batch_trajectories = 2;
  c.evals_per_epoch = 4;
  c.rollout_cap = 2 * kMaxTrajectoryLength;
  return c;
}

void ExperimentConfig::validate() const {
  env_config.validate();
  if (n_train == 0) throw ConfigError("n_train must be >= 1");
  if (n_valid == 0) throw ConfigError("n_valid must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must name at least one seed");
  if (n_kernels == 0) throw ConfigError("n_kernels must be >= 1");
  if (train.horizon == 0) throw ConfigError("horizon must be >= 1");
  if (train.exploration_steps == 0) throw ConfigError("exploration_k must be >= 1");
  if (train.sampling_steps == 0) throw ConfigError("sampling_k must be >= 1");
  if (train.batch_trajectories == 0) throw ConfigError("batch_size must be >= 1");
  if (train.evals_per_epoch == 0) throw ConfigError("evals_per_epoch must be >= 1");
  if (train.rollout_cap == 0) throw ConfigError("rollout_cap must be >= 1");
  if (!(train.lr_schedule.base_lr > 0)) throw ConfigError("lr must be > 0");
  if (method.kind == Method::Kind::Fixed && method.dt == 0) throw ConfigError("dt must be >= 1");
  (void)architecture_spec(architecture, n_kernels, kFrameShape.channels);
  if (switch_epoch && alternate_data.empty()) {
    throw ConfigError("switch_epoch needs alternate_data");
  }
  for (const auto* p : {&train_data, &valid_data, &alternate_data}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw IoError("dataset not found: " + p->string());
    }
  }
}

namespace {

enum class Kind { Uint, Real, String, Bool, UintList, OptUint };

struct KeySpec {
  const char* name;
  Kind kind;
  const char* help;
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"env", Kind::String, "chain-world | funnel-lite"},
      {"method", Kind::String, "asi | asi-no-explore | fixed | fixed-<dt>"},
      {"dt", Kind::Uint, "skip of the fixed method"},
      {"horizon", Kind::Uint, "H, frames one prediction may skip"},
      {"exploration_k", Kind::Uint, "steps until exploration reaches zero"},
      {"sampling_k", Kind::Uint, "steps until ground-truth feeding reaches zero"},
      {"batch_size", Kind::Uint, "trajectories per optimizer step"},
      {"lr", Kind::Real, "Adam learning rate"},
      {"lr_decay_step", Kind::Uint, "optimizer step of the learning-rate drop"},
      {"lr_decay_factor", Kind::Real, "multiplier applied at the drop"},
      {"max_training_steps", Kind::Uint, "optimizer step limit"},
      {"forward_pass_budget", Kind::Uint, "training forward-pass limit (0: none)"},
      {"bptt", Kind::String, "full | detached"},
      {"evals_per_epoch", Kind::Uint, "validation points per epoch"},
      {"rollout_cap", Kind::Uint, "abstract steps before a rollout counts as unlabeled"},
      {"architecture", Kind::String, "small-conv-3 | asi-conv-7"},
      {"n_kernels", Kind::Uint, "hidden channels"},
      {"n_train", Kind::Uint, "generated training trajectories"},
      {"n_valid", Kind::Uint, "generated validation trajectories"},
      {"seed", Kind::Uint, "single run seed"},
      {"seeds", Kind::UintList, "run seeds, one worker each"},
      {"out_dir", Kind::String, "output directory"},
      {"train_data", Kind::String, "training dataset file (default: generate)"},
      {"valid_data", Kind::String, "validation dataset file (default: generate)"},
      {"alternate_data", Kind::String, "dataset trained on from switch_epoch on"},
      {"switch_epoch", Kind::OptUint, "epoch at which alternate_data replaces train_data"},
      {"save_checkpoints", Kind::Bool, "write a model file per seed"},
      {"funnel_rows", Kind::Uint, "funnel-lite obstacle rows"},
      {"funnel_bins", Kind::Uint, "funnel-lite landing bins"},
      {"bounciness", Kind::Real, "funnel-lite wall restitution"},
      {"funnel_jitter", Kind::Real, "funnel-lite upper-row jitter (px)"},
      {"chain_segments", Kind::Uint, "chain-world segments"},
      {"chain_min_duration", Kind::Uint, "chain-world shortest segment (frames)"},
      {"chain_max_duration", Kind::Uint, "chain-world longest segment (frames)"},
      {"chain_branches", Kind::Uint, "chain-world terminals"},
      {"chain_noise", Kind::Uint, "chain-world position jitter (px)"},
  };
  return specs;
}

const KeySpec& find_key(const std::string& key) {
  for (const auto& s : key_specs())
    if (key == s.name) return s;
  throw ConfigError("unknown config key '" + key + "'");
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const json& v) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got " + v.dump());
}

std::uint64_t as_uint(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) bad_value(key, "a non-negative integer", v);
  return v.get<std::uint64_t>();
}

Real as_real(const std::string& key, const json& v) {
  if (!v.is_number()) bad_value(key, "a number", v);
  return v.get<Real>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad_value(key, "a string", v);
  return v.get<std::string>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad_value(key, "true or false", v);
  return v.get<bool>();
}

std::uint64_t parse_uint_text(const std::string& key, std::string_view text) {
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return value;
}

/// Command-line text to the JSON value the key expects.
json text_to_json(const std::string& key, const std::string& text) {
  switch (find_key(key).kind) {
    case Kind::Uint:
      return parse_uint_text(key, text);
    case Kind::OptUint:
      if (text == "none" || text.empty()) return nullptr;
      return parse_uint_text(key, text);
    case Kind::Real: {
      Real value = 0;
      const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
      }
      return value;
    }
    case Kind::String:
      return text;
    case Kind::Bool:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
    case Kind::UintList: {
      json list = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) list.push_back(parse_uint_text(key, item));
      return list;
    }
  }
  return nullptr;
}

void apply_key(ExperimentConfig& c, const std::string& key, const json& v) {
  auto& t = c.train;
  auto& f = c.env_config.funnel;
  auto& ch = c.env_config.chain;
  if (key == "env") {
    c.env = parse_env(as_string(key, v));
  } else if (key == "method") {
    const std::size_t dt = c.method.dt;
    c.method = Method::parse(as_string(key, v));
    if (c.method.kind == Method::Kind::Fixed && as_string(key, v) == "fixed") c.method.dt = dt;
  } else if (key == "dt") {
    c.method.dt = as_uint(key, v);
  } else if (key == "horizon") {
    t.horizon = as_uint(key, v);
  } else if (key == "exploration_k") {
    t.exploration_steps = as_uint(key, v);
  } else if (key == "sampling_k") {
    t.sampling_steps = as_uint(key, v);
  } else if (key == "batch_size") {
    t.batch_trajectories = as_uint(key, v);
  } else if (key == "lr") {
    t.lr_schedule.base_lr = as_real(key, v);
  } else if (key == "lr_decay_step") {
    t.lr_schedule.decay_step = as_uint(key, v);
  } else if (key == "lr_decay_factor") {
    t.lr_schedule.decay_factor = as_real(key, v);
  } else if (key == "max_training_steps") {
    t.max_training_steps = as_uint(key, v);
  } else if (key == "forward_pass_budget") {
    t.forward_pass_budget = as_uint(key, v);
  } else if (key == "bptt") {
    const auto s = as_string(key, v);
    if (s == "full") {
      t.bptt = Bptt::Full;
    } else if (s == "detached") {
      t.bptt = Bptt::Detached;
    } else {
      bad_value(key, "\"full\" or \"detached\"", v);
    }
  } else if (key == "evals_per_epoch") {
    t.evals_per_epoch = as_uint(key, v);
  } else if (key == "rollout_cap") {
    t.rollout_cap = as_uint(key, v);
  } else if (key == "architecture") {
    c.architecture = as_string(key, v);
  } else if (key == "n_kernels") {
    c.n_kernels = as_uint(key, v);
  } else if (key == "n_train") {
    c.n_train = as_uint(key, v);
  } else if (key == "n_valid") {
    c.n_valid = as_uint(key, v);
  } else if (key == "seed") {
    c.seeds = {as_uint(key, v)};
  } else if (key == "seeds") {
    if (!v.is_array()) bad_value(key, "an array of seeds", v);
    c.seeds.clear();
    for (const auto& s : v) c.seeds.push_back(as_uint(key, s));
  } else if (key == "out_dir") {
    c.out_dir = as_string(key, v);
  } else if (key == "train_data") {
    c.train_data = as_string(key, v);
  } else if (key == "valid_data") {
    c.valid_data = as_string(key, v);
  } else if (key == "alternate_data") {
    c.alternate_data = as_string(key, v);
  } else if (key == "switch_epoch") {
    if (v.is_null()) {
      c.switch_epoch.reset();
    } else {
      c.switch_epoch = as_uint(key, v);
    }
  } else if (key == "save_checkpoints") {
    c.save_checkpoints = as_bool(key, v);
  } else if (key == "funnel_rows") {
    f.obstacle_rows = as_uint(key, v);
  } else if (key == "funnel_bins") {
    f.bins = as_uint(key, v);
  } else if (key == "bounciness") {
    f.bounciness = as_real(key, v);
  } else if (key == "funnel_jitter") {
    f.jitter = as_real(key, v);
  } else if (key == "chain_segments") {
    ch.segments = as_uint(key, v);
  } else if (key == "chain_min_duration") {
    ch.min_duration = as_uint(key, v);
  } else if (key == "chain_max_duration") {
    ch.max_duration = as_uint(key, v);
  } else if (key == "chain_branches") {
    ch.branches = as_uint(key, v);
  } else if (key == "chain_noise") {
    ch.position_noise = as_uint(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : key_specs()) out.emplace_back(s.name, s.help);
    return out;
  }();
  return keys;
}

ExperimentConfig parse_experiment_config(
    std::string_view json_text, const std::vector<std::pair<std::string, std::string>>& overrides) {
  json obj;
  if (json_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    obj = json::object();
  } else {
    try {
      obj = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!obj.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, text] : overrides) obj[key] = text_to_json(key, text);
  for (const auto& [key, value] : obj.items()) {
    (void)find_key(key);
    if (value.is_object()) throw ConfigError("config key '" + key + "': nested objects not allowed");
  }

  ExperimentConfig config;
  if (obj.contains("max_training_steps")) {
    config.train =
        ExperimentConfig::desk_train_config(as_uint("max_training_steps", obj["max_training_steps"]));
  }
  // "method" before "dt" so a bare "fixed" picks up the separate dt key.
  if (obj.contains("method")) apply_key(config, "method", obj["method"]);
  for (const auto& [key, value] : obj.items()) {
    if (key != "method") apply_key(config, key, value);
  }
  if (obj.contains("dt") && config.method.kind != Method::Kind::Fixed) {
    throw ConfigError("config key 'dt' only applies to the fixed method");
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), overrides);
}

// ------------------------------------------------------------------- metrics

namespace {

std::string real_text(Real v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_field(std::string_view s, std::uint64_t line) {
  T value{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) {
    throw FormatError("metrics row " + std::to_string(line) + ": bad field '" + std::string(s) + "'",
                      line);
  }
  return value;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
  return r.method + "," + std::to_string(r.seed) + "," + real_text(r.epoch) + "," +
         std::to_string(r.optimizer_step) + "," + std::to_string(r.forward_passes) + "," +
         real_text(r.train_loss) + "," + real_text(r.val_accuracy) + "," + real_text(r.mean_skip) +
         "," + wall;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_metrics_csv(rows, out);
  if (!out.flush()) throw IoError("short write to " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError("metrics header mismatch in " + path.string(), 0);
  }
  std::vector<MetricsRow> rows;
  std::uint64_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      f.push_back(rest.substr(0, pos));
    }
    f.push_back(rest);
    if (f.size() != 9) throw FormatError("metrics row " + std::to_string(n) + ": expected 9 fields", n);
    MetricsRow r;
    r.method = std::string(f[0]);
    r.seed = parse_field<std::uint64_t>(f[1], n);
    r.epoch = parse_field<Real>(f[2], n);
    r.optimizer_step = parse_field<std::uint64_t>(f[3], n);
    r.forward_passes = parse_field<std::uint64_t>(f[4], n);
    r.train_loss = parse_field<Real>(f[5], n);
    r.val_accuracy = parse_field<Real>(f[6], n);
    r.mean_skip = parse_field<Real>(f[7], n);
    r.wall_ms = parse_field<double>(f[8], n);
    rows.push_back(std::move(r));
  }
  return rows;
}

void merge_metrics(std::vector<MetricsRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.optimizer_step < b.optimizer_step;
  });
}

// -------------------------------------------------------------------- runner

ExperimentData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentData data;
  data.train = config.train_data.empty()
                   ? gen_dataset(config.env_config, config.env, config.n_train,
                                 derive_seed(seed, stream::kTrainSplit))
                   : read_dataset(config.train_data);
  data.valid = config.valid_data.empty()
                   ? gen_dataset(config.env_config, config.env, config.n_valid,
                                 derive_seed(seed, stream::kValidSplit))
                   : read_dataset(config.valid_data);
  if (!config.alternate_data.empty()) data.alternate = read_dataset(config.alternate_data);
  return data;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string run_stem(const Method& method, std::uint64_t seed) {
  return method.name() + "_s" + std::to_string(seed);
}

}  // namespace

RunOutput run_seed(const ExperimentConfig& config, std::uint64_t seed,
                   const TrainCallbacks& extra_callbacks) {
  const ExperimentData data = prepare_data(config, seed);
  const Shape& s = data.train.front().frames.front().shape();
  const FrameShape frame_shape{s.at(0), s.at(1), s.at(2)};

  RunOutput out;
  out.seed = seed;
  out.model = DynamicsModel::build(config.architecture, config.n_kernels, frame_shape,
                                   derive_seed(seed, stream::kInit));
  TrainConfig tc = config.train;
  tc.seed = seed;

  TrainCallbacks callbacks = extra_callbacks;
  callbacks.on_epoch = [&](std::size_t epoch, const std::vector<Trajectory>& dataset) {
    out.log.push_back("epoch " + std::to_string(epoch) + " train_fingerprint " +
                      hex64(dataset_fingerprint(dataset)));
    if (extra_callbacks.on_epoch) extra_callbacks.on_epoch(epoch, dataset);
  };
  const TrainingSchedule schedule{&data.train, data.alternate.empty() ? nullptr : &data.alternate,
                                  config.switch_epoch};
  out.result = train(*out.model, schedule, tc, config.method, data.valid, config.env,
                     config.env_config, callbacks);
  return out;
}

std::size_t worker_threads_from_env() {
  if (const char* v = std::getenv("ASI_THREADS")) {
    std::size_t n = 0;
    const std::string_view text(v);
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec == std::errc{} && end == text.data() + text.size() && n > 0) return n;
    throw ConfigError("ASI_THREADS must be a positive integer, got '" + std::string(text) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads) {
  config.validate();
  const std::size_t n = config.seeds.size();
  std::vector<std::optional<RunOutput>> outputs(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        outputs[i] = run_seed(config, config.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::filesystem::create_directories(config.out_dir);
  ExperimentResult result;
  for (auto& o : outputs) {
    RunOutput& run = *o;
    const std::string stem = run_stem(config.method, run.seed);
    std::ofstream log(config.out_dir / (stem + ".log"));
    if (!log) throw IoError("cannot write " + (config.out_dir / (stem + ".log")).string());
    for (const auto& line : run.log) log << line << '\n';
    if (config.save_checkpoints) save_checkpoint(*run.model, config.out_dir / (stem + ".asimodel"));
    result.metrics.insert(result.metrics.end(), run.result.metrics.begin(), run.result.metrics.end());
    result.runs.push_back(std::move(run));
  }
  merge_metrics(result.metrics);
  write_metrics_csv(result.metrics, config.out_dir / "metrics.csv");
  return result;
}

// ----------------------------------------------------------------- gradcheck

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, Real lo, Real hi) {
  Tensor t = Tensor::zeros(shape);
  for (Real& v : t.mutable_data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

Tensor normal_tensor(const Shape& shape, Rng& rng, Real scale_by = 1) {
  Tensor t = Tensor::zeros(shape);
  for (Real& v : t.mutable_data()) v = scale_by * rng.normal();
  t.set_requires_grad(true);
  return t;
}

// Central differences straddling a ReLU kink measure a one-sided slope, so
// model checks are taken at points whose pre-activations all clear this.
constexpr Real kKinkMargin = 1e-3;

/// Smallest |pre-activation| over the model's ReLU layers at `frame`.
Real relu_margin(const DynamicsModel& model, const Tensor& frame) {
  NoGradGuard no_grad;
  const auto& spec = model.architecture();
  const auto& p = model.parameters();
  const std::size_t n = spec.layers.size();
  Real margin = std::numeric_limits<Real>::infinity();
  Tensor x = frame;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (i == spec.concat_before) x = concat_channels(x, frame);
    x = conv2d(x, p[2 * i].value, p[2 * i + 1].value);
    for (Real v : x.data()) margin = std::min(margin, std::fabs(v));
    x = relu(x);
  }
  return margin;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed, Real step) {
  Rng rng(seed);
  std::vector<GradCheckEntry> out;
  auto check = [&](const std::string& name, const std::function<Tensor()>& fn,
                   std::vector<Tensor> wrt) {
    const GradCheckResult r = grad_check_tensors(fn, std::move(wrt), step);
    out.push_back({name, r.max_relative_error, r.coordinates});
  };
  // A fixed random projection turns tensor-valued ops into scalars.
  auto project = [&](const Shape& shape) {
    Tensor w = Tensor::zeros(shape);
    for (Real& v : w.mutable_data()) v = rng.uniform(-1, 1);
    return w;
  };

  {
    Tensor x = normal_tensor({2, 5, 5}, rng), k = normal_tensor({3, 2, 3, 3}, rng, 0.5),
           b = normal_tensor({3}, rng);
    Tensor p = project({3, 5, 5});
    check("conv2d", [&] { return sum(mul(conv2d(x, k, b), p)); }, {x, k, b});
    Tensor p2 = project({3, 3, 3});
    check("conv2d_stride2", [&] { return sum(mul(conv2d(x, k, b, 2), p2)); }, {x, k, b});
  }
  {
    Tensor x = normal_tensor({2, 16, 16}, rng), k = normal_tensor({3, 2, 5, 5}, rng, 0.3),
           b = normal_tensor({3}, rng);
    Tensor p = project({3, 16, 16});
    check("conv2d_16x16", [&] { return sum(mul(conv2d(x, k, b), p)); }, {x, k, b});
  }
  {
    Tensor x = normal_tensor({3, 4, 4}, rng);
    for (Real& v : x.mutable_data())
      if (std::fabs(v) < kKinkMargin) v = std::copysign(kKinkMargin, v);
    Tensor p = project({3, 4, 4});
    check("relu", [&] { return sum(mul(relu(x), p)); }, {x});
    check("sigmoid", [&] { return sum(mul(sigmoid(x), p)); }, {x});
  }
  {
    Tensor a = normal_tensor({1, 3, 3}, rng), b = normal_tensor({2, 3, 3}, rng);
    Tensor p = project({3, 3, 3});
    check("concat_channels", [&] { return sum(mul(concat_channels(a, b), p)); }, {a, b});
    Tensor q = project({1, 3, 3});
    check("slice_channels", [&] { return sum(mul(slice_channels(b, 1, 2), q)); }, {b});
  }
  {
    Tensor pred = random_tensor({2, 3, 3}, rng, 0.05, 0.95);
    Tensor target = Tensor::zeros({2, 3, 3});
    for (Real& v : target.mutable_data()) v = rng.uniform();
    check("bce_loss", [&] { return bce_loss(pred, target); }, {pred});
  }
  {
    Tensor a = normal_tensor({6}, rng), b = normal_tensor({6}, rng);
    Tensor p = project({6});
    check("add", [&] { return sum(mul(add(a, b), p)); }, {a, b});
    check("mul", [&] { return sum(mul(mul(a, b), p)); }, {a, b});
    check("scale", [&] { return sum(mul(scale(a, -1.7), p)); }, {a});
    check("sum", [&] { return sum(a); }, {a});
    check("mean", [&] { return mean(mul(a, a)); }, {a});
  }
  for (const auto& [arch, frame] :
       {std::pair<std::string, FrameShape>{"small-conv-3", FrameShape{1, 16, 16}},
        std::pair<std::string, FrameShape>{"asi-conv-7", FrameShape{1, 8, 8}}}) {
    DynamicsModel model = DynamicsModel::build(arch, 3, frame, rng.next_u64());
    Tensor x = random_tensor(frame.as_shape(), rng, 0, 1);
    for (int attempt = 0; attempt < 100 && relu_margin(model, x) < kKinkMargin; ++attempt) {
      model = DynamicsModel::build(arch, 3, frame, rng.next_u64());
      x = random_tensor(frame.as_shape(), rng, 0, 1);
    }
    Tensor target = Tensor::zeros(frame.as_shape());
    for (Real& v : target.mutable_data()) v = rng.uniform() < 0.2 ? 1 : 0;
    std::vector<Tensor> wrt = model.parameter_tensors();
    wrt.push_back(x);
    check("model_loss_" + arch, [&] { return bce_loss(model.forward(x), target); }, wrt);
  }
  return out;
}

}  // namespace asi
