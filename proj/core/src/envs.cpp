#include "asi/envs.hpp"

#include <algorithm>
#include <cmath>

#include "asi/errors.hpp"
#include "asi/random.hpp"

namespace asi {

std::string_view env_name(EnvId env) {
  return env == EnvId::FunnelLite ? "funnel-lite" : "chain-world";
}

EnvId parse_env(std::string_view name) {
  if (name == "funnel-lite" || name == "funnel") return EnvId::FunnelLite;
  if (name == "chain-world" || name == "chain") return EnvId::ChainWorld;
  throw ConfigError("unknown environment '" + std::string(name) +
                    "' (expected funnel-lite or chain-world)");
}

void EnvConfig::validate() const {
  if (funnel.obstacle_rows < 1 || funnel.obstacle_rows > 3)
    throw ConfigError("funnel obstacle_rows must be in [1, 3]");
  if (funnel.bins < 2 || funnel.bins > 5) throw ConfigError("funnel bins must be in [2, 5]");
  if (!(funnel.bounciness >= 0 && funnel.bounciness <= 1))
    throw ConfigError("funnel bounciness must be in [0, 1]");
  if (!(funnel.jitter >= 0 && funnel.jitter <= 1)) throw ConfigError("funnel jitter must be in [0, 1]");
  if (chain.segments < 1 || chain.segments > 12) throw ConfigError("chain segments must be in [1, 12]");
  if (chain.min_duration < 1 || chain.min_duration > chain.max_duration)
    throw ConfigError("chain duration range must be non-empty with min >= 1");
  if (chain.branches < 2 || chain.branches > 5) throw ConfigError("chain branches must be in [2, 5]");
  if (chain.position_noise > 3) throw ConfigError("chain position_noise must be in [0, 3]");
}

std::size_t label_count(EnvId env, const EnvConfig& config) {
  return env == EnvId::FunnelLite ? config.funnel.bins : config.chain.branches;
}

namespace {

constexpr int kSize = static_cast<int>(kFrameSize);

/// Draws static content, then the trace, then the blob on top.
class Canvas {
 public:
  void set_max(int y, int x, Real v) {
    if (y < 0 || y >= kSize || x < 0 || x >= kSize) return;
    Real& p = pixels_[static_cast<std::size_t>(y * kSize + x)];
    p = std::max(p, v);
  }
  void block(int y, int x, int size, Real v) {
    for (int dy = 0; dy < size; ++dy)
      for (int dx = 0; dx < size; ++dx) set_max(y + dy, x + dx, v);
  }
  Tensor to_frame() const { return Tensor::from(kFrameShape.as_shape(), pixels_); }

  std::vector<Real> pixels_ = std::vector<Real>(kFrameSize * kFrameSize, Real{0});
};

// ---------------------------------------------------------------- chain-world

constexpr int kChainTrackRow = 7;
constexpr int kChainBlob = 2;
constexpr int kTerminalColumn = kSize - 2;

int chain_spacing(const ChainConfig& c) { return 12 / static_cast<int>(c.segments); }

int terminal_row(const ChainConfig& c, std::size_t branch) {
  const int n = static_cast<int>(c.branches);
  return kChainTrackRow + 3 * static_cast<int>(branch) - (3 * (n - 1)) / 2;
}

struct Cell {
  int y, x;
};

Tensor render_chain(const ChainConfig& c, Label open_terminal, Cell blob, std::optional<Cell> trace) {
  Canvas canvas;
  for (std::size_t b = 0; b < c.branches; ++b) {
    if (b != open_terminal) canvas.block(terminal_row(c, b), kTerminalColumn, 2, kObstacleIntensity);
  }
  if (trace) canvas.block(trace->y, trace->x, kChainBlob, kTraceIntensity);
  canvas.block(blob.y, blob.x, kChainBlob, kBlobIntensity);
  return canvas.to_frame();
}

Trajectory chain_once(const ChainConfig& c, Rng& rng) {
  const int spacing = chain_spacing(c);
  const int last_x = spacing * static_cast<int>(c.segments);
  const int noise = static_cast<int>(c.position_noise);
  const auto label = static_cast<Label>(rng.uniform_int(0, static_cast<std::int64_t>(c.branches) - 1));

  std::vector<Cell> path{{kChainTrackRow, 0}};
  for (std::size_t k = 0; k < c.segments; ++k) {
    const auto d = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(c.min_duration),
                                                     static_cast<std::int64_t>(c.max_duration)));
    const int x0 = spacing * static_cast<int>(k);
    for (int j = 1; j < d; ++j) {
      const int progress = static_cast<int>(std::lround(static_cast<double>(spacing * j) / d));
      const int nx = static_cast<int>(rng.uniform_int(-noise, noise));
      const int ny = static_cast<int>(rng.uniform_int(-noise, noise));
      path.push_back({std::clamp(kChainTrackRow + ny, 0, kSize - kChainBlob),
                      std::clamp(x0 + progress + nx, 0, last_x)});
    }
    path.push_back({kChainTrackRow, x0 + spacing});
  }
  path.push_back({terminal_row(c, label), kTerminalColumn});

  Trajectory traj;
  traj.label = label;
  for (std::size_t i = 0; i < path.size(); ++i) {
    traj.frames.push_back(render_chain(c, label, path[i],
                                       i == 0 ? std::nullopt : std::optional<Cell>(path[i - 1])));
  }
  return traj;
}

std::optional<Label> classify_chain(const ChainConfig& c, std::span<const Real> px) {
  std::size_t best_count = 0;
  Label best = 0;
  for (std::size_t b = 0; b < c.branches; ++b) {
    const int row = terminal_row(c, b);
    std::size_t count = 0;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        if (px[static_cast<std::size_t>((row + dy) * kSize + kTerminalColumn + dx)] > kBlobThreshold)
          ++count;
    if (count > best_count) {
      best_count = count;
      best = static_cast<Label>(b);
    }
  }
  if (best_count == 0) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------- funnel-lite

constexpr Real kGravity = 0.12;
constexpr Real kFunnelHeight = 2.0;
constexpr Real kFunnelEntrySpeed = 0.35;
constexpr Real kFunnelMinSpeed = 0.15;
constexpr Real kLandingRow = 14.0;

struct Funnel {
  Real top;    // y of the rim
  Real left;   // rim x extent
  Real right;
  Real mouth;  // exit x
  std::size_t slot;
};

Real funnel_row_top(std::size_t row, std::size_t rows) {
  // Rows are stacked upwards from the landing band: the last row sits at y = 11.
  return 11.0 - 4.0 * static_cast<Real>(rows - 1 - row);
}

Real wall_left(const Funnel& f, Real y) {
  const Real s = std::clamp((y - f.top) / kFunnelHeight, Real{0}, Real{1});
  return f.left + (f.mouth - 0.5 - f.left) * s;
}

Real wall_right(const Funnel& f, Real y) {
  const Real s = std::clamp((y - f.top) / kFunnelHeight, Real{0}, Real{1});
  return f.right + (f.mouth + 0.5 - f.right) * s;
}

struct Board {
  std::vector<std::vector<Funnel>> rows;  // present funnels per obstacle row
  Real slot_width;
};

Board make_board(const FunnelConfig& c, Rng& rng) {
  Board board;
  board.slot_width = static_cast<Real>(kSize) / static_cast<Real>(c.bins);
  for (std::size_t r = 0; r < c.obstacle_rows; ++r) {
    const bool last = r + 1 == c.obstacle_rows;
    std::vector<Funnel> row;
    for (std::size_t s = 0; s < c.bins; ++s) {
      const bool present = rng.bernoulli(0.5);
      const Real shift = rng.uniform(-c.jitter, c.jitter);
      if (!last && !present) continue;
      const Real lo = board.slot_width * static_cast<Real>(s);
      const Real hi = lo + board.slot_width;
      Funnel f;
      f.top = funnel_row_top(r, c.obstacle_rows);
      f.slot = s;
      if (last) {
        f.left = lo;
        f.right = hi;
      } else {
        f.left = lo + 0.25 + shift;
        f.right = hi - 0.25 + shift;
      }
      f.mouth = 0.5 * (f.left + f.right);
      row.push_back(f);
    }
    board.rows.push_back(std::move(row));
  }
  return board;
}

void draw_board(Canvas& canvas, const Board& board) {
  for (const auto& row : board.rows) {
    for (const auto& f : row) {
      for (int dy = 0; dy <= static_cast<int>(kFunnelHeight); ++dy) {
        const Real y = f.top + dy;
        canvas.set_max(static_cast<int>(y), static_cast<int>(std::floor(wall_left(f, y))),
                       kObstacleIntensity);
        canvas.set_max(static_cast<int>(y),
                       std::min(kSize - 1, static_cast<int>(std::floor(wall_right(f, y) - 1e-9))),
                       kObstacleIntensity);
      }
    }
  }
}

constexpr int kBallSize = 2;

/// Top-left pixel of the 2x2 ball centred on (y, x).
Cell ball_cell(Real y, Real x) {
  return {std::clamp(static_cast<int>(std::floor(y - 0.5)), 0, kSize - kBallSize),
          std::clamp(static_cast<int>(std::floor(x - 0.5)), 0, kSize - kBallSize)};
}

Trajectory funnel_once(const FunnelConfig& c, Rng& rng) {
  const Board board = make_board(c, rng);
  Real x = rng.uniform(1.0, kSize - 1.0);
  Real y = 0.5;
  Real vx = rng.uniform(-0.15, 0.15);
  Real vy = 0.0;
  const Funnel* inside = nullptr;

  std::vector<Cell> path{ball_cell(y, x)};
  std::optional<Label> label;
  while (path.size() <= kMaxTrajectoryLength) {
    if (inside == nullptr) {
      const Real y_prev = y;
      vy += kGravity;
      x += vx;
      y += vy;
      if (x < 0) {
        x = -x;
        vx = -vx;
      } else if (x > kSize - 1e-6) {
        x = 2 * (kSize - 1e-6) - x;
        vx = -vx;
      }
      for (const auto& row : board.rows) {
        if (row.empty() || !(y_prev < row.front().top && y >= row.front().top)) continue;
        for (const auto& f : row) {
          if (x >= f.left && x < f.right) {
            inside = &f;
            y = f.top;
            vx = vx + 0.6 * (f.mouth - x);
            vy = kFunnelEntrySpeed;
            break;
          }
        }
        break;
      }
      if (y >= kLandingRow) {
        y = kLandingRow + 0.5;
        path.push_back(ball_cell(y, x));
        path.push_back(ball_cell(y + 1.0, x));
        label = static_cast<Label>(std::min<Real>(std::floor(x / board.slot_width),
                                                  static_cast<Real>(c.bins - 1)));
        break;
      }
    } else {
      const Funnel& f = *inside;
      x += vx;
      y += vy;
      const Real lw = wall_left(f, y), rw = wall_right(f, y);
      if (x < lw) {
        x = lw + (lw - x) * c.bounciness;
        vx = std::abs(vx) * c.bounciness;
        vy = std::max(kFunnelMinSpeed, vy * (1.0 - 0.5 * c.bounciness));
      } else if (x > rw) {
        x = rw - (x - rw) * c.bounciness;
        vx = -std::abs(vx) * c.bounciness;
        vy = std::max(kFunnelMinSpeed, vy * (1.0 - 0.5 * c.bounciness));
      }
      x = std::clamp(x, wall_left(f, y), wall_right(f, y));
      if (y >= f.top + kFunnelHeight) {
        x = f.mouth;
        y = f.top + kFunnelHeight;
        vx = 0;
        vy = kFunnelEntrySpeed;
        inside = nullptr;
      }
    }
    path.push_back(ball_cell(y, x));
  }

  Trajectory traj;
  if (!label) return traj;  // overlong; caller retries
  traj.label = *label;
  for (std::size_t i = 0; i < path.size(); ++i) {
    Canvas canvas;
    draw_board(canvas, board);
    if (i > 0) canvas.block(path[i - 1].y, path[i - 1].x, kBallSize, kTraceIntensity);
    canvas.block(path[i].y, path[i].x, kBallSize, kBlobIntensity);
    traj.frames.push_back(canvas.to_frame());
  }
  return traj;
}

std::optional<Label> classify_funnel(const FunnelConfig& c, std::span<const Real> px) {
  Real sy = 0, sx = 0;
  std::size_t n = 0;
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
      if (px[static_cast<std::size_t>(y * kSize + x)] > kBlobThreshold) {
        sy += y;
        sx += x;
        ++n;
      }
  if (n == 0) return std::nullopt;
  const Real cy = sy / static_cast<Real>(n);
  const Real cx = sx / static_cast<Real>(n);
  if (cy < kLandingRow - 0.5) return std::nullopt;
  const Real slot_width = static_cast<Real>(kSize) / static_cast<Real>(c.bins);
  const auto bin = static_cast<std::size_t>(std::floor((cx + 0.5) / slot_width));
  return static_cast<Label>(std::min(bin, c.bins - 1));
}

}  // namespace

Trajectory gen_trajectory(const EnvConfig& config, EnvId env, std::uint64_t seed) {
  config.validate();
  constexpr int kRetries = 8;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    Rng rng(attempt == 0 ? seed : derive_seed(seed, stream::kRetry, static_cast<std::uint64_t>(attempt)));
    Trajectory traj = env == EnvId::ChainWorld ? chain_once(config.chain, rng)
                                               : funnel_once(config.funnel, rng);
    if (traj.length() >= 2 && traj.length() <= kMaxTrajectoryLength) {
      traj.env = env;
      traj.seed = seed;
      return traj;
    }
  }
  throw NumericError("could not generate a " + std::string(env_name(env)) + " trajectory within " +
                     std::to_string(kMaxTrajectoryLength) + " frames for seed " +
                     std::to_string(seed));
}

std::vector<Trajectory> gen_dataset(const EnvConfig& config, EnvId env, std::size_t count,
                                    std::uint64_t master_seed) {
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(gen_trajectory(config, env, derive_seed(master_seed, stream::kDataset, i)));
  }
  return out;
}

std::optional<Label> classify(EnvId env, const Tensor& frame, const EnvConfig& config) {
  if (frame.shape() != kFrameShape.as_shape()) {
    throw DimensionError("classify expects a " + shape_string(kFrameShape.as_shape()) +
                         " frame, got " + shape_string(frame.shape()));
  }
  return env == EnvId::ChainWorld ? classify_chain(config.chain, frame.data())
                                  : classify_funnel(config.funnel, frame.data());
}

}  // namespace asi
