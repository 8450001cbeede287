#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "asi/envs.hpp"
#include "asi/model.hpp"
#include "asi/ops.hpp"
#include "asi/optim.hpp"
#include "asi/random.hpp"
#include "asi/tape.hpp"
#include "asi/train.hpp"

namespace {

using namespace asi;

Tensor uniform_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Real& v : t.mutable_data()) v = rng.uniform();
  return t;
}

// Args: channels in/out, kernel size.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor x = uniform_tensor({c, 16, 16}, rng);
  const Tensor w = uniform_tensor({c, c, k, k}, rng);
  const Tensor b = uniform_tensor({c}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * k * k * 256));
}
BENCHMARK(BM_Conv2dForward)->Args({3, 3})->Args({8, 3})->Args({8, 5})->Args({16, 3});

void BM_ModelForward(benchmark::State& state, const char* arch) {
  auto model = DynamicsModel::build(arch, static_cast<std::size_t>(state.range(0)), kFrameShape, 1);
  Rng rng(2);
  const Tensor x = uniform_tensor({1, 16, 16}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}
BENCHMARK_CAPTURE(BM_ModelForward, small_conv_3, "small-conv-3")->Arg(8)->Arg(16);
BENCHMARK_CAPTURE(BM_ModelForward, asi_conv_7, "asi-conv-7")->Arg(8)->Arg(16);

void BM_ModelForwardBackward(benchmark::State& state) {
  auto model = DynamicsModel::build("asi-conv-7", static_cast<std::size_t>(state.range(0)),
                                    kFrameShape, 1);
  Rng rng(3);
  const Tensor x = uniform_tensor({1, 16, 16}, rng);
  const Tensor target = uniform_tensor({1, 16, 16}, rng);
  for (auto _ : state) {
    model.zero_grad();
    compute_gradients([&] { return bce_loss(model.forward(x), target); });
  }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(8)->Arg(16);

// One optimizer step over a batch of two chain trajectories.
void BM_TrainStep(benchmark::State& state) {
  const Method method = state.range(0) == 0 ? Method::asi() : Method::fixed(1);
  auto model = DynamicsModel::build("asi-conv-7", 8, kFrameShape, 1);
  const auto data = gen_dataset(EnvConfig{}, EnvId::ChainWorld, 2, 5);
  TrainConfig config;
  AdamState adam(model.parameter_tensors());
  auto params = model.parameter_tensors();
  std::uint64_t counter = 0;
  std::uint64_t passes = 0;
  for (auto _ : state) {
    model.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeGuard guard(tape);
      for (const auto& trajectory : data) {
        TrajectoryRng rng = TrajectoryRng::derive(config.seed, counter++);
        auto report = train_trajectory(model, trajectory, method, config, 0, rng);
        passes += report.forward_passes;
        loss = loss.defined() ? add(loss, report.mean_loss) : report.mean_loss;
      }
    }
    tape.backward(loss);
    adam_step(adam, params, config.lr_schedule.lr_at(0));
  }
  state.counters["fwd/step"] =
      benchmark::Counter(static_cast<double>(passes) / static_cast<double>(state.iterations()));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->ArgNames({"fixed"})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
