#include <cmath>
#include <filesystem>
#include <fstream>

#include "asi/checkpoint.hpp"
#include "asi/errors.hpp"
#include "asi/model.hpp"
#include "asi/ops.hpp"
#include "asi/optim.hpp"
#include "asi/tape.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace asi;
using asi::testing::random_tensor;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("asi_unit_" + name);
}

/// Closed-form count written out layer by layer: (k*k*in*out + out) summed.
std::size_t conv_params(std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out + out; }

}  // namespace

TEST_SUITE("model-optim") {

TEST_CASE("architecture specs") {
  const auto a7 = architecture_spec("asi-conv-7", 48, 3);
  std::vector<std::size_t> kernels;
  for (const auto& l : a7.layers) kernels.push_back(l.kernel);
  CHECK(kernels == std::vector<std::size_t>{5, 5, 5, 7, 5, 1, 1});
  CHECK(a7.layers.back().out_channels == 3);
  CHECK(a7.concat_before == 5);
  CHECK_THROWS_AS(architecture_spec("resnet", 8, 1), ConfigError);
  CHECK_THROWS_AS(DynamicsModel::build("asi-conv-7", 4, FrameShape{1, 6, 6}, 1), DimensionError);
}

TEST_CASE("parameter count closed form") {
  const std::size_t n = 48, c = 3;
  const std::size_t want = conv_params(5, c, n) + 2 * conv_params(5, n, n) + conv_params(7, n, n) +
                           conv_params(5, n, n) + conv_params(1, n + c, n) + conv_params(1, n, c);
  CHECK(parameter_count(architecture_spec("asi-conv-7", n, c), c) == want);
  CHECK(parameter_count(architecture_spec("small-conv-3", 8, 1), 1) ==
        conv_params(3, 1, 8) + conv_params(3, 8, 8) + conv_params(3, 9, 1));
  auto model = DynamicsModel::build("asi-conv-7", 6, FrameShape{2, 8, 8}, 3);
  CHECK(model.parameter_count() == parameter_count(architecture_spec("asi-conv-7", 6, 2), 2));
}

TEST_CASE("build is seeded and forward stays in (0,1)") {
  auto a = DynamicsModel::build("small-conv-3", 8, FrameShape{}, 42);
  auto b = DynamicsModel::build("small-conv-3", 8, FrameShape{}, 42);
  auto c = DynamicsModel::build("small-conv-3", 8, FrameShape{}, 43);
  bool differs = false;
  for (std::size_t p = 0; p < a.parameters().size(); ++p) {
    const auto x = a.parameters()[p].value.data(), y = b.parameters()[p].value.data();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
    const auto z = c.parameters()[p].value.data();
    for (std::size_t i = 0; i < x.size(); ++i) differs = differs || x[i] != z[i];
  }
  CHECK(differs);
  for (const auto& p : a.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (Real v : p.value.data()) CHECK(v == 0.0);
    }
  }

  Rng rng(1);
  Tensor frame = random_tensor(rng, {1, 16, 16}, 0, 1);
  const auto before = a.forward_passes();
  Tensor y1 = a.forward(frame);
  CHECK(a.forward_passes() == before + 1);
  REQUIRE(y1.shape() == Shape{1, 16, 16});
  for (Real v : y1.data()) CHECK((v > 0.0 && v < 1.0));
  Tensor y2 = a.forward(frame.clone());
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
  CHECK_THROWS_AS(a.forward(Tensor::zeros({1, 8, 8})), DimensionError);
}

TEST_CASE("He-normal weight scale") {
  auto m = DynamicsModel::build("small-conv-3", 32, FrameShape{}, 5);
  const auto& w = m.parameters()[2].value;  // conv1.weight, fan_in 9*32
  Real sq = 0;
  for (Real v : w.data()) sq += v * v;
  const Real sd = std::sqrt(sq / static_cast<Real>(w.numel()));
  const Real want = std::sqrt(2.0 / (9.0 * 32.0));
  CHECK(std::fabs(sd / want - 1) < 0.05);
}

TEST_CASE("adam first step and zero gradients") {
  Tensor w = Tensor::from({1}, {0.0});
  w.mutable_grad()[0] = 1.0;
  std::vector<Tensor> params{w};
  AdamState state(params);
  adam_step(state, params, 0.1);
  CHECK(std::fabs(w.data()[0] + 0.1) < 1e-6);
  CHECK(state.step == 1);

  Rng rng(2);
  Tensor v = random_tensor(rng, {4});
  const std::vector<Real> before(v.data().begin(), v.data().end());
  v.zero_grad();
  std::vector<Tensor> ps{v};
  AdamState s2(ps);
  for (int i = 0; i < 3; ++i) adam_step(s2, ps, 0.1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(v.data()[i] == before[i]);
  CHECK(s2.step == 3);

  Tensor nograd = Tensor::zeros({2});
  std::vector<Tensor> bad{nograd};
  AdamState s3(bad);
  CHECK_THROWS_AS(adam_step(s3, bad, 0.1), ContractError);
}

TEST_CASE("adam on 0.5 w^2: one step decreases the loss exactly when |w| > lr / 2") {
  // The bias-corrected first step has magnitude ~lr regardless of |w|, so from
  // |w| < lr/2 it overshoots past -w. Both sides of that boundary are checked.
  Rng rng(3);
  for (int c = 0; c < 500; ++c) {
    const Real lr = rng.uniform(1e-3, 0.5);
    Real w0 = rng.uniform(-2, 2);
    if (std::fabs(std::fabs(w0) - lr / 2) < 1e-6) continue;
    Tensor w = Tensor::from({1}, {w0});
    w.set_requires_grad(true);
    compute_gradients([&] { return scale(mul(w, w), 0.5); });
    std::vector<Tensor> ps{w};
    AdamState s(ps);
    adam_step(s, ps, lr);
    const Real after = 0.5 * w.data()[0] * w.data()[0];
    const Real before = 0.5 * w0 * w0;
    if (std::fabs(w0) > lr / 2) {
      CHECK(after < before);
    } else {
      CHECK(after >= before);
    }
  }
}

TEST_CASE("adam runs are bit-identical") {
  auto run = [] {
    Rng rng(4);
    Tensor w = random_tensor(rng, {3});
    w.set_requires_grad(true);
    std::vector<Tensor> ps{w};
    AdamState s(ps);
    for (int i = 0; i < 20; ++i) {
      w.zero_grad();
      compute_gradients([&] { return sum(mul(mul(w, w), w)); });
      adam_step(s, ps, 0.01);
    }
    return std::vector<Real>(w.data().begin(), w.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("learning-rate schedule") {
  LrSchedule s{5e-4, 15000, 0.2};
  CHECK(s.lr_at(0) == 5e-4);
  CHECK(s.lr_at(14999) == 5e-4);
  CHECK(s.lr_at(15000) == 5e-4 * 0.2);
  CHECK(std::fabs(s.lr_at(15000) - 1e-4) < 1e-18);
  CHECK(s.lr_at(1000000) == s.lr_at(15000));
}

TEST_CASE("checkpoint round trip") {
  auto model = DynamicsModel::build("asi-conv-7", 4, FrameShape{1, 8, 8}, 9);
  const auto path = temp_path("ckpt.asimodel");
  save_checkpoint(model, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.architecture().name == "asi-conv-7");
  CHECK(loaded.input_shape() == model.input_shape());
  CHECK(loaded.n_kernels() == 4);
  REQUIRE(loaded.parameters().size() == model.parameters().size());
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    CHECK(loaded.parameters()[p].name == model.parameters()[p].name);
    const auto a = model.parameters()[p].value.data(), b = loaded.parameters()[p].value.data();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<Real>(static_cast<float>(a[i])));
  }

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "ASIMODEL");

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "ASIMODEX";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

}  // TEST_SUITE
