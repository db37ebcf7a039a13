#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "polymorph/checkpoint.hpp"
#include "polymorph/nn.hpp"
#include "polymorph/oracles.hpp"

namespace polymorph {
namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, std::vector<double> w,
                      std::vector<double> b, Activation act,
                      const std::string& name = "t") {
  DenseLayer l;
  l.weight = ParamTensor(name + ".weight", {out, in});
  l.bias = ParamTensor(name + ".bias", {out});
  l.weight.values = std::move(w);
  l.bias.values = std::move(b);
  l.activation = act;
  return l;
}

std::vector<double> collect_values(Mlp& net) {
  std::vector<double> out;
  for (ParamTensor* p : net.parameters()) out.insert(out.end(), p->values.begin(), p->values.end());
  return out;
}

TEST(Forward, IdentityNetReturnsInput) {
  Mlp net({make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::kIdentity)});
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_EQ(net.forward(x), (std::vector<double>{1.0, 2.0}));
}

TEST(Forward, SingleAffineLayer) {
  Mlp net({make_layer(1, 1, {2}, {1}, Activation::kIdentity)});
  EXPECT_DOUBLE_EQ(net.forward(std::vector<double>{3.0})[0], 7.0);
}

TEST(Forward, MatchesStraightLineRecomputation) {
  Rng rng(11);
  MlpSpec spec{4, {8}, 2, Activation::kTanh, Activation::kIdentity};
  Mlp net(spec, rng);
  const std::vector<double> x = {0.3, -1.2, 0.7, 2.0};
  const std::vector<double> y = net.forward(x);

  auto as_rows = [](const ParamTensor& w) {
    std::vector<std::vector<double>> m(w.shape[0], std::vector<double>(w.shape[1]));
    for (std::size_t o = 0; o < w.shape[0]; ++o) {
      for (std::size_t i = 0; i < w.shape[1]; ++i) m[o][i] = w.values[o * w.shape[1] + i];
    }
    return m;
  };
  const auto& layers = net.layers();
  const auto h = oracle::dense_reference(as_rows(layers[0].weight), layers[0].bias.values, x, true);
  const auto ref = oracle::dense_reference(as_rows(layers[1].weight), layers[1].bias.values, h, false);
  ASSERT_EQ(y.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(y[k], ref[k], 1e-12);
}

TEST(Forward, DimensionMismatchThrows) {
  Rng rng(1);
  Mlp net(MlpSpec{3, {4}, 1}, rng);
  EXPECT_THROW(net.forward(std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Forward, Deterministic) {
  Rng a(5), b(5);
  Mlp n1(MlpSpec{3, {6, 6}, 2}, a);
  Mlp n2(MlpSpec{3, {6, 6}, 2}, b);
  const std::vector<double> x = {0.1, 0.2, -0.3};
  EXPECT_EQ(n1.forward(x), n2.forward(x));
  EXPECT_EQ(n1.predict(x), n1.forward(x));
}

TEST(Init, FanInBoundAndZeroBias) {
  Rng rng(3);
  Mlp net(MlpSpec{16, {9}, 4}, rng);
  const auto& l0 = net.layers()[0];
  for (double w : l0.weight.values) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(16.0));
  for (double b : l0.bias.values) EXPECT_EQ(b, 0.0);
  for (double w : net.layers()[1].weight.values) EXPECT_LE(std::abs(w), 1.0 / 3.0);
}

TEST(Backward, LinearDerivative) {
  Mlp net({make_layer(1, 1, {0.7}, {0}, Activation::kIdentity)});
  net.forward(std::vector<double>{2.0});
  net.backward(std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(net.layers()[0].weight.grad[0], 2.0);
}

TEST(Backward, TanhAtZero) {
  Mlp net({make_layer(1, 1, {0.0}, {0}, Activation::kTanh)});
  net.forward(std::vector<double>{5.0});
  net.backward(std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(net.layers()[0].weight.grad[0], 5.0);
}

TEST(Backward, WithoutForwardIsStateError) {
  Rng rng(2);
  Mlp net(MlpSpec{2, {3}, 1}, rng);
  EXPECT_THROW(net.backward(std::vector<double>{1.0}), StateError);
  net.forward(std::vector<double>{1.0, 1.0});
  net.backward(std::vector<double>{1.0});
  EXPECT_THROW(net.backward(std::vector<double>{1.0}), StateError);
}

TEST(Backward, WrongGradientShape) {
  Rng rng(2);
  Mlp net(MlpSpec{2, {3}, 2}, rng);
  net.forward(std::vector<double>{1.0, 1.0});
  EXPECT_THROW(net.backward(std::vector<double>{1.0}), ShapeError);
}

TEST(Backward, GradientsAccumulate) {
  Mlp net({make_layer(1, 1, {0.5}, {0}, Activation::kIdentity)});
  net.forward(std::vector<double>{2.0});
  net.backward(std::vector<double>{1.0});
  net.forward(std::vector<double>{3.0});
  net.backward(std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(net.layers()[0].weight.grad[0], 5.0);
  net.zero_grad();
  EXPECT_EQ(net.layers()[0].weight.grad[0], 0.0);
}

// loss = sum(c * net(x)) on a batch; checked against central differences.
double max_fd_error(Mlp& net, const Matrix& x, const Matrix& c) {
  net.zero_grad();
  net.forward(x);
  const Matrix dx = net.backward(c);
  std::vector<double*> ptrs;
  std::vector<double> analytic;
  for (ParamTensor* p : net.parameters()) {
    for (std::size_t k = 0; k < p->size(); ++k) {
      ptrs.push_back(&p->values[k]);
      analytic.push_back(p->grad[k]);
    }
  }
  Matrix xin = x;
  for (Eigen::Index k = 0; k < xin.size(); ++k) {
    ptrs.push_back(xin.data() + k);
    analytic.push_back(dx.data()[k]);
  }
  auto loss = [&]() { return (net.predict(xin).array() * c.array()).sum(); };
  const auto numeric = oracle::central_difference(loss, ptrs, 1e-5);
  double worst = 0.0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    worst = std::max(worst, oracle::relative_error(analytic[k], numeric[k], 1e-4));
  }
  return worst;
}

TEST(Backward, FiniteDifference351) {
  Rng rng(17);
  Mlp net(MlpSpec{3, {5}, 1}, rng);
  const Matrix x = Matrix::Random(1, 3);
  const Matrix c = Matrix::Ones(1, 1);
  EXPECT_LT(max_fd_error(net, x, c), 1e-4);
}

TEST(Backward, FiniteDifferenceRandomNets) {
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 7);
  std::uniform_int_distribution<int> depth(0, 2);
  std::uniform_int_distribution<int> act(0, 1);
  for (int trial = 0; trial < 120; ++trial) {
    MlpSpec spec;
    spec.input_dim = static_cast<std::size_t>(width(rng));
    spec.output_dim = static_cast<std::size_t>(width(rng));
    spec.hidden.clear();
    for (int d = depth(rng); d > 0; --d) spec.hidden.push_back(static_cast<std::size_t>(width(rng)));
    spec.hidden_activation = act(rng) ? Activation::kTanh : Activation::kIdentity;
    spec.output_activation = act(rng) ? Activation::kTanh : Activation::kIdentity;
    Mlp net(spec, rng);
    std::uniform_int_distribution<int> batch(1, 4);
    const Eigen::Index b = batch(rng);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    Matrix x(b, static_cast<Eigen::Index>(spec.input_dim));
    Matrix c(b, static_cast<Eigen::Index>(spec.output_dim));
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
    for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = u(rng);
    EXPECT_LT(max_fd_error(net, x, c), 1e-4) << "trial " << trial;
  }
}

TEST(Optimizer, SgdStep) {
  Mlp net({make_layer(1, 1, {1.0}, {0}, Activation::kIdentity)});
  net.parameters()[0]->grad[0] = 2.0;
  OptimizerState opt = OptimizerState::sgd(0.1);
  optimizer_step(net, opt);
  EXPECT_DOUBLE_EQ(net.layers()[0].weight.values[0], 0.8);
  EXPECT_EQ(net.layers()[0].weight.grad[0], 0.0);
  EXPECT_EQ(opt.step_count, 1u);
}

TEST(Optimizer, ZeroGradLeavesParametersUnchanged) {
  Rng rng(8);
  Mlp net(MlpSpec{3, {4}, 2}, rng);
  const auto before = collect_values(net);
  OptimizerState sgd = OptimizerState::sgd(0.5);
  optimizer_step(net, sgd);
  EXPECT_EQ(collect_values(net), before);
  OptimizerState adam = OptimizerState::adam(0.5);
  optimizer_step(net, adam);
  EXPECT_EQ(collect_values(net), before);
}

TEST(Optimizer, AdamMatchesHandUnroll) {
  Mlp net({make_layer(2, 1, {0.4, -0.2}, {0.1}, Activation::kIdentity)});
  OptimizerState opt = OptimizerState::adam(0.01);
  const std::vector<std::vector<double>> grads = {
      {0.5, -1.0, 0.25}, {0.3, 0.2, -0.7}, {-0.9, 0.05, 0.4}};

  std::vector<double> theta = {0.4, -0.2, 0.1}, m(3, 0.0), v(3, 0.0);
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const auto& g = grads[t - 1];
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, static_cast<double>(t)));
      const double vh = v[i] / (1.0 - std::pow(0.999, static_cast<double>(t)));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    auto params = net.parameters();
    params[0]->grad = {g[0], g[1]};
    params[1]->grad = {g[2]};
    optimizer_step(net, opt);
  }
  const auto got = collect_values(net);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], theta[i], 1e-10);
  EXPECT_EQ(opt.step_count, 3u);
}

TEST(Optimizer, NonFiniteGradientNamesParameter) {
  Rng rng(1);
  Mlp net(MlpSpec{2, {2}, 1}, rng, "critic");
  net.parameters()[1]->grad[0] = std::nan("");
  OptimizerState opt = OptimizerState::adam(1e-3);
  try {
    optimizer_step(net, opt);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("critic.l0.bias"), std::string::npos) << e.what();
  }
}

TEST(Optimizer, ParametersStayFinite) {
  Rng rng(9);
  Mlp net(MlpSpec{3, {8}, 2}, rng);
  OptimizerState opt = OptimizerState::adam(0.1);
  for (int step = 0; step < 50; ++step) {
    const Matrix x = Matrix::Random(5, 3) * 10.0;
    const Matrix y = net.forward(x);
    net.backward(y);
    optimizer_step(net, opt);
  }
  for (double w : net.flat_values()) EXPECT_TRUE(std::isfinite(w));
}

TEST(Checkpoint, BinaryRoundTripIsExact) {
  Rng rng(77);
  Mlp net(MlpSpec{5, {7, 3}, 2, Activation::kRelu, Activation::kTanh}, rng, "net");
  Checkpoint c;
  c.meta["topology"] = topology_json(net);
  append_tensors(c, net);
  std::stringstream ss;
  write_binary(ss, c);
  const Checkpoint back = read_binary(ss);
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (std::size_t k = 0; k < c.tensors.size(); ++k) {
    EXPECT_EQ(back.tensors[k].name, c.tensors[k].name);
    EXPECT_EQ(back.tensors[k].shape, c.tensors[k].shape);
    EXPECT_EQ(back.tensors[k].values, c.tensors[k].values);
  }
  const Mlp restored = restore_mlp(back, back.meta.at("topology"), "net");
  EXPECT_EQ(restored.flat_values(), net.flat_values());
  const Matrix x = Matrix::Random(3, 5);
  EXPECT_EQ(restored.predict(x), net.predict(x));
}

TEST(Checkpoint, JsonFileRoundTrip) {
  Rng rng(4);
  Mlp net(MlpSpec{2, {3}, 1}, rng, "n");
  Checkpoint c;
  c.meta["topology"] = topology_json(net);
  append_tensors(c, net);
  const auto path = std::filesystem::temp_directory_path() / "polymorph_nn_ckpt.json";
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  const Mlp restored = restore_mlp(back, back.meta.at("topology"), "n");
  for (std::size_t k = 0; k < net.flat_values().size(); ++k) {
    EXPECT_NEAR(restored.flat_values()[k], net.flat_values()[k], 1e-15);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream ss("NOPE....");
  EXPECT_THROW(read_binary(ss), ConfigError);
}

}  // namespace
}  // namespace polymorph
