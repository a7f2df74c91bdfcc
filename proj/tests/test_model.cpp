#include <doctest.h>

#include <cmath>

#include "supcr/model.hpp"
#include "supcr/verify.hpp"
#include "test_util.hpp"

using namespace supcr;
using supcr::testing::random_matrix;

TEST_CASE("zero network outputs zeros") {
  Rng rng = derive_rng(4, 1);
  MLP net = MLP::random({3, 5, 2}, rng);
  for (Matrix* p : net.parameters()) p->setZero();
  CHECK(net.forward(random_matrix(rng, 4, 3)).isZero(0.0));
}

TEST_CASE("identity layer passes inputs through") {
  const MLP net({Layer{Matrix::Identity(3, 3), Matrix::Zero(1, 3)}});
  Rng rng = derive_rng(4, 2);
  const Matrix x = random_matrix(rng, 5, 3);
  CHECK(net.forward(x) == x);
}

TEST_CASE("forward is pure") {
  Rng rng = derive_rng(4, 3);
  const MLP net = MLP::random({4, 8, 8, 3}, rng);
  const Matrix x = random_matrix(rng, 6, 4);
  CHECK(net.forward(x) == net.forward(x));
  CHECK(net.widths() == std::vector<int>{4, 8, 8, 3});
  CHECK_THROWS_AS(net.forward(random_matrix(rng, 6, 5)), DomainError);
}

TEST_CASE("initialisation stays within the fan-in bound") {
  Rng rng = derive_rng(4, 4);
  const MLP net = MLP::random({9, 16, 4}, rng);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(1.0 / 9));
  CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(1.0 / 16));
}

TEST_CASE("backward matches central differences on a small net") {
  Rng rng = derive_rng(4, 5);
  const MLP net = MLP::random({3, 6, 2}, rng);
  const Matrix x = random_matrix(rng, 5, 3);
  const Matrix upstream = random_matrix(rng, 5, 2);
  ForwardCache cache;
  net.forward(x, &cache);
  const MlpGradients grads = net.backward(cache, upstream);
  const auto objective = [&](const MLP& m, const Matrix& in) { return (m.forward(in).array() * upstream.array()).sum(); };

  for (std::size_t p = 0; p < grads.params.size(); ++p) {
    MLP probe = net;
    const Matrix base = *probe.parameters()[p];
    const Matrix numeric = numeric_gradient(
        [&](const Matrix& value) {
          *probe.parameters()[p] = value;
          return objective(probe, x);
        },
        base, 1e-5);
    CHECK(max_relative_error(grads.params[p], numeric) < 1e-4);
  }
  const Matrix numeric_input = numeric_gradient([&](const Matrix& in) { return objective(net, in); }, x, 1e-5);
  CHECK(max_relative_error(grads.input_grad, numeric_input) < 1e-4);
}

TEST_CASE("zero upstream gives zero parameter gradients") {
  Rng rng = derive_rng(4, 6);
  const MLP net = MLP::random({3, 4, 2}, rng);
  ForwardCache cache;
  net.forward(random_matrix(rng, 3, 3), &cache);
  for (const Matrix& g : net.backward(cache, Matrix::Zero(3, 2)).params) CHECK(g.isZero(0.0));
}

TEST_CASE("linear net gradient equals input transpose times upstream") {
  Rng rng = derive_rng(4, 7);
  const MLP net = MLP::random({3, 2}, rng);
  const Matrix x = random_matrix(rng, 4, 3);
  const Matrix up = random_matrix(rng, 4, 2);
  ForwardCache cache;
  net.forward(x, &cache);
  const MlpGradients g = net.backward(cache, up);
  CHECK(g.params[0] == x.transpose() * up);
  CHECK(g.params[1] == up.colwise().sum());
}

TEST_CASE("linear predictor gradients") {
  Rng rng = derive_rng(4, 8);
  const LinearPredictor p = LinearPredictor::random(4, 2, rng);
  const Matrix e = random_matrix(rng, 6, 4);
  const Matrix up = random_matrix(rng, 6, 2);
  const MlpGradients g = p.backward(e, up);
  CHECK(g.params[0] == e.transpose() * up);
  CHECK(g.input_grad == up * p.weight.transpose());
  CHECK(p.forward(e) == (e * p.weight).rowwise() + p.bias.row(0));
}

TEST_CASE("regression losses") {
  const Matrix t = (Matrix(2, 2) << 1, 2, 3, 4).finished();
  for (RegressionKind kind : {RegressionKind::L1, RegressionKind::MSE, RegressionKind::Huber}) {
    const RegressionResult r = regression_loss(t, t, {kind, 1.0});
    CHECK(r.value == 0.0);
    CHECK(r.grad.isZero(0.0));
  }
  const Matrix zero = Matrix::Zero(1, 1);
  CHECK(regression_loss(Matrix::Constant(1, 1, 0.5), zero, {RegressionKind::Huber, 1.0}).value == 0.125);
  CHECK(regression_loss(Matrix::Constant(1, 1, 2.0), zero, {RegressionKind::Huber, 1.0}).value == 1.5);

  const Matrix pred = (Matrix(2, 2) << 1.5, 0, 3, 7).finished();
  const RegressionResult mse = regression_loss(pred, t, {RegressionKind::MSE, 1.0});
  CHECK(mse.grad == 2.0 * (pred - t) / 4.0);
  const RegressionResult l1 = regression_loss(pred, t, {RegressionKind::L1, 1.0});
  CHECK(l1.value == doctest::Approx((0.5 + 2 + 0 + 3) / 4.0));
  CHECK(l1.grad(1, 0) == 0.0);
}

TEST_CASE("cosine schedule") {
  OptimizerConfig c;
  c.lr_base = 0.1;
  c.lr_min = 0.01;
  c.total_steps = 100;
  CHECK(cosine_lr(0, c) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(cosine_lr(100, c) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(cosine_lr(50, c) == doctest::Approx(0.055).epsilon(1e-15));
  CHECK(cosine_lr(150, c) == 0.01);
  for (long s = 1; s <= 100; ++s) CHECK(cosine_lr(s, c) <= cosine_lr(s - 1, c));
}

TEST_CASE("SGD updates") {
  Matrix theta = Matrix::Constant(2, 2, 1.0);
  const Matrix g = Matrix::Constant(2, 2, 0.5);

  OptimizerConfig plain;
  plain.momentum = 0.0;
  plain.weight_decay = 0.0;
  Sgd sgd(plain);
  sgd.step({&theta}, {g}, 0.1);
  CHECK(theta.isApprox(Matrix::Constant(2, 2, 0.95), 1e-15));

  Sgd idle(plain);
  const Matrix before = theta;
  idle.step({&theta}, {Matrix::Zero(2, 2)}, 0.1);
  CHECK(theta == before);

  OptimizerConfig heavy;
  heavy.momentum = 0.9;
  heavy.weight_decay = 0.0;
  Sgd mom(heavy);
  Matrix x = Matrix::Zero(1, 1);
  const Matrix gc = Matrix::Constant(1, 1, 2.0);
  mom.step({&x}, {gc}, 0.1);
  mom.step({&x}, {gc}, 0.1);
  CHECK(x(0, 0) == doctest::Approx(-0.1 * 2.0 * 2.9).epsilon(1e-15));

  OptimizerConfig decay;
  decay.momentum = 0.0;
  decay.weight_decay = 0.5;
  Sgd wd(decay);
  Matrix y = Matrix::Constant(1, 1, 2.0);
  wd.step({&y}, {Matrix::Zero(1, 1)}, 0.1);
  CHECK(y(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
}

TEST_CASE("regression kind names") {
  for (RegressionKind k : {RegressionKind::L1, RegressionKind::MSE, RegressionKind::Huber})
    CHECK(parse_regression_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_regression_kind("l3"), ConfigError);
}
