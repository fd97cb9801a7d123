#include <doctest.h>

#include <cmath>

#include "sddkit/checks.hpp"
#include "sddkit/gradcheck.hpp"
#include "sddkit/nn.hpp"

using namespace sddkit;
using namespace sddkit::nn;

TEST_CASE("activation values") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(leaky_relu(-1.0, 0.1) == doctest::Approx(-0.1));
  CHECK(leaky_relu(2.0, 0.1) == doctest::Approx(2.0));

  Tensor64 t({1, 1, 1, 5});
  std::fill(t.v.begin(), t.v.end(), 0.7);
  softmax_lastdim(t);
  for (double v : t.v) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("softmax sums to one and is monotone in each logit") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor64 t({1, 1, 1, 7});
    for (auto& v : t.v) v = rng.uniform(-5, 5);
    Tensor64 bumped = t;
    const int j = rng.uniform_int(7);
    bumped[static_cast<size_t>(j)] += 0.25;

    Tensor64 p = t, pb = bumped;
    softmax_lastdim(p);
    softmax_lastdim(pb);
    double sum = 0;
    for (double v : p.v) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(pb[static_cast<size_t>(j)] > p[static_cast<size_t>(j)]);
  }
}

TEST_CASE("batch normalization of {1,2,3}") {
  NormT<double> norm;
  norm.build("n", 1, NormMode::batch_norm);
  norm.eps = 0;
  Tensor64 x({3, 1, 1, 1});
  x.v = {1, 2, 3};
  Tensor64 y = norm.forward(x, Phase::train);
  CHECK(y[0] == doctest::Approx(-1.22474).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(1.22474).epsilon(1e-5));

  // affine follow-up: gamma 2, beta 1
  NormT<double> affine;
  affine.build("n", 1, NormMode::batch_norm);
  affine.eps = 0;
  affine.gamma.value[0] = 2;
  affine.beta.value[0] = 1;
  Tensor64 y2 = affine.forward(x, Phase::train);
  for (size_t i = 0; i < 3; ++i) CHECK(y2[i] == doctest::Approx(y[i] * 2 + 1));
}

TEST_CASE("inference with unit moving stats is the identity") {
  NormT<double> norm;
  norm.build("n", 2, NormMode::batch_norm);
  norm.eps = 0;
  Tensor64 x({2, 2, 1, 2});
  Rng rng(5);
  for (auto& v : x.v) v = rng.uniform(-2, 2);
  Tensor64 y = norm.forward(x, Phase::infer);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("train-phase normalization has zero mean and unit variance per channel") {
  NormT<float> norm;
  norm.build("n", 3, NormMode::batch_norm);
  Rng rng(6);
  Tensor x({4, 5, 5, 3});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-3, 7));
  Tensor y = norm.forward(x, Phase::train);
  const size_t m = y.size() / 3;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (size_t i = 0; i < m; ++i) mean += y[i * 3 + static_cast<size_t>(c)];
    mean /= static_cast<double>(m);
    for (size_t i = 0; i < m; ++i) {
      const double d = y[i * 3 + static_cast<size_t>(c)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);  // eps shifts variance slightly
  }
}

TEST_CASE("renorm equals batch norm when moving stats match the batch") {
  Rng rng(7);
  Tensor x({4, 3, 3, 2});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));

  std::vector<float> mean, var;
  kernels::channel_moments(x, mean, var);

  NormT<float> bn, br;
  bn.build("n", 2, NormMode::batch_norm);
  br.build("n", 2, NormMode::batch_renorm);
  for (int c = 0; c < 2; ++c) {
    br.moving_mean[static_cast<size_t>(c)] = mean[static_cast<size_t>(c)];
    br.moving_var[static_cast<size_t>(c)] = var[static_cast<size_t>(c)];
  }
  Tensor yb = bn.forward(x, Phase::train);
  Tensor yr = br.forward(x, Phase::train);
  CHECK(yb.v == yr.v);  // same code path, bitwise
  CHECK(br.r_[0] == doctest::Approx(1.0));
  CHECK(br.d_[0] == doctest::Approx(0.0));
}

TEST_CASE("renorm clips the correction ratio") {
  Tensor x({4, 2, 2, 1});
  Rng rng(8);
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> mean, var;
  kernels::channel_moments(x, mean, var);

  NormT<float> br;
  br.build("n", 1, NormMode::batch_renorm);
  br.moving_mean[0] = mean[0];
  br.moving_var[0] = (var[0] + br.eps) / 9.0f - br.eps;  // sigma_b / sigma = 3
  br.forward(x, Phase::train);
  CHECK(br.r_[0] == doctest::Approx(1.5));
}

TEST_CASE("renorm train and inference outputs converge with the moving stats") {
  Rng rng(9);
  Tensor x({2, 4, 4, 3});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-2, 2));

  NormT<float> br;
  br.build("n", 3, NormMode::batch_renorm);
  br.momentum = 0.1f;
  for (int i = 0; i < 400; ++i) br.forward(x, Phase::train);

  Tensor y_train = br.forward(x, Phase::train);
  Tensor y_infer = br.forward(x, Phase::infer);
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(y_train[i] - y_infer[i]) < 1e-4);
}

TEST_CASE("focal loss values and the gamma = 0 equivalence") {
  CHECK(focal_sigmoid_loss(0.9, 1, 2.0) == doctest::Approx(1.0536e-3).epsilon(1e-4));
  CHECK(std::abs(focal_sigmoid_loss(0.9, 1, 2.0) - 0.01 * -std::log(0.9)) < 1e-7);
  CHECK(focal_sigmoid_loss(0.2, 0, 2.0) == doctest::Approx(8.9257e-3).epsilon(1e-4));

  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const double y = rng.uniform(1e-6, 1 - 1e-6);
    const int t = rng.bernoulli(0.5) ? 1 : 0;
    const double ce = t == 1 ? -std::log(y) : -std::log(1 - y);
    CHECK(std::abs(focal_sigmoid_loss(y, t, 0.0) - ce) < 1e-12);
    // the modulating factor only shrinks the loss
    CHECK(focal_sigmoid_loss(y, t, 2.0) <= ce + 1e-12);
  }
}

TEST_CASE("softmax focal loss values") {
  CHECK(focal_softmax_loss(1.0, 2.0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(focal_softmax_loss(0.5, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-5));
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(1e-6, 1 - 1e-6);
    CHECK(std::abs(focal_softmax_loss(p, 0.0) + std::log(p)) < 1e-12);
  }
}

TEST_CASE("sum squared loss and gradient") {
  Tensor64 a({2, 1, 1, 2}), b({2, 1, 1, 2});
  a.v = {1, 2, 3, 4};
  b.v = {1, 2, 3, 4};
  CHECK(sum_squared_loss(a, b) == doctest::Approx(0.0));
  b.v = {0, 2, 3, 4};
  CHECK(sum_squared_loss(a, b) == doctest::Approx(1.0));
  const auto g = sum_squared_grad(a, b);
  CHECK(g[0] == doctest::Approx(2.0));
  Tensor64 c({1, 1, 1, 3});
  CHECK_THROWS_AS(sum_squared_loss(a, c), Error);
}

TEST_CASE("adam steps") {
  ParamT<double> p;
  p.build("w", {4}, 0.0);
  p.value.v = {1.0, -2.0, 0.5, -0.25};
  std::vector<ParamT<double>*> params = {&p};
  AdamState st;

  SUBCASE("zero grad, zero decay leaves params alone") {
    adam_step(params, st, 0.01);
    CHECK(p.value.v == std::vector<double>{1.0, -2.0, 0.5, -0.25});
  }

  SUBCASE("first step moves by about lr in the gradient sign") {
    p.grad.v = {0.3, -0.7, 0.001, 2.0};
    const auto before = p.value.v;
    adam_step(params, st, 0.01);
    for (size_t i = 0; i < 4; ++i) {
      const double step = p.value[i] - before[i];
      const double sign = p.grad[i] > 0 ? 1.0 : -1.0;
      CHECK(step == doctest::Approx(-0.01 * sign).epsilon(1e-3));
    }
  }

  SUBCASE("decay alone shrinks weights toward zero") {
    adam_step(params, st, 0.01, 0.9, 0.999, 1e-8, 1e-4);
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-2));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-2));
  }

  SUBCASE("decay-exempt params ignore weight decay") {
    p.decay_exempt = true;
    adam_step(params, st, 0.01, 0.9, 0.999, 1e-8, 1e-4);
    CHECK(p.value.v == std::vector<double>{1.0, -2.0, 0.5, -0.25});
  }
}

TEST_CASE("xavier bound for a 3x3 8-to-8 conv") {
  TensorT<double> w({3, 3, 8, 8});
  Rng rng(12);
  xavier_fill(w, rng);
  const double bound = std::sqrt(6.0 / 144.0);
  CHECK(bound == doctest::Approx(0.2041).epsilon(1e-3));
  double mean = 0, amax = 0;
  for (double v : w.v) {
    mean += v;
    amax = std::max(amax, std::abs(v));
  }
  mean /= static_cast<double>(w.size());
  CHECK(std::abs(mean) < 0.02);
  CHECK(amax <= bound);
  CHECK(amax > bound * 0.8);  // actually fills the range
}

TEST_CASE("gradcheck flags corrupted gradients and non-finite functions") {
  // f(x) = sum x^2, correct grad 2x, corrupted grad 4x
  std::vector<double> x = {0.5, -1.25, 2.0};
  std::vector<double> good = {1.0, -2.5, 4.0};
  std::vector<double> bad = {2.0, -5.0, 8.0};
  auto f = [](std::span<const double> v) {
    double s = 0;
    for (double a : v) s += a * a;
    return s;
  };
  CHECK(gradcheck(f, x, good, 1e-8).pass);
  const auto rep = gradcheck(f, x, bad, 1e-5);
  CHECK_FALSE(rep.pass);

  auto nan_f = [](std::span<const double>) { return std::nan(""); };
  const auto nan_rep = gradcheck(nan_f, x, good, 1e-5);
  CHECK_FALSE(nan_rep.pass);
  CHECK_FALSE(nan_rep.finite);
}

TEST_CASE("gradient suite passes at 1e-5") {
  const auto results = run_gradient_suite(1e-5);
  for (const auto& r : results) {
    CAPTURE(r.name);
    CAPTURE(r.report.max_rel_err);
    CHECK(r.report.pass);
  }
}
