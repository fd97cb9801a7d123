#include "sddkit/checks.hpp"

#include <cmath>

#include "sddkit/head.hpp"
#include "sddkit/kernels.hpp"
#include "sddkit/model.hpp"
#include "sddkit/nn.hpp"

namespace sddkit::nn {

namespace {

Tensor64 random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// keep values away from the leaky-relu kink so central differences stay clean
Tensor64 random_tensor_off_kink(std::vector<int> shape, Rng& rng) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.v) {
    v = rng.uniform(0.1, 1.0);
    if (rng.bernoulli(0.5)) v = -v;
  }
  return t;
}

std::vector<double> projection(size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

double project(const Tensor64& y, const std::vector<double>& w) {
  double s = 0;
  for (size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

Tensor64 as_grad(const std::vector<double>& w, const std::vector<int>& shape) {
  Tensor64 g(shape);
  std::copy(w.begin(), w.end(), g.v.begin());
  return g;
}

// conv over [input, weights] jointly, projected to a scalar
OpGradCheck check_conv(const std::string& name, int kernel, int stride, double tol,
                       uint64_t seed) {
  Rng rng(seed);
  Tensor64 x = random_tensor({2, 5, 5, 3}, rng);
  Conv2dT<double> conv;
  conv.build("c", 3, 4, kernel, stride, /*bias=*/true);
  for (auto& v : conv.w.value.v) v = rng.uniform(-0.5, 0.5);
  for (auto& v : conv.b.value.v) v = rng.uniform(-0.1, 0.1);

  Tensor64 y0 = conv.forward(x);
  const auto w = projection(y0.size(), rng);

  conv.w.grad.zero();
  conv.b.grad.zero();
  Tensor64 dx = conv.backward(as_grad(w, y0.shape));

  std::vector<double> flat(x.v.begin(), x.v.end());
  flat.insert(flat.end(), conv.w.value.v.begin(), conv.w.value.v.end());
  flat.insert(flat.end(), conv.b.value.v.begin(), conv.b.value.v.end());
  std::vector<double> analytic(dx.v.begin(), dx.v.end());
  analytic.insert(analytic.end(), conv.w.grad.v.begin(), conv.w.grad.v.end());
  analytic.insert(analytic.end(), conv.b.grad.v.begin(), conv.b.grad.v.end());

  const size_t nx = x.size(), nw = conv.w.value.size();
  auto f = [&, w](std::span<const double> v) {
    Tensor64 xi(x.shape);
    std::copy_n(v.begin(), nx, xi.v.begin());
    Conv2dT<double> c2 = conv;
    std::copy_n(v.begin() + static_cast<long>(nx), nw, c2.w.value.v.begin());
    std::copy_n(v.begin() + static_cast<long>(nx + nw), c2.b.value.size(),
                c2.b.value.v.begin());
    return project(c2.forward(xi), w);
  };
  return {name, gradcheck(f, flat, analytic, tol)};
}

OpGradCheck check_residual(double tol, uint64_t seed) {
  Rng rng(seed);
  ResidualUnitT<double> unit;
  unit.build("r", 2, NormMode::batch_norm);
  Rng wrng(seed + 1);
  for (ParamT<double>* p : [&] {
         std::vector<ParamT<double>*> ps;
         unit.params(ps);
         return ps;
       }())
    if (p->value.rank() == 4) xavier_fill(p->value, wrng);
  unit.reduce.norm.update_stats = false;
  unit.expand.norm.update_stats = false;

  Tensor64 x = random_tensor_off_kink({1, 4, 4, 2}, rng);
  Tensor64 y0 = unit.forward(x, Phase::train);
  const auto w = projection(y0.size(), rng);
  Tensor64 dx = unit.backward(as_grad(w, y0.shape));

  auto f = [&, w](std::span<const double> v) {
    Tensor64 xi(x.shape);
    std::copy(v.begin(), v.end(), xi.v.begin());
    ResidualUnitT<double> u2 = unit;
    return project(u2.forward(xi, Phase::train), w);
  };
  return {"residual_unit", gradcheck(f, x.v, dx.v, tol)};
}

// Both norms in train phase over [x, gamma, beta]. For batch renorm, r and d
// are evaluated at the base point and held fixed, matching their
// treated-as-constants backward semantics.
OpGradCheck check_norm(NormMode mode, double tol, uint64_t seed) {
  Rng rng(seed);
  const int C = 3;
  Tensor64 x = random_tensor({4, 3, 3, C}, rng);
  NormT<double> norm;
  norm.build("n", C, mode);
  norm.update_stats = false;
  for (int c = 0; c < C; ++c) {
    norm.gamma.value[static_cast<size_t>(c)] = rng.uniform(0.5, 1.5);
    norm.beta.value[static_cast<size_t>(c)] = rng.uniform(-0.5, 0.5);
    // moving stats close enough to the batch stats that r and d sit strictly
    // inside their clipping intervals
    norm.moving_mean[static_cast<size_t>(c)] = rng.uniform(-0.05, 0.05);
    norm.moving_var[static_cast<size_t>(c)] = rng.uniform(0.25, 0.45);
  }

  Tensor64 y0 = norm.forward(x, Phase::train);
  const auto w = projection(y0.size(), rng);
  norm.gamma.grad.zero();
  norm.beta.grad.zero();
  Tensor64 dx = norm.backward(as_grad(w, y0.shape));

  const std::vector<double> r0 = norm.r_;
  const std::vector<double> d0 = norm.d_;

  std::vector<double> flat(x.v.begin(), x.v.end());
  flat.insert(flat.end(), norm.gamma.value.v.begin(), norm.gamma.value.v.end());
  flat.insert(flat.end(), norm.beta.value.v.begin(), norm.beta.value.v.end());
  std::vector<double> analytic(dx.v.begin(), dx.v.end());
  analytic.insert(analytic.end(), norm.gamma.grad.v.begin(), norm.gamma.grad.v.end());
  analytic.insert(analytic.end(), norm.beta.grad.v.begin(), norm.beta.grad.v.end());

  const size_t nx = x.size();
  auto f = [&, w, r0, d0](std::span<const double> v) {
    Tensor64 xi(x.shape);
    std::copy_n(v.begin(), nx, xi.v.begin());
    std::vector<double> mean, var;
    kernels::channel_moments(xi, mean, var);
    double out = 0;
    const size_t rows = xi.size() / C;
    for (size_t i = 0; i < rows; ++i)
      for (int c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + norm.eps);
        const double n = (xi[i * C + static_cast<size_t>(c)] - mean[static_cast<size_t>(c)]) * inv;
        const double gamma = v[nx + static_cast<size_t>(c)];
        const double beta = v[nx + C + static_cast<size_t>(c)];
        out += w[i * C + static_cast<size_t>(c)] *
               (gamma * (n * r0[static_cast<size_t>(c)] + d0[static_cast<size_t>(c)]) + beta);
      }
    return out;
  };
  return {mode == NormMode::batch_norm ? "batchnorm_train" : "batchrenorm_train",
          gradcheck(f, flat, analytic, tol)};
}

OpGradCheck check_leaky(double tol, uint64_t seed) {
  Rng rng(seed);
  Tensor64 x = random_tensor_off_kink({2, 4, 4, 3}, rng);
  LeakyReluT<double> act;
  Tensor64 y0 = act.forward(x);
  const auto w = projection(y0.size(), rng);
  Tensor64 dx = act.backward(as_grad(w, y0.shape));
  auto f = [&, w](std::span<const double> v) {
    double s = 0;
    for (size_t i = 0; i < v.size(); ++i) s += w[i] * leaky_relu(v[i], 0.1);
    return s;
  };
  return {"leaky_relu", gradcheck(f, x.v, dx.v, tol)};
}

OpGradCheck check_sigmoid(double tol, uint64_t seed) {
  Rng rng(seed);
  Tensor64 x = random_tensor({1, 1, 1, 16}, rng, -3.0, 3.0);
  const auto w = projection(x.size(), rng);
  std::vector<double> analytic(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double y = sigmoid(x[i]);
    analytic[i] = w[i] * y * (1.0 - y);
  }
  auto f = [&, w](std::span<const double> v) {
    double s = 0;
    for (size_t i = 0; i < v.size(); ++i) s += w[i] * sigmoid(v[i]);
    return s;
  };
  return {"sigmoid", gradcheck(f, x.v, analytic, tol)};
}

OpGradCheck check_softmax(double tol, uint64_t seed) {
  Rng rng(seed);
  const int C = 6;
  Tensor64 x = random_tensor({1, 1, 1, C}, rng, -2.0, 2.0);
  const auto w = projection(x.size(), rng);

  std::vector<double> p(x.v.begin(), x.v.end());
  softmax_span(p.data(), C);
  std::vector<double> analytic(static_cast<size_t>(C), 0.0);
  double wp = 0;
  for (int i = 0; i < C; ++i) wp += w[static_cast<size_t>(i)] * p[static_cast<size_t>(i)];
  for (int i = 0; i < C; ++i)
    analytic[static_cast<size_t>(i)] = p[static_cast<size_t>(i)] * (w[static_cast<size_t>(i)] - wp);

  auto f = [&, w](std::span<const double> v) {
    std::vector<double> q(v.begin(), v.end());
    softmax_span(q.data(), C);
    double s = 0;
    for (int i = 0; i < C; ++i) s += w[static_cast<size_t>(i)] * q[static_cast<size_t>(i)];
    return s;
  };
  return {"softmax", gradcheck(f, x.v, analytic, tol)};
}

OpGradCheck check_focal_sigmoid(double tol, uint64_t seed) {
  Rng rng(seed);
  const size_t n = 24;
  std::vector<double> logits(n);
  std::vector<int> targets(n);
  for (size_t i = 0; i < n; ++i) {
    logits[i] = rng.uniform(-3.0, 3.0);
    targets[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  const double gamma = 2.0;
  std::vector<double> analytic(n);
  for (size_t i = 0; i < n; ++i) {
    const double y = sigmoid(logits[i]);
    analytic[i] = focal_sigmoid_dy(y, targets[i], gamma) * y * (1.0 - y);
  }
  auto f = [&](std::span<const double> v) {
    double s = 0;
    for (size_t i = 0; i < n; ++i)
      s += focal_sigmoid_loss(sigmoid(v[i]), targets[i], gamma);
    return s;
  };
  return {"focal_sigmoid", gradcheck(f, logits, analytic, tol)};
}

OpGradCheck check_focal_softmax(double tol, uint64_t seed) {
  Rng rng(seed);
  const int C = 5;
  std::vector<double> logits(static_cast<size_t>(C));
  for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
  const int truth = rng.uniform_int(C);
  const double gamma = 2.0;

  std::vector<double> p = logits;
  softmax_span(p.data(), C);
  const double dpt = focal_softmax_dp(p[static_cast<size_t>(truth)], gamma);
  std::vector<double> analytic(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    const double delta = c == truth ? 1.0 : 0.0;
    analytic[static_cast<size_t>(c)] =
        dpt * p[static_cast<size_t>(truth)] * (delta - p[static_cast<size_t>(c)]);
  }
  auto f = [&](std::span<const double> v) {
    std::vector<double> q(v.begin(), v.end());
    softmax_span(q.data(), C);
    return focal_softmax_loss(q[static_cast<size_t>(truth)], gamma);
  };
  return {"focal_softmax", gradcheck(f, logits, analytic, tol)};
}

OpGradCheck check_sum_squared(double tol, uint64_t seed) {
  Rng rng(seed);
  Tensor64 pred = random_tensor({2, 3, 3, 2}, rng);
  Tensor64 target = random_tensor({2, 3, 3, 2}, rng);
  Tensor64 g = sum_squared_grad(pred, target);
  auto f = [&](std::span<const double> v) {
    Tensor64 p(pred.shape);
    std::copy(v.begin(), v.end(), p.v.begin());
    return sum_squared_loss(p, target);
  };
  // quadratic: central differences are exact to roundoff
  return {"sum_squared", gradcheck(f, pred.v, g.v, std::min(tol, 1e-8))};
}

// Composite detector loss on a 2-image batch, differentiated through every
// parameter (sampled coordinates). Batch-norm mode so the numeric probe sees
// the same function the backward pass implements.
OpGradCheck check_composed_loss(double tol, uint64_t seed) {
  Rng rng(seed);
  ModelConfig mcfg;
  mcfg.num_classes = 3;
  mcfg.width_mult = 1;
  mcfg.norm_mode = NormMode::batch_norm;
  auto model = build_toy_detector<double>(mcfg);
  xavier_init(model, seed);
  model.set_update_stats(false);

  const int size = 32;
  Tensor64 images = random_tensor({2, size, size, 3}, rng, 0.0, 1.0);

  AnchorSet anchors;
  anchors.anchors = {{4, 3}, {6, 7}, {9, 5}, {11, 12}, {18, 10}, {14, 19},
                     {24, 20}, {22, 30}, {30, 28}};
  anchors.levels = assign_scales(anchors.anchors);
  std::vector<std::vector<ObjectLabel>> labels(2);
  labels[0] = {{0, {4.2, 5.1, 12.8, 11.3}}, {2, {15.0, 14.2, 28.9, 27.5}}};
  labels[1] = {{1, {8.5, 3.3, 14.1, 20.2}}};

  TargetSetT<double> targets = build_targets<double>(
      labels, anchors, size, grid_shapes_for(size), 0.5);
  HeadConfig hcfg;
  hcfg.gamma = 2.0;

  auto params = model.params();
  std::vector<double> flat;
  for (auto* p : params) flat.insert(flat.end(), p->value.v.begin(), p->value.v.end());

  zero_grads(params);
  auto grids = model.forward(images, Phase::train);
  std::array<Tensor64, 3> dgrids;
  total_loss(grids, targets, hcfg, &dgrids);
  model.backward(dgrids);
  std::vector<double> analytic;
  for (auto* p : params) analytic.insert(analytic.end(), p->grad.v.begin(), p->grad.v.end());

  auto f = [&](std::span<const double> v) {
    auto m2 = model;
    size_t at = 0;
    for (auto* p : m2.params()) {
      std::copy_n(v.begin() + static_cast<long>(at), p->value.size(), p->value.v.begin());
      at += p->value.size();
    }
    auto g = m2.forward(images, Phase::train);
    return total_loss(g, targets, hcfg).total;
  };
  // step 1e-6: at 1e-5 the 3-point stencil's truncation error (which scales
  // as h^2 through this depth of composition) exceeds the 1e-5 tolerance
  return {"composed_head_loss", gradcheck(f, flat, analytic, tol, 1e-6, 160, seed)};
}

}  // namespace

std::vector<OpGradCheck> run_gradient_suite(double tol, uint64_t seed) {
  std::vector<OpGradCheck> out;
  out.push_back(check_conv("conv1x1", 1, 1, tol, seed));
  out.push_back(check_conv("conv3x3", 3, 1, tol, seed + 1));
  out.push_back(check_conv("conv3x3_stride2", 3, 2, tol, seed + 2));
  out.push_back(check_residual(tol, seed + 3));
  out.push_back(check_norm(NormMode::batch_norm, tol, seed + 4));
  out.push_back(check_norm(NormMode::batch_renorm, tol, seed + 5));
  out.push_back(check_leaky(tol, seed + 6));
  out.push_back(check_sigmoid(tol, seed + 7));
  out.push_back(check_softmax(tol, seed + 8));
  out.push_back(check_focal_sigmoid(tol, seed + 9));
  out.push_back(check_focal_softmax(tol, seed + 10));
  out.push_back(check_sum_squared(tol, seed + 11));
  out.push_back(check_composed_loss(tol, seed + 12));
  return out;
}

bool suite_passed(const std::vector<OpGradCheck>& results) {
  for (const auto& r : results)
    if (!r.report.pass) return false;
  return true;
}

}  // namespace sddkit::nn
