// SPDX-License-Identifier: Apache-2.0

#include "padmod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "padmod/nn.hpp"
#include "padmod/padding_module.hpp"
#include "padmod/rng.hpp"

namespace padmod {

double gradient_rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
  return std::abs(analytic - numeric) / scale;
}

void GradCheckReport::merge(const GradCheckReport& other, std::size_t index_offset) {
  checked += other.checked;
  failures += other.failures;
  if (other.max_rel_error > max_rel_error || checked == other.checked) {
    max_rel_error = other.max_rel_error;
    worst_index = other.worst_index + index_offset;
    worst_analytic = other.worst_analytic;
    worst_numeric = other.worst_numeric;
  }
}

GradCheckReport finite_diff_check(const ScalarFn& fn, std::span<const double> params,
                                  std::span<const double> analytic, double tol, double step) {
  if (params.size() != analytic.size()) throw std::invalid_argument("finite_diff_check: size mismatch");
  GradCheckReport r;
  std::vector<double> p(params.begin(), params.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = fn(p);
    p[i] = orig - step;
    const double down = fn(p);
    p[i] = orig;
    const double numeric = (up - down) / (2 * step);
    const double err = gradient_rel_error(analytic[i], numeric);
    ++r.checked;
    if (!(err <= tol)) ++r.failures;
    if (err > r.max_rel_error || i == 0) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.worst_analytic = analytic[i];
      r.worst_numeric = numeric;
    }
  }
  return r;
}

namespace {

std::string describe(const GradCheckReport& r, const std::string& where) {
  std::ostringstream os;
  os.precision(10);
  os << where << " component " << r.worst_index << ": analytic " << r.worst_analytic << ", numeric "
     << r.worst_numeric << ", rel err " << r.max_rel_error;
  return os.str();
}

void fold(SuiteResult& suite, const GradCheckReport& r, const std::string& where) {
  const double before = suite.report.checked == 0 ? -1 : suite.report.max_rel_error;
  suite.report.merge(r);
  if (r.max_rel_error > before) suite.worst_case = describe(r, where);
}

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values in (-1, 1) that stay far from zero and from each other, so ReLU
// kinks and max-pool ties are not straddled by the finite-difference step.
Tensor<double> spaced_tensor(Rng& rng, Shape shape) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  const std::size_t n = t.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  rng.shuffle(rank);
  for (std::size_t i = 0; i < n; ++i) {
    const double base = (static_cast<double>(rank[i]) + 0.5) / static_cast<double>(n);  // (0, 1)
    t.data()[i] = (2 * base - 1) + (rng.uniform() - 0.5) * 0.2 / static_cast<double>(n);
    if (std::abs(t.data()[i]) < 1e-2) t.data()[i] += 0.05;
  }
  return t;
}

double dot(const Batch<double>& a, const Batch<double>& b) {
  double s = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t i = 0; i < a[n].size(); ++i) s += a[n].data()[i] * b[n].data()[i];
  }
  return s;
}

std::vector<double> flatten(const Batch<double>& b) {
  std::vector<double> out;
  for (const auto& t : b) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

Batch<double> unflatten(std::span<const double> v, const Batch<double>& like) {
  Batch<double> out;
  std::size_t off = 0;
  for (const auto& t : like) {
    out.emplace_back(t.shape(), std::vector<double>(v.begin() + off, v.begin() + off + t.size()));
    off += t.size();
  }
  return out;
}

// Checks d(sum(proj * layer(x)))/dx and /dparams for one layer.
void check_layer(SuiteResult& suite, Layer<double>& layer, const Batch<double>& x, Rng& rng, double tol,
                 const std::string& where) {
  Batch<double> y = layer.forward(x, true);
  Batch<double> proj;
  for (const auto& t : y) proj.push_back(random_tensor(rng, t.shape(), -1, 1));
  for (Param<double>* p : layer.params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  const std::vector<double> dx = flatten(layer.backward(proj));

  const std::vector<double> x0 = flatten(x);
  auto fx = [&](std::span<const double> v) { return dot(layer.forward(unflatten(v, x), true), proj); };
  fold(suite, finite_diff_check(fx, x0, dx, tol), where + " d/dinput");

  for (Param<double>* p : layer.params()) {
    const std::vector<double> analytic = p->grad;
    const std::vector<double> v0 = p->value;
    auto fp = [&](std::span<const double> v) {
      std::copy(v.begin(), v.end(), p->value.begin());
      const double out = dot(layer.forward(x, true), proj);
      std::copy(v0.begin(), v0.end(), p->value.begin());
      return out;
    };
    fold(suite, finite_diff_check(fp, v0, analytic, tol), where + " d/dparam");
  }
}

}  // namespace

SuiteResult run_module_gradient_suite(std::size_t trials, double tol, std::uint64_t seed) {
  SuiteResult suite{"module local loss", {}, {}};
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t h = 4 + rng.below(5), w = 4 + rng.below(5);
    const Tensor<double> plane = random_tensor(rng, Shape{h, w}, 0, 1);
    const Filter3<double> theta{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto target = extract_target(plane);
    const auto predictor = build_predictor(extract_neighbors(plane));
    const auto g = local_mse_grad(theta, predictor, target);
    auto fn = [&](std::span<const double> v) {
      return local_mse(Filter3<double>{v[0], v[1], v[2]}, predictor, target);
    };
    const std::array<double, 3> th{theta[0], theta[1], theta[2]};
    fold(suite, finite_diff_check(fn, th, g, tol),
         "trial " + std::to_string(t) + " (" + std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  return suite;
}

std::vector<SuiteResult> run_layer_gradient_suites(std::size_t trials, double tol, std::uint64_t seed) {
  const std::size_t cases = std::max<std::size_t>(1, trials / 20);
  Rng rng(seed ^ 0xC0FFEEULL);
  std::vector<SuiteResult> out;

  SuiteResult conv{"conv2d", {}, {}};
  const PadKind pads[] = {PadKind::zero, PadKind::reflect, PadKind::replicate};
  for (std::size_t c = 0; c < cases; ++c) {
    for (PadKind pk : pads) {
      for (std::size_t k : {std::size_t{1}, std::size_t{3}}) {
        const std::size_t h = 3 + rng.below(4), w = 3 + rng.below(4);
        const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(3);
        Conv2D<double> layer(k, cin, cout, pk);
        layer.init(rng);
        for (double& b : layer.bias().value) b = rng.uniform(-0.5, 0.5);
        Batch<double> x{random_tensor(rng, Shape{h, w, cin}, -1, 1), random_tensor(rng, Shape{h, w, cin}, -1, 1)};
        check_layer(conv, layer, x, rng, tol, "conv k=" + std::to_string(k) + " pad=" + to_string(pk));
      }
    }
  }
  out.push_back(std::move(conv));

  SuiteResult dense{"dense", {}, {}};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t h = 1 + rng.below(3), w = 1 + rng.below(3), ch = 1 + rng.below(3), o = 1 + rng.below(5);
    Dense<double> layer(h * w * ch, o);
    layer.init(rng);
    for (double& b : layer.bias().value) b = rng.uniform(-0.5, 0.5);
    Batch<double> x{random_tensor(rng, Shape{h, w, ch}, -1, 1), random_tensor(rng, Shape{h, w, ch}, -1, 1)};
    check_layer(dense, layer, x, rng, tol, "dense");
  }
  out.push_back(std::move(dense));

  SuiteResult act{"relu+maxpool", {}, {}};
  for (std::size_t c = 0; c < cases; ++c) {
    const Shape s{2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)), 1 + rng.below(3)};
    ReLU<double> relu;
    check_layer(act, relu, Batch<double>{spaced_tensor(rng, s)}, rng, tol, "relu");
    MaxPool2x2<double> pool;
    check_layer(act, pool, Batch<double>{spaced_tensor(rng, s), spaced_tensor(rng, s)}, rng, tol, "maxpool");
  }
  out.push_back(std::move(act));

  SuiteResult xent{"softmax_xent", {}, {}};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t k = 2 + rng.below(9);
    Batch<double> z{random_tensor(rng, Shape{1, k}, -3, 3), random_tensor(rng, Shape{1, k}, -3, 3)};
    const std::vector<int> labels{static_cast<int>(rng.below(k)), static_cast<int>(rng.below(k))};
    const auto r = softmax_xent(z, std::span<const int>(labels));
    auto fn = [&](std::span<const double> v) { return softmax_xent(unflatten(v, z), std::span<const int>(labels)).loss; };
    fold(xent, finite_diff_check(fn, flatten(z), flatten(r.dlogits), tol), "softmax_xent k=" + std::to_string(k));
  }
  out.push_back(std::move(xent));
  return out;
}

}  // namespace padmod
