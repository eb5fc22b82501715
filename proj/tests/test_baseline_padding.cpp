// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "padmod/baseline_padding.hpp"
#include "padmod/padding_module.hpp"
#include "test_util.hpp"

using namespace padmod;

namespace {

const Tensor<double> kTwo(Shape{2, 2}, {1, 2, 3, 4});

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

TEST_CASE("zero padding") {
  CHECK(pad_zero(kTwo, 1) == Tensor<double>(Shape{4, 4}, {0, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0}));
  CHECK(pad_zero(kTwo, 2).shape() == Shape{6, 6});
}

TEST_CASE("replicate padding") {
  CHECK(pad_replicate(kTwo, 1) ==
        Tensor<double>(Shape{4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto m = testutil::random_tensor<double>(rng, Shape{3 + rng.below(5), 3 + rng.below(5), 2});
    CHECK(pad_replicate(m, 2) == pad_replicate(pad_replicate(m, 1), 1));
  }
}

TEST_CASE("reflect padding") {
  CHECK(pad_reflect(kTwo, 1) ==
        Tensor<double>(Shape{4, 4}, {4, 3, 4, 3, 2, 1, 2, 1, 4, 3, 4, 3, 2, 1, 2, 1}));
  const auto m = testutil::m4();
  const auto r = pad_reflect(m, 2);
  CHECK(r(0, 0) == m(2, 2));
  CHECK(r(2, 0) == m(0, 2));
  CHECK(r(7, 7) == m(1, 1));
  CHECK_THROWS_AS(pad_reflect(kTwo, 2), std::invalid_argument);
}

TEST_CASE("mean-interpolation padding is the frozen module pipeline") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t c = 1 + rng.below(3), s = 1 + rng.below(3);
    const auto m = testutil::random_tensor<double>(rng, Shape{4 + rng.below(6), 4 + rng.below(6), c});
    PaddingModule<double> mod(c, ModuleOptions{s});
    mod.set_mode(Mode::eval);
    const auto a = pad_mean_interp(m, s);
    const auto b = mod.forward(m);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && testutil::same_bits(a.data()[i], b.data()[i]);
    CHECK(same);
  }
  CHECK(pad_mean_interp(Tensor<double>::filled(Shape{3, 3}, 5), 1)(0, 1) == 5.0);
}

TEST_CASE("every fixed method obeys the shape law") {
  Rng rng(7);
  for (PadKind k : {PadKind::zero, PadKind::reflect, PadKind::replicate, PadKind::mean_interp}) {
    for (std::size_t s = 1; s <= 3; ++s) {
      const auto m = testutil::random_tensor<float>(rng, Shape{5, 7, 3});
      CHECK(pad_fixed(m, PadMethod{k, s}).shape() == Shape{5 + 2 * s, 7 + 2 * s, 3});
    }
  }
  CHECK_THROWS_AS(pad_fixed(kTwo, PadMethod{PadKind::module, 1}), std::invalid_argument);
}

TEST_CASE("pad_adjoint is the transpose of the padding") {
  Rng rng(12);
  for (PadKind k : {PadKind::zero, PadKind::reflect, PadKind::replicate}) {
    for (int t = 0; t < 10; ++t) {
      const std::size_t s = 1 + rng.below(2);
      const Shape shape{3 + rng.below(4), 3 + rng.below(4), 2};
      const auto x = testutil::random_tensor<double>(rng, shape, -1, 1);
      const auto g = testutil::random_tensor<double>(rng, Shape{shape.height() + 2 * s, shape.width() + 2 * s, 2}, -1, 1);
      const PadMethod method{k, s};
      CHECK(dot(pad_fixed(x, method), g) == doctest::Approx(dot(x, pad_adjoint(g, method))).epsilon(1e-12));
    }
  }
  const auto g = Tensor<double>::filled(Shape{6, 6}, 1);
  CHECK(pad_adjoint(g, PadMethod{PadKind::mean_interp, 1}) == Tensor<double>::filled(Shape{4, 4}, 1));
  CHECK(pad_adjoint(g, PadMethod{PadKind::module, 1}) == Tensor<double>::filled(Shape{4, 4}, 1));
}

TEST_CASE("method names") {
  for (PadKind k : {PadKind::zero, PadKind::reflect, PadKind::replicate, PadKind::mean_interp, PadKind::module}) {
    CHECK(parse_pad_kind(to_string(k)) == k);
  }
  CHECK(parse_pad_kind("meaninterp") == PadKind::mean_interp);
  CHECK_THROWS_AS(parse_pad_kind("circular"), std::invalid_argument);
}
