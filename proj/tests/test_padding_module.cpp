// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <sstream>

#include "padmod/baseline_padding.hpp"
#include "padmod/gradcheck.hpp"
#include "padmod/padding_module.hpp"
#include "test_util.hpp"

using namespace padmod;
using testutil::m4;

namespace {

const Filter3<double> kIdentity{0, 1, 0};
const Filter3<double> kThird{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

PaddingModule<double> module_with(const Filter3<double>& theta, std::size_t channels, std::size_t size) {
  return PaddingModule<double>(FilterBank<double>(std::vector<Filter3<double>>(channels, theta)), size);
}

// Mean local MSE of `filters` over a batch, computed straight from the planes.
double batch_mse(const FilterBank<float>& filters, const std::vector<LabeledImage>& images) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& img : images) {
    for (std::size_t c = 0; c < 3; ++c) {
      const auto plane = channel_plane(img.pixels, c);
      sum += local_mse(filters, build_predictor(extract_neighbors(plane)), extract_target(plane), c);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("extract_target takes the four borders") {
  const auto t = extract_target(m4());
  CHECK(t.rows[kTop] == RowVec<double>{1, 2, 3, 4});
  CHECK(t.rows[kBottom] == RowVec<double>{13, 14, 15, 16});
  CHECK(t.rows[kLeft] == RowVec<double>{1, 5, 9, 13});
  CHECK(t.rows[kRight] == RowVec<double>{4, 8, 12, 16});

  const auto c = extract_target(Tensor<double>::filled(Shape{4, 4}, 5));
  for (const auto& r : c.rows) CHECK(r == RowVec<double>{5, 5, 5, 5});

  CHECK_THROWS_AS(extract_target(Tensor<double>::zeros(Shape{3, 4})), std::invalid_argument);
}

TEST_CASE("extract_neighbors excludes the corner overlap") {
  const auto n = extract_neighbors(m4());
  CHECK(n.rows[kTop] == RowVec<double>{6, 7});
  CHECK(n.rows[kBottom] == RowVec<double>{10, 11});
  CHECK(n.rows[kLeft] == RowVec<double>{6, 10});
  CHECK(n.rows[kRight] == RowVec<double>{7, 11});

  for (const auto& r : extract_neighbors(Tensor<double>::filled(Shape{4, 4}, 5)).rows) {
    CHECK(r == RowVec<double>{5, 5});
  }
  CHECK(extract_neighbors(Tensor<double>::zeros(Shape{5, 5})).lengths() == std::array<std::size_t, 4>{3, 3, 3, 3});
  CHECK(extract_neighbors(Tensor<double>::zeros(Shape{4, 7})).lengths() == std::array<std::size_t, 4>{5, 5, 2, 2});
  CHECK_THROWS_AS(extract_neighbors(Tensor<double>::zeros(Shape{4, 3})), std::invalid_argument);
}

TEST_CASE("extract_borders works down to 2x2") {
  CHECK(extract_borders(m4()) == extract_target(m4()));
  for (const auto& r : extract_borders(Tensor<double>::filled(Shape{3, 3}, 5)).rows) {
    CHECK(r == RowVec<double>{5, 5, 5});
  }
  const auto b = extract_borders(Tensor<double>(Shape{2, 2}, {1, 2, 3, 4}));
  CHECK(b.rows[kTop] == RowVec<double>{1, 2});
  CHECK(b.rows[kBottom] == RowVec<double>{3, 4});
  CHECK(b.rows[kLeft] == RowVec<double>{1, 3});
  CHECK(b.rows[kRight] == RowVec<double>{2, 4});
  CHECK_THROWS_AS(extract_borders(Tensor<double>::zeros(Shape{1, 5})), std::invalid_argument);
}

TEST_CASE("build_predictor reflects then zero pads every row") {
  const auto p = build_predictor(extract_neighbors(m4()));
  CHECK(p.rows[kTop] == RowVec<double>{0, 7, 6, 7, 6, 0});
  CHECK(p.rows[kBottom] == RowVec<double>{0, 11, 10, 11, 10, 0});
  CHECK(p.rows[kLeft] == RowVec<double>{0, 10, 6, 10, 6, 0});
  CHECK(p.rows[kRight] == RowVec<double>{0, 11, 7, 11, 7, 0});

  BorderBundle<double> five({RowVec<double>{5, 5, 5}, {5, 5, 5}, {5, 5, 5}, {5, 5, 5}});
  CHECK(build_predictor(five).rows[0] == RowVec<double>{0, 5, 5, 5, 5, 5, 0});

  CHECK(p.lengths() == std::array<std::size_t, 4>{6, 6, 6, 6});
  CHECK_THROWS_AS(build_predictor(BorderBundle<double>({RowVec<double>{1}, {1}, {1, 2}, {1, 2}})),
                  std::invalid_argument);
}

TEST_CASE("predict_borders is a valid 1x3 correlation") {
  PredictorBundle<double> p;
  for (auto& r : p.rows) r = {0, 7, 6, 7, 6, 0};
  CHECK(predict_borders(kIdentity, p).rows[0] == RowVec<double>{7, 6, 7, 6});

  const auto mean = predict_borders(kThird, p).rows[0];
  const RowVec<double> expected{13.0 / 3, 20.0 / 3, 19.0 / 3, 13.0 / 3};
  REQUIRE(mean.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(mean[j] == doctest::Approx(expected[j]).epsilon(1e-15));

  const auto zero = predict_borders(Filter3<double>{0, 0, 0}, p);
  for (double v : zero.rows[2]) CHECK(v == 0);

  FilterBank<double> bank(2);
  CHECK_THROWS_AS(predict_borders(bank, p, 2), std::out_of_range);
}

TEST_CASE("assemble_padded averages the corners") {
  const auto m = Tensor<double>::filled(Shape{3, 3}, 5);

  const auto identity = assemble_padded(m, predict_borders(kIdentity, build_predictor(extract_borders(m))));
  CHECK(identity == Tensor<double>::filled(Shape{5, 5}, 5));

  const auto mean = assemble_padded(m, predict_borders(kThird, build_predictor(extract_borders(m))));
  // Hand evaluation of the end windows [0, 5, 5] and interior windows [5, 5, 5].
  const double t = 1.0 / 3.0;
  const double end = t * 0.0 + t * 5.0 + t * 5.0;
  const double mid = t * 5.0 + t * 5.0 + t * 5.0;
  const double corner = (end + end) / 2.0;
  CHECK(mid == 5.0);
  CHECK(testutil::same_bits(mean(0, 0), corner));
  CHECK(testutil::same_bits(mean(4, 4), corner));
  CHECK(testutil::same_bits(mean(0, 1), mid));
  CHECK(testutil::same_bits(mean(1, 0), mid));
  CHECK(testutil::same_bits(mean(0, 4), corner));
  CHECK(mean(0, 0) == doctest::Approx(10.0 / 3.0).epsilon(1e-15));
  CHECK(interior(mean, 1) == m);

  CHECK_THROWS_AS(assemble_padded(m, BorderBundle<double>({RowVec<double>(4), RowVec<double>(4), RowVec<double>(5),
                                                          RowVec<double>(5)})),
                  std::invalid_argument);
}

TEST_CASE("corners of a rectangular plane use two contributions") {
  const auto m = Tensor<double>(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  BorderBundle<double> o({RowVec<double>{10, 11, 12, 13, 14}, {20, 21, 22, 23, 24}, {30, 31, 32, 33},
                          {40, 41, 42, 43}});
  const auto out = assemble_padded(m, o);
  CHECK(out.shape() == Shape{4, 5});
  CHECK(out(0, 0) == (10 + 30) / 2.0);
  CHECK(out(0, 4) == (14 + 40) / 2.0);
  CHECK(out(3, 0) == (20 + 33) / 2.0);
  CHECK(out(3, 4) == (24 + 43) / 2.0);
  CHECK(out(0, 2) == 12);
  CHECK(out(2, 0) == 32);
  CHECK(out(1, 4) == 41);
  CHECK(interior(out, 1) == m);
}

TEST_CASE("forward obeys the shape law and preserves the interior") {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t h = 4 + rng.below(13), w = 4 + rng.below(13), c = 1 + rng.below(4);
    const std::size_t s = 1 + rng.below(3);
    ModuleOptions opts;
    opts.pad_size = s;
    opts.init = trial % 2 ? FilterInit::uniform : FilterInit::mean;
    opts.seed = static_cast<std::uint64_t>(trial);
    PaddingModule<double> mod(c, opts);
    const auto m = testutil::random_tensor<double>(rng, Shape{h, w, c});
    const auto out = mod.forward(m);
    CHECK(out.shape() == Shape{h + 2 * s, w + 2 * s, c});
    CHECK(interior(out, s) == m);
  }
  PaddingModule<float> big(3, ModuleOptions{2});
  CHECK(big.forward(Tensor<float>::zeros(Shape{32, 32, 3})).shape() == Shape{36, 36, 3});
}

TEST_CASE("identity filter keeps constant inputs constant") {
  for (std::size_t s = 1; s <= 3; ++s) {
    auto mod = module_with(kIdentity, 1, s);
    mod.set_mode(Mode::eval);
    const auto out = mod.forward(Tensor<double>::filled(Shape{3, 3}, 5));
    CHECK(out == Tensor<double>::filled(Shape{3 + 2 * s, 3 + 2 * s}, 5));

    auto mod3 = module_with(kIdentity, 2, s);
    CHECK(mod3.forward(Tensor<double>::filled(Shape{6, 5, 2}, 0.25)) ==
          Tensor<double>::filled(Shape{6 + 2 * s, 5 + 2 * s, 2}, 0.25));
  }
}

TEST_CASE("channels are padded independently") {
  Rng rng(8);
  const std::size_t c = 3;
  std::vector<Filter3<double>> w(c);
  for (auto& f : w) f = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const auto m = testutil::random_tensor<double>(rng, Shape{6, 7, c});
  const std::vector<std::size_t> perm{2, 0, 1};

  std::vector<Filter3<double>> wp(c);
  std::vector<Tensor<double>> planes;
  for (std::size_t k = 0; k < c; ++k) {
    wp[k] = w[perm[k]];
    planes.push_back(channel_plane(m, perm[k]));
  }
  PaddingModule<double> a(FilterBank<double>(w), 2);
  PaddingModule<double> b(FilterBank<double>(wp), 2);
  const auto out = a.forward(m);
  const auto out_perm = b.forward(stack_planes(planes));
  for (std::size_t k = 0; k < c; ++k) CHECK(channel_plane(out_perm, k) == channel_plane(out, perm[k]));
}

TEST_CASE("train-mode forward caches supervision from the original input") {
  PaddingModule<double> mod(1, ModuleOptions{3});
  mod.forward(m4());
  REQUIRE(mod.has_cache());
  const auto& pair = mod.cache().at(0).at(0);
  CHECK(pair.predictor.lengths() == std::array<std::size_t, 4>{6, 6, 6, 6});
  CHECK(pair.target.lengths() == std::array<std::size_t, 4>{4, 4, 4, 4});
  CHECK(pair.target == extract_target(m4()));
  CHECK(mod.last_mse().has_value());

  mod.set_mode(Mode::eval);
  mod.forward(m4());
  CHECK_FALSE(mod.has_cache());

  mod.set_mode(Mode::train);
  CHECK_THROWS_AS(mod.forward(Tensor<double>::zeros(Shape{3, 5})), std::invalid_argument);
  mod.set_mode(Mode::eval);
  CHECK(mod.forward(Tensor<double>::zeros(Shape{2, 2})).shape() == Shape{8, 8});
  CHECK_THROWS_AS(mod.forward(Tensor<double>::zeros(Shape{1, 5})), std::invalid_argument);
}

TEST_CASE("diverging filters are reported") {
  auto mod = module_with(Filter3<double>{1e300, 1e300, 1e300}, 1, 2);
  CHECK_THROWS_AS(mod.forward(Tensor<double>::filled(Shape{4, 4}, 1e10)), DivergenceError);
}

TEST_CASE("local_mse on the worked example") {
  const auto t = extract_target(m4());
  const auto p = build_predictor(extract_neighbors(m4()));
  CHECK(local_sse(kIdentity, p, t) == 408.0);
  CHECK(local_mse(kIdentity, p, t) == 25.5);

  const auto c = Tensor<double>::filled(Shape{4, 4}, 5);
  CHECK(local_mse(kIdentity, build_predictor(extract_neighbors(c)), extract_target(c)) == 0.0);

  // A target produced by the filter itself is fitted perfectly.
  const Filter3<double> theta{0.3, -0.2, 0.7};
  CHECK(local_mse(theta, p, predict_borders(theta, p)) == 0.0);

  BorderBundle<double> short_t({RowVec<double>{1, 2, 3}, {1, 2, 3}, {1, 2, 3, 4}, {1, 2, 3, 4}});
  CHECK_THROWS_AS(local_mse(kIdentity, p, short_t), std::invalid_argument);
}

TEST_CASE("local_mse_grad") {
  const auto p = build_predictor(extract_neighbors(m4()));
  const Filter3<double> theta{0.3, -0.2, 0.7};
  CHECK(local_mse_grad(theta, p, predict_borders(theta, p)) == std::array<double, 3>{0, 0, 0});

  SUBCASE("matches finite differences on the worked example") {
    const auto t = extract_target(m4());
    const auto g = local_mse_grad(kIdentity, p, t);
    auto fn = [&](std::span<const double> v) { return local_mse(Filter3<double>{v[0], v[1], v[2]}, p, t); };
    const std::array<double, 3> th{0, 1, 0};
    const auto r = finite_diff_check(fn, th, g, 1e-6);
    CHECK(r.passed());
    CHECK(r.max_rel_error <= 1e-6);
  }

  SUBCASE("symmetric rows give equal outer gradients") {
    BorderBundle<double> n({RowVec<double>{1, 2, 1}, {3, 1, 3}, {0.5, 0.2, 0.5}, {2, 4, 2}});
    BorderBundle<double> t({RowVec<double>{3, 4, 5, 4, 3}, {1, 2, 2, 2, 1}, {0, 1, 0.5, 1, 0}, {7, 1, 2, 1, 7}});
    const auto g = local_mse_grad(Filter3<double>{0.2, 0.5, 0.2}, build_predictor(n), t);
    CHECK(g[0] == doctest::Approx(g[2]).epsilon(1e-14));
  }
}

TEST_CASE("local updates") {
  SUBCASE("zero gradient is a fixed point") {
    auto mod = module_with(kIdentity, 1, 1);
    mod.forward(Tensor<double>::filled(Shape{4, 4}, 5));
    mod.local_update();
    CHECK(mod.filters().weights(0) == kIdentity);
    CHECK_FALSE(mod.has_cache());
  }

  SUBCASE("SGD step") {
    auto mod = module_with(kIdentity, 1, 1);
    mod.forward(m4());
    const auto g = local_mse_grad(kIdentity, mod.cache()[0][0].predictor, mod.cache()[0][0].target);
    mod.local_update();
    const auto w = mod.filters().weights(0);
    for (int k = 0; k < 3; ++k) CHECK(w[k] == kIdentity[k] - 0.01 * g[k]);
  }

  SUBCASE("batch gradients are averaged before one step") {
    Rng rng(4);
    const std::vector<Tensor<double>> batch{testutil::random_tensor<double>(rng, Shape{5, 6}),
                              testutil::random_tensor<double>(rng, Shape{5, 6})};
    auto mod = module_with(kThird, 1, 1);
    mod.forward(std::span<const Tensor<double>>(batch));
    std::array<double, 3> mean{};
    for (const auto& m : batch) {
      const auto g = local_mse_grad(kThird, build_predictor(extract_neighbors(m)), extract_target(m));
      for (int k = 0; k < 3; ++k) mean[k] += g[k] / 2;
    }
    mod.local_update();
    for (int k = 0; k < 3; ++k) CHECK(mod.filters().weights(0)[k] == doctest::Approx(kThird[k] - 0.01 * mean[k]));
  }

  SUBCASE("missing cache is an error") {
    auto mod = module_with(kIdentity, 1, 1);
    CHECK_THROWS_AS(mod.local_update(), std::logic_error);
    CHECK_THROWS_AS(mod.backward(Tensor<double>::zeros(Shape{6, 6})), std::logic_error);
  }

  SUBCASE("repeated full-batch updates decrease the local loss") {
    const auto images = testutil::natural64();
    ModuleOptions opts;
    opts.init = FilterInit::uniform;
    opts.seed = 1;
    PaddingModule<float> mod(3, opts);
    std::vector<Tensor<float>> batch;
    for (const auto& img : images) batch.push_back(img.pixels);
    double prev = batch_mse(mod.filters(), images);
    for (int step = 0; step < 25; ++step) {
      mod.forward(std::span<const Tensor<float>>(batch));
      CHECK(*mod.last_mse() == doctest::Approx(prev).epsilon(1e-9));
      mod.local_update();
      const double cur = batch_mse(mod.filters(), images);
      CHECK(cur < prev);
      prev = cur;
    }
  }

  SUBCASE("local Adam reduces the loss too") {
    const auto images = testutil::natural64();
    ModuleOptions opts;
    opts.init = FilterInit::uniform;
    opts.optimizer = LocalOptimizer::adam;
    opts.learning_rate = 0.05;
    PaddingModule<float> mod(3, opts);
    std::vector<Tensor<float>> batch;
    for (const auto& img : images) batch.push_back(img.pixels);
    const double before = batch_mse(mod.filters(), images);
    for (int step = 0; step < 30; ++step) {
      mod.forward(std::span<const Tensor<float>>(batch));
      mod.local_update();
    }
    CHECK(batch_mse(mod.filters(), images) < 0.5 * before);
  }
}

TEST_CASE("two epochs of per-image updates halve the local MSE on natural images") {
  const auto images = testutil::natural64();
  ModuleOptions opts;
  opts.init = FilterInit::uniform;
  opts.seed = 0;
  PaddingModule<float> mod(3, opts);
  const double before = batch_mse(mod.filters(), images);
  for (int epoch = 0; epoch < 2; ++epoch) {
    for (const auto& img : images) {
      mod.forward(img.pixels);
      mod.backward(Tensor<float>::zeros(Shape{34, 34, 3}));
    }
  }
  const double after = batch_mse(mod.filters(), images);
  MESSAGE("natural-image proxy: local MSE " << before << " -> " << after);
  CHECK(after <= 0.5 * before);
}

TEST_CASE("backward strips the padded rings") {
  SUBCASE("ones") {
    auto mod = module_with(kThird, 1, 1);
    mod.forward(Tensor<double>::filled(Shape{4, 4}, 0.5));
    CHECK(mod.backward(Tensor<double>::filled(Shape{6, 6}, 1)) == Tensor<double>::filled(Shape{4, 4}, 1));
  }

  SUBCASE("distinct values, size 2") {
    auto mod = module_with(kThird, 1, 2);
    mod.forward(m4());
    auto g = Tensor<double>::zeros(Shape{8, 8});
    for (std::size_t i = 0; i < 64; ++i) g.data()[i] = static_cast<double>(i) * 1.5;
    const auto dx = mod.backward(g);
    CHECK(dx == interior(g, 2));
    CHECK(dx(0, 0) == g(2, 2));
  }

  SUBCASE("border gradients never reach the input") {
    Rng rng(2);
    for (std::size_t s = 1; s <= 3; ++s) {
      const auto m = testutil::random_tensor<double>(rng, Shape{5, 6, 2});
      auto g = testutil::random_tensor<double>(rng, Shape{5 + 2 * s, 6 + 2 * s, 2}, -1, 1);
      auto mod_a = module_with(kThird, 2, s);
      auto mod_b = module_with(kThird, 2, s);
      mod_a.forward(m);
      mod_b.forward(m);
      auto g2 = g;
      for (std::size_t i = 0; i < g2.height(); ++i) {
        for (std::size_t j = 0; j < g2.width(); ++j) {
          if (i < s || j < s || i >= g2.height() - s || j >= g2.width() - s) {
            for (std::size_t c = 0; c < 2; ++c) g2(i, j, c) = 1e6;
          }
        }
      }
      CHECK(mod_a.backward(g) == mod_b.backward(g2));
    }
  }

  SUBCASE("eval mode never updates") {
    auto mod = module_with(kThird, 1, 1);
    mod.set_mode(Mode::eval);
    mod.forward(m4());
    mod.backward(Tensor<double>::filled(Shape{6, 6}, 1));
    CHECK(mod.filters().weights(0) == kThird);
  }

  SUBCASE("frozen modules never update") {
    auto mod = module_with(kThird, 1, 1);
    mod.freeze();
    mod.forward(m4());
    CHECK_FALSE(mod.has_cache());
    mod.backward(Tensor<double>::filled(Shape{6, 6}, 1));
    CHECK(mod.filters().weights(0) == kThird);
  }

  SUBCASE("shape mismatch") {
    auto mod = module_with(kThird, 1, 1);
    mod.forward(m4());
    CHECK_THROWS_AS(mod.backward(Tensor<double>::zeros(Shape{7, 6})), std::invalid_argument);
  }
}

TEST_CASE("weights file layout") {
  const std::vector<Filter3<float>> w{{1.0f, 0.5f, -2.0f}};
  const std::string bytes = encode_weights(w);
  const unsigned char expected[] = {'P', 'A', 'D', 'M', 'O', 'D', '1', '\n', 1, 0, 0, 0,
                                    0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  REQUIRE(bytes.size() == sizeof expected);
  CHECK(std::memcmp(bytes.data(), expected, sizeof expected) == 0);

  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    std::vector<Filter3<float>> ws(1 + rng.below(70));
    for (auto& f : ws) f = {float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))};
    std::istringstream in(encode_weights(ws));
    CHECK(decode_weights(in) == ws);
  }

  std::istringstream bad("PADMOD2\n\x01\x00\x00\x00");
  CHECK_THROWS_AS(decode_weights(bad), std::runtime_error);
  std::istringstream truncated(bytes.substr(0, 20));
  CHECK_THROWS_AS(decode_weights(truncated), std::runtime_error);
}
