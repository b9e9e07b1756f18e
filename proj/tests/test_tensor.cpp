#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "apm/rng.hpp"
#include "apm/tensor.hpp"
#include "test_util.hpp"

using namespace apm;
using testutil::fd_gradient;
using testutil::random_vec;
using testutil::rel_err;

TEST_CASE("conv2d: zero input yields bias everywhere") {
  Rng rng(1);
  Tensor x = Tensor::zeros({1, 1, 3, 3});
  Tensor w = Tensor::from_data({1, 1, 3, 3}, random_vec(rng, 9));
  Tensor b = Tensor::from_data({1}, {0.75});
  Tensor y = conv2d(x, w, b);
  for (double v : y.values()) CHECK(v == 0.75);
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Rng rng(2);
  std::vector<double> wdata(9, 0.0);
  wdata[4] = 1.0;  // kernel center
  Tensor w = Tensor::from_data({1, 1, 3, 3}, wdata);
  Tensor b = Tensor::zeros({1});
  Tensor x = Tensor::from_data({1, 1, 5, 4}, random_vec(rng, 20));
  Tensor y = conv2d(x, w, b);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < 20; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d: forward and all gradients match the naive loop oracle") {
  Rng rng(3);
  testutil::NaiveConv oracle{1, 2, 3, 4, 4};
  auto in = random_vec(rng, 1 * 2 * 4 * 4);
  auto wd = random_vec(rng, 3 * 2 * 3 * 3);
  auto bd = random_vec(rng, 3);

  Tensor x = Tensor::from_data({1, 2, 4, 4}, in, true);
  Tensor w = Tensor::from_data({3, 2, 3, 3}, wd, true);
  Tensor b = Tensor::from_data({3}, bd, true);
  Tensor y = conv2d(x, w, b);

  auto ref = oracle.forward(in, wd, bd);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(rel_err(y.values()[i], ref[i]) <= 1e-12);

  Tensor loss = mean(y);
  loss.backward();

  // mean() seeds every output element with 1/N upstream gradient.
  std::vector<double> gout(ref.size(), 1.0 / static_cast<double>(ref.size()));
  std::vector<double> gref_in, gref_w, gref_b;
  oracle.backward(in, wd, gout, gref_in, gref_w, gref_b);
  for (std::size_t i = 0; i < gref_in.size(); ++i)
    CHECK(rel_err(x.grad()[i], gref_in[i]) <= 1e-12);
  for (std::size_t i = 0; i < gref_w.size(); ++i)
    CHECK(rel_err(w.grad()[i], gref_w[i]) <= 1e-12);
  for (std::size_t i = 0; i < gref_b.size(); ++i)
    CHECK(rel_err(b.grad()[i], gref_b[i]) <= 1e-12);
}

TEST_CASE("conv2d: rejects mismatched shapes") {
  Tensor x = Tensor::zeros({1, 4, 4, 4});
  Tensor w = Tensor::zeros({2, 3, 3, 3});
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_AS(conv2d(x, w, b), ShapeError);
  Tensor w5 = Tensor::zeros({2, 4, 5, 5});
  CHECK_THROWS_AS(conv2d(x, w5, b), ShapeError);
  Tensor bbad = Tensor::zeros({3});
  Tensor wok = Tensor::zeros({2, 4, 3, 3});
  CHECK_THROWS_AS(conv2d(x, wok, bbad), ShapeError);
}

TEST_CASE("relu: forward values and gradient routing") {
  Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0}, true);
  Tensor y = relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == 2.0);
  mean(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);  // subgradient 0 at the kink
  CHECK(x.grad()[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("relu: all-positive input is identity with unit gradient") {
  Rng rng(4);
  Tensor x = Tensor::from_data({8}, random_vec(rng, 8, 0.5, 2.0), true);
  Tensor y = relu(x);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y.values()[i] == x.values()[i]);
  mean(y).backward();
  for (std::size_t i = 0; i < 8; ++i) CHECK(x.grad()[i] == doctest::Approx(0.125));
}

TEST_CASE("relu: gradient matches finite differences away from kinks") {
  Rng rng(5);
  std::vector<double> vals(16);
  for (double& v : vals) {
    do {
      v = rng.uniform(-1.0, 1.0);
    } while (std::abs(v) < 1e-3);
  }
  Tensor x = Tensor::from_data({16}, vals, true);
  Tensor loss = mean(relu(x));
  loss.backward();
  auto fd = fd_gradient(x, [&] { return mean(relu(x)).item(); });
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(rel_err(x.grad()[i], fd[i], 1e-6) <= 1e-6);
}

TEST_CASE("maxpool2: single window and tie-breaking") {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor y = maxpool2(x);
  CHECK(y.size() == 1);
  CHECK(y.item() == 4.0);

  Tensor c = Tensor::full({1, 1, 4, 4}, 7.5, true);
  Tensor yc = maxpool2(c);
  for (double v : yc.values()) CHECK(v == 7.5);
  mean(yc).backward();
  // ties route the whole gradient to the first element of each window
  for (int y0 = 0; y0 < 4; ++y0)
    for (int x0 = 0; x0 < 4; ++x0) {
      const double g = c.grad()[y0 * 4 + x0];
      if (y0 % 2 == 0 && x0 % 2 == 0)
        CHECK(g == doctest::Approx(0.25));
      else
        CHECK(g == 0.0);
    }
}

TEST_CASE("maxpool2: matches direct window enumeration on random input") {
  Rng rng(6);
  auto vals = random_vec(rng, 16);
  Tensor x = Tensor::from_data({1, 1, 4, 4}, vals);
  Tensor y = maxpool2(x);
  for (int wy = 0; wy < 2; ++wy)
    for (int wx = 0; wx < 2; ++wx) {
      double best = vals[(2 * wy) * 4 + 2 * wx];
      best = std::max(best, vals[(2 * wy) * 4 + 2 * wx + 1]);
      best = std::max(best, vals[(2 * wy + 1) * 4 + 2 * wx]);
      best = std::max(best, vals[(2 * wy + 1) * 4 + 2 * wx + 1]);
      CHECK(y.values()[wy * 2 + wx] == best);
    }
}

TEST_CASE("maxpool2: odd spatial dims are rejected") {
  CHECK_THROWS_AS(maxpool2(Tensor::zeros({1, 1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(maxpool2(Tensor::zeros({1, 1, 4, 5})), ShapeError);
}

TEST_CASE("upsample_nearest2: replication and pooling round trip") {
  Tensor x = Tensor::from_data({1, 1, 1, 1}, {5.0});
  Tensor y = upsample_nearest2(x);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
  for (double v : y.values()) CHECK(v == 5.0);

  Tensor c = Tensor::full({1, 1, 4, 4}, 0.3);
  Tensor rt = upsample_nearest2(maxpool2(c));
  for (std::size_t i = 0; i < rt.values().size(); ++i)
    CHECK(rt.values()[i] == c.values()[i]);
}

TEST_CASE("upsample_nearest2: backward equals finite differences") {
  Rng rng(7);
  Tensor x = Tensor::from_data({1, 2, 2, 3}, random_vec(rng, 12), true);
  Tensor loss = mean(upsample_nearest2(x));
  loss.backward();
  auto fd = fd_gradient(x, [&] { return mean(upsample_nearest2(x)).item(); });
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(rel_err(x.grad()[i], fd[i], 1e-6) <= 1e-6);
}

TEST_CASE("avgpool2: forward mean and gradient split") {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 6}, true);
  Tensor y = avgpool2(x);
  CHECK(y.item() == 3.0);
  mean(y).backward();
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 0.25);
}

TEST_CASE("concat_channels: stacking, empty side, and slicing round trip") {
  Rng rng(8);
  auto adata = random_vec(rng, 2 * 4 * 4);
  auto bdata = random_vec(rng, 3 * 4 * 4);
  Tensor a = Tensor::from_data({1, 2, 4, 4}, adata);
  Tensor b = Tensor::from_data({1, 3, 4, 4}, bdata);
  Tensor y = concat_channels(a, b);
  REQUIRE(y.shape() == std::vector<int>{1, 5, 4, 4});
  for (std::size_t i = 0; i < adata.size(); ++i) CHECK(y.values()[i] == adata[i]);
  for (std::size_t i = 0; i < bdata.size(); ++i)
    CHECK(y.values()[adata.size() + i] == bdata[i]);

  Tensor empty = Tensor::zeros({1, 0, 4, 4});
  Tensor ye = concat_channels(a, empty);
  REQUIRE(ye.shape() == a.shape());
  for (std::size_t i = 0; i < adata.size(); ++i) CHECK(ye.values()[i] == adata[i]);

  CHECK_THROWS_AS(concat_channels(a, Tensor::zeros({1, 1, 4, 5})), ShapeError);
}

TEST_CASE("concat_channels: backward splits the gradient") {
  Rng rng(9);
  Tensor a = Tensor::from_data({1, 1, 2, 2}, random_vec(rng, 4), true);
  Tensor b = Tensor::from_data({1, 2, 2, 2}, random_vec(rng, 8), true);
  mean(concat_channels(a, b)).backward();
  for (double g : a.grad()) CHECK(g == doctest::Approx(1.0 / 12.0));
  for (double g : b.grad()) CHECK(g == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("add/sub/scale/mean: basic contracts") {
  Rng rng(10);
  auto xdata = random_vec(rng, 6);
  Tensor x = Tensor::from_data({2, 3}, xdata);
  Tensor z = Tensor::zeros({2, 3});
  Tensor y = add(x, z);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.values()[i] == xdata[i]);

  Tensor c = Tensor::full({4}, 2.5, true);
  Tensor m = mean(c);
  CHECK(m.item() == 2.5);
  m.backward();
  for (double g : c.grad()) CHECK(g == 0.25);

  CHECK_THROWS_AS(add(x, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(sub(x, Tensor::zeros({6})), ShapeError);
}

TEST_CASE("composite expression: gradient matches finite differences") {
  Rng rng(11);
  Tensor x = Tensor::from_data({1, 3, 4, 4}, random_vec(rng, 48, 0.1, 1.0), true);
  auto run = [&] {
    Tensor t = scale(add(relu(x), upsample_nearest2(maxpool2(x))), 0.7);
    return mean(sub(t, scale(x, 0.2)));
  };
  Tensor loss = run();
  loss.backward();
  auto fd = fd_gradient(x, [&] { return run().item(); });
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(rel_err(x.grad()[i], fd[i], 1e-6) <= 1e-6);
}

TEST_CASE("backward: mean gradient, unused leaf, and error paths") {
  Tensor w = Tensor::from_data({4}, {1, 2, 3, 4}, true);
  Tensor loss = mean(w);
  loss.backward();
  for (double g : w.grad()) CHECK(g == 0.25);

  // A leaf the loss never touched gets no gradient at all.
  Tensor unused = Tensor::from_data({2}, {5, 6}, true);
  Tensor other = Tensor::from_data({2}, {1, 1}, true);
  mean(other).backward();
  CHECK_FALSE(unused.has_grad());

  // Backward on a consumed graph is an error.
  CHECK_THROWS_AS(loss.backward(), GraphError);

  // Non-scalar loss is an error.
  Tensor vec = relu(Tensor::from_data({3}, {1, 2, 3}, true));
  CHECK_THROWS_AS(vec.backward(), GraphError);
}

TEST_CASE("backward: accumulation is additive across graphs") {
  Rng rng(12);
  auto base = random_vec(rng, 10, 0.2, 1.0);
  Tensor w1 = Tensor::from_data({10}, base, true);
  Tensor w2 = Tensor::from_data({10}, base, true);

  // Two separate backwards into w1.
  mean(relu(w1)).backward();
  mean(scale(w1, 3.0)).backward();

  // One backward of the summed loss into w2.
  add(mean(relu(w2)), mean(scale(w2, 3.0))).backward();

  for (std::size_t i = 0; i < 10; ++i)
    CHECK(rel_err(w1.grad()[i], w2.grad()[i]) <= 1e-12);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  Rng rng(13);
  auto in = random_vec(rng, 2 * 3 * 8 * 8);
  auto wd = random_vec(rng, 4 * 3 * 3 * 3);
  auto bd = random_vec(rng, 4);
  Tensor x = Tensor::from_data({2, 3, 8, 8}, in);
  Tensor w = Tensor::from_data({4, 3, 3, 3}, wd);
  Tensor b = Tensor::from_data({4}, bd);
  Tensor y1 = maxpool2(relu(conv2d(x, w, b)));
  Tensor y2 = maxpool2(relu(conv2d(x, w, b)));
  REQUIRE(y1.size() == y2.size());
  for (std::int64_t i = 0; i < y1.size(); ++i)
    CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("nan guard: flags non-finite op outputs when enabled") {
  set_nan_guard(true);
  Tensor x = Tensor::from_data({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(x, x), NumericError);
  set_nan_guard(false);
  Tensor y = add(x, x);  // silently produces inf with the guard off
  CHECK(std::isinf(y.values()[0]));
}

TEST_CASE("smooth_l1_loss: closed-form values and finite differences") {
  Tensor p = Tensor::from_data({1}, {3.0}, true);
  Tensor t = Tensor::from_data({1}, {1.0});
  CHECK(smooth_l1_loss(p, t, 1.0).item() == doctest::Approx(1.5));  // d=2

  Tensor p2 = Tensor::from_data({1}, {1.25}, true);
  CHECK(smooth_l1_loss(p2, t, 1.0).item() == doctest::Approx(0.5 * 0.0625));

  Rng rng(14);
  Tensor pr = Tensor::from_data({12}, random_vec(rng, 12), true);
  Tensor tr = Tensor::from_data({12}, random_vec(rng, 12));
  smooth_l1_loss(pr, tr, 1.0).backward();
  auto fd = fd_gradient(pr, [&] { return smooth_l1_loss(pr, tr, 1.0).item(); });
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(rel_err(pr.grad()[i], fd[i], 1e-6) <= 1e-6);
}

TEST_CASE("l1_loss: value and subgradient") {
  Tensor a = Tensor::from_data({2}, {1.0, -2.0}, true);
  Tensor b = Tensor::from_data({2}, {0.5, 0.0});
  CHECK(l1_loss(a, b).item() == doctest::Approx(1.25));
  l1_loss(a, b).backward();
  CHECK(a.grad()[0] == 0.5);
  CHECK(a.grad()[1] == -0.5);
}
