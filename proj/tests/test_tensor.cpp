#include <cmath>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "iaqcast/rng.hpp"
#include "iaqcast/tensor.hpp"

using namespace iaq;

namespace {

std::vector<double> randu(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("matmul basics") {
  Graph g;
  const std::vector<double> eye{1, 0, 0, 1};
  const std::vector<double> b{5, 6, 7, 8};
  Tensor I = g.constant({2, 2}, eye);
  Tensor B = g.constant({2, 2}, b);
  Tensor C = matmul(I, B);
  for (int i = 0; i < 4; ++i) CHECK(C.values()[i] == b[i]);

  const std::vector<double> r{1, 2}, c{3, 4};
  Tensor R = g.constant({1, 2}, r);
  Tensor Cc = g.constant({2, 1}, c);
  CHECK(matmul(R, Cc).value() == 11.0);

  CHECK_THROWS_AS(matmul(g.constant({2, 3}, 1.0), g.constant({2, 3}, 1.0)), Error);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(101);
  std::vector<fd::Param> ps{
      {"a", {3, 4}, randu(rng, 12)},
      {"b", {4, 2}, randu(rng, 8)},
  };
  auto res = fd::max_rel_error(ps, [](Graph& g, const std::vector<fd::Param>& p) {
    Tensor a = g.leaf(p[0].name, p[0].shape, p[0].values);
    Tensor b = g.leaf(p[1].name, p[1].shape, p[1].values);
    return reduce_sum(square(matmul(a, b)));
  });
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elementwise trivials") {
  Graph g;
  CHECK(tanh(g.scalar(0.0)).value() == 0.0);
  CHECK(relu(g.scalar(-3.5)).value() == 0.0);
  CHECK(relu(g.scalar(2.0)).value() == 2.0);
}

TEST_CASE("tanh derivative at 0.7 vs finite differences") {
  std::vector<fd::Param> ps{{"x", {1}, {0.7}}};
  // |analytic - fd| directly, per-element
  Graph g;
  Tensor x = g.leaf("x", {1}, ps[0].values);
  Tensor y = tanh(x);
  g.backward(y);
  const double an = g.grad_by_name("x")[0];
  const double h = 1e-5;
  const double fdv = (std::tanh(0.7 + h) - std::tanh(0.7 - h)) / (2 * h);
  CHECK(std::fabs(an - fdv) < 1e-8);
}

TEST_CASE("reduce trivials") {
  Graph g;
  Tensor t = g.constant({3}, std::vector<double>{2, 4, 6});
  CHECK(reduce_mean(t).value() == 4.0);
  CHECK(reduce_sum(g.constant({5}, 0.0)).value() == 0.0);

  // gradient of mean equals 1/n in every slot
  Graph g2;
  Tensor x = g2.leaf("x", {4}, std::vector<double>{1, 2, 3, 4});
  g2.backward(reduce_mean(x));
  for (double d : g2.grad_by_name("x")) CHECK(d == 0.25);

  CHECK_THROWS_AS(reduce_sum(t, 1), Error);  // axis out of range for rank 1
}

TEST_CASE("axis reductions match hand sums") {
  Graph g;
  Tensor t = g.constant({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor s0 = reduce_sum(t, 0);
  REQUIRE(s0.shape() == Shape{1, 3});
  CHECK(s0.values()[0] == 5.0);
  CHECK(s0.values()[2] == 9.0);
  Tensor m1 = reduce_mean(t, 1);
  REQUIRE(m1.shape() == Shape{2, 1});
  CHECK(m1.values()[0] == doctest::Approx(2.0));
  CHECK(m1.values()[1] == doctest::Approx(5.0));
}

TEST_CASE("concat shapes and identity") {
  Graph g;
  Tensor a = g.constant({2, 3}, 1.0);
  Tensor b = g.constant({2, 5}, 2.0);
  std::vector<Tensor> ts{a, b};
  Tensor c = concat(ts, 1);
  REQUIRE(c.shape() == Shape{2, 8});

  std::vector<Tensor> one{a};
  Tensor same = concat(one, 0);
  REQUIRE(same.shape() == a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(same.values()[i] == a.values()[i]);

  std::vector<Tensor> bad{a, g.constant({3, 3}, 0.0)};
  CHECK_THROWS_AS(concat(bad, 1), Error);
}

TEST_CASE("concat then slice routes gradient to the sliced source only") {
  std::vector<fd::Param> ps{
      {"a", {2, 2}, {1, 2, 3, 4}},
      {"b", {2, 2}, {5, 6, 7, 8}},
  };
  Graph g;
  Tensor a = g.leaf("a", ps[0].shape, ps[0].values);
  Tensor b = g.leaf("b", ps[1].shape, ps[1].values);
  std::vector<Tensor> ts{a, b};
  Tensor c = concat(ts, 0);            // 4x2
  Tensor s = slice_rows(c, 2, 4);      // rows of b only
  g.backward(reduce_sum(square(s)));
  for (double d : g.grad_by_name("a")) CHECK(d == 0.0);
  bool any = false;
  for (double d : g.grad_by_name("b")) any = any || d != 0.0;
  CHECK(any);

  auto res = fd::max_rel_error(ps, [](Graph& gg, const std::vector<fd::Param>& p) {
    Tensor aa = gg.leaf(p[0].name, p[0].shape, p[0].values);
    Tensor bb = gg.leaf(p[1].name, p[1].shape, p[1].values);
    std::vector<Tensor> tt{aa, bb};
    return reduce_sum(square(slice_rows(concat(tt, 0), 2, 4)));
  });
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("slice_rows semantics") {
  Graph g;
  std::vector<double> data(10);
  for (int i = 0; i < 10; ++i) data[i] = i;
  Tensor t = g.constant({5, 2}, data);
  Tensor s = slice_rows(t, 3, 5);
  REQUIRE(s.shape() == Shape{2, 2});
  CHECK(s.values()[0] == 6.0);
  CHECK(s.values()[3] == 9.0);

  Tensor full = slice_rows(t, 0, 5);
  for (int i = 0; i < 10; ++i) CHECK(full.values()[i] == data[i]);

  CHECK_THROWS_AS(slice_rows(t, 3, 6), Error);

  // gradient outside [from, to) is exactly zero
  Graph g2;
  Tensor x = g2.leaf("x", {5, 2}, data);
  g2.backward(reduce_sum(slice_rows(x, 1, 3)));
  auto gr = g2.grad_by_name("x");
  CHECK(gr[0] == 0.0);
  CHECK(gr[1] == 0.0);
  CHECK(gr[2] == 1.0);
  CHECK(gr[5] == 1.0);
  CHECK(gr[6] == 0.0);
  CHECK(gr[9] == 0.0);
}

TEST_CASE("backward basics") {
  Graph g;
  const std::vector<double> xv{2, -1, 3};
  Tensor w = g.leaf("w", {3}, std::vector<double>{0.5, 0.5, 0.5});
  Tensor x = g.constant({3}, xv);
  g.backward(reduce_sum(mul(w, x)));
  auto gw = g.grad_by_name("w");
  for (int i = 0; i < 3; ++i) CHECK(gw[i] == xv[i]);
}

TEST_CASE("loss independent of a leaf gives zero gradient") {
  Graph g;
  Tensor w = g.leaf("w", {2}, std::vector<double>{1, 2});
  Tensor u = g.leaf("unused", {2}, std::vector<double>{3, 4});
  (void)u;
  g.backward(reduce_sum(square(w)));
  for (double d : g.grad_by_name("unused")) CHECK(d == 0.0);
}

TEST_CASE("backward visits each node exactly once") {
  Graph g;
  Tensor a = g.leaf("a", {2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor b = tanh(a);
  Tensor c = add(b, b);
  Tensor loss = reduce_sum(c);
  g.backward(loss);
  CHECK(g.last_backward_visits() == g.node_count());
}

TEST_CASE("backward error paths") {
  Graph g;
  Tensor a = g.leaf("a", {2}, std::vector<double>{1, 2});
  Tensor s = reduce_sum(a);
  g.backward(s);
  CHECK_THROWS_AS(g.backward(s), Error);  // no silent accumulation
  g.reset_grads();
  g.backward(s);  // allowed after reset
  CHECK(g.grad_by_name("a")[0] == 1.0);

  Graph g2;
  Tensor v = g2.leaf("v", {3}, std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(g2.backward(v), Error);  // non-scalar loss

  Graph g3;
  Tensor other = g3.scalar(1.0);
  CHECK_THROWS_AS(g.backward(other), Error);  // detached from g
}

TEST_CASE("broadcasting: row vector and scalar") {
  Graph g;
  Tensor m = g.constant({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor row = g.constant({3}, std::vector<double>{10, 20, 30});
  Tensor s = add(m, row);
  CHECK(s.values()[0] == 11.0);
  CHECK(s.values()[5] == 36.0);

  Tensor k = mul(m, g.scalar(2.0));
  CHECK(k.values()[4] == 10.0);

  Tensor bad = g.constant({2}, 0.0);
  CHECK_THROWS_AS(add(m, bad), Error);
}

TEST_CASE("broadcast gradients reduce correctly") {
  Rng rng(7);
  std::vector<fd::Param> ps{
      {"m", {3, 4}, randu(rng, 12)},
      {"row", {4}, randu(rng, 4)},
      {"s", {1}, randu(rng, 1)},
  };
  auto res = fd::max_rel_error(ps, [](Graph& g, const std::vector<fd::Param>& p) {
    Tensor m = g.leaf(p[0].name, p[0].shape, p[0].values);
    Tensor row = g.leaf(p[1].name, p[1].shape, p[1].values);
    Tensor s = g.leaf(p[2].name, p[2].shape, p[2].values);
    return reduce_mean(square(mul(add(m, row), s)));
  });
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("primitive gradients vs finite differences on random inputs") {
  Rng rng(42);
  // smooth unary ops on [-2, 2]
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<fd::Param> ps{{"x", {4, 3}, randu(rng, 12)}};
    auto res = fd::max_rel_error(ps, [](Graph& g, const std::vector<fd::Param>& p) {
      Tensor x = g.leaf(p[0].name, p[0].shape, p[0].values);
      Tensor y = add(tanh(x), sigmoid(x));
      y = add(y, square(x));
      y = add(y, affine(x, 1.7, -0.3));
      y = add(y, exp(affine(x, 0.3, 0.0)));
      return reduce_mean(square(y));
    });
    CHECK(res.max_rel_err < 1e-5);
  }
  // positive-domain ops
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<fd::Param> ps{{"x", {3, 3}, randu(rng, 9, 0.5, 2.5)},
                              {"y", {3, 3}, randu(rng, 9, 0.5, 2.5)}};
    auto res = fd::max_rel_error(ps, [](Graph& g, const std::vector<fd::Param>& p) {
      Tensor x = g.leaf(p[0].name, p[0].shape, p[0].values);
      Tensor y = g.leaf(p[1].name, p[1].shape, p[1].values);
      Tensor z = add(log(x), sqrt(y));
      z = add(z, div(x, y));
      return reduce_sum(square(z));
    });
    CHECK(res.max_rel_err < 1e-5);
  }
  // transpose + concat + reduce axes
  {
    std::vector<fd::Param> ps{{"a", {2, 3}, randu(rng, 6)}, {"b", {2, 3}, randu(rng, 6)}};
    auto res = fd::max_rel_error(ps, [](Graph& g, const std::vector<fd::Param>& p) {
      Tensor a = g.leaf(p[0].name, p[0].shape, p[0].values);
      Tensor b = g.leaf(p[1].name, p[1].shape, p[1].values);
      std::vector<Tensor> ts{a, b};
      Tensor c = concat(ts, 1);                        // 2x6
      Tensor t = transpose(c);                         // 6x2
      Tensor r = reduce_mean(t, 0);                    // 1x2
      Tensor rowsum = transpose(reduce_sum(square(c), 1));  // 1x2
      return reduce_sum(square(add(r, rowsum)));
    });
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("cos_rows values and gradient") {
  Graph g;
  Tensor a = g.constant({3, 2}, std::vector<double>{1, 0, 0, 2, 1, 1});
  Tensor b = g.constant({3, 2}, std::vector<double>{1, 0, 2, 0, -1, -1});
  Tensor c = cos_rows(a, b);
  CHECK(c.values()[0] == doctest::Approx(1.0));
  CHECK(c.values()[1] == doctest::Approx(0.0));
  CHECK(c.values()[2] == doctest::Approx(-1.0));

  // zero rows contribute 0 with zero gradient
  Graph g2;
  Tensor z = g2.leaf("z", {2, 2}, std::vector<double>{0, 0, 1, 2});
  Tensor w = g2.leaf("w", {2, 2}, std::vector<double>{3, 4, 1, 2});
  Tensor cz = cos_rows(z, w);
  CHECK(cz.values()[0] == 0.0);
  g2.backward(reduce_sum(cz));
  CHECK(g2.grad_by_name("z")[0] == 0.0);
  CHECK(g2.grad_by_name("z")[1] == 0.0);
  CHECK(g2.grad_by_name("w")[0] == 0.0);

  Rng rng(9);
  std::vector<fd::Param> ps{{"a", {4, 3}, randu(rng, 12, 0.2, 2.0)},
                            {"b", {4, 3}, randu(rng, 12, 0.2, 2.0)}};
  auto res = fd::max_rel_error(ps, [](Graph& gg, const std::vector<fd::Param>& p) {
    Tensor aa = gg.leaf(p[0].name, p[0].shape, p[0].values);
    Tensor bb = gg.leaf(p[1].name, p[1].shape, p[1].values);
    return reduce_mean(square(cos_rows(aa, bb)));
  });
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("layer_norm forward and gradient") {
  Graph g;
  Tensor x = g.constant({1, 4}, std::vector<double>{1, 2, 3, 4});
  Tensor gain = g.constant({4}, 1.0);
  Tensor bias = g.constant({4}, 0.0);
  Tensor y = layer_norm(x, gain, bias, 1e-12);
  double mean = 0;
  for (double v : y.values()) mean += v;
  CHECK(std::fabs(mean / 4.0) < 1e-12);
  double var = 0;
  for (double v : y.values()) var += v * v;
  CHECK(var / 4.0 == doctest::Approx(1.0));

  Rng rng(13);
  std::vector<fd::Param> ps{{"x", {3, 4}, randu(rng, 12)},
                            {"gain", {4}, randu(rng, 4, 0.5, 1.5)},
                            {"bias", {4}, randu(rng, 4, -0.5, 0.5)}};
  auto res = fd::max_rel_error(ps, [](Graph& gg, const std::vector<fd::Param>& p) {
    Tensor xx = gg.leaf(p[0].name, p[0].shape, p[0].values);
    Tensor gn = gg.leaf(p[1].name, p[1].shape, p[1].values);
    Tensor bs = gg.leaf(p[2].name, p[2].shape, p[2].values);
    return reduce_mean(square(layer_norm(xx, gn, bs)));
  });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("clamp gradient passes only inside the limits") {
  Graph g;
  Tensor x = g.leaf("x", {3}, std::vector<double>{-10.0, 0.5, 10.0});
  Tensor y = clamp(x, -7.0, 3.0);
  CHECK(y.values()[0] == -7.0);
  CHECK(y.values()[1] == 0.5);
  CHECK(y.values()[2] == 3.0);
  g.backward(reduce_sum(y));
  auto gr = g.grad_by_name("x");
  CHECK(gr[0] == 0.0);
  CHECK(gr[1] == 1.0);
  CHECK(gr[2] == 0.0);
}

TEST_CASE("strict-finite mode flags domain violations") {
  Graph g(/*strict_finite=*/true);
  Tensor x = g.constant({1}, std::vector<double>{-1.0});
  CHECK_THROWS_AS(log(x), Error);

  Graph lax;
  Tensor y = log(lax.constant({1}, std::vector<double>{-1.0}));
  CHECK(std::isnan(y.value()));
}

TEST_CASE("leaf rebinding returns the same node") {
  Graph g;
  std::vector<double> v{1, 2, 3, 4};
  Tensor a = g.leaf("w", {2, 2}, v);
  Tensor b = g.leaf("w", {2, 2}, v);
  CHECK(a.node_ptr() == b.node_ptr());
  CHECK(g.trainable_names().size() == 1);
  CHECK_THROWS_AS(g.leaf("w", {4}, v), Error);
}

TEST_CASE("slice_cols values and gradient routing") {
  Graph g;
  std::vector<double> data{1, 2, 3, 4, 5, 6, 7, 8};  // 2x4
  Tensor t = g.constant({2, 4}, data);
  Tensor s = slice_cols(t, 1, 3);
  REQUIRE(s.shape() == Shape{2, 2});
  CHECK(s.values()[0] == 2.0);
  CHECK(s.values()[1] == 3.0);
  CHECK(s.values()[2] == 6.0);
  CHECK(s.values()[3] == 7.0);
  CHECK_THROWS_AS(slice_cols(t, 3, 5), Error);

  Graph g2;
  Tensor x = g2.leaf("x", {2, 4}, data);
  g2.backward(reduce_sum(square(slice_cols(x, 0, 2))));
  auto gr = g2.grad_by_name("x");
  CHECK(gr[0] == 2.0);
  CHECK(gr[1] == 4.0);
  CHECK(gr[2] == 0.0);
  CHECK(gr[3] == 0.0);
  CHECK(gr[6] == 0.0);
}
