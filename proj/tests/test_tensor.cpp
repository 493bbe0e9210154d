#include <cmath>
#include <vector>

#include "doctest.h"
#include "lsanet/rng.hpp"
#include "lsanet/tensor.hpp"

using namespace lsanet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, bool rg = true) {
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(d), rg);
}

// Naive six-nested-loop direct convolution, written independently of the
// library implementation.
std::vector<double> conv_oracle(const std::vector<double>& in, std::size_t N,
                                std::size_t Cin, std::size_t H, std::size_t W,
                                const std::vector<double>& ker,
                                const std::vector<double>& bias,
                                std::size_t Cout, std::size_t k,
                                std::size_t stride, std::size_t pad,
                                std::size_t Ho, std::size_t Wo) {
  std::vector<double> out(N * Cout * Ho * Wo, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) ||
                    ix >= static_cast<long>(W))
                  continue;
                acc += in[((n * Cin + ci) * H + iy) * W + ix] *
                       ker[((co * Cin + ci) * k + ky) * k + kx];
              }
          out[((n * Cout + co) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d identity kernel on a single element") {
  Graph g;
  Tensor x = Tensor::from_data({1, 1, 1, 1}, {3.0});
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::from_data({1}, {0.0});
  Tensor y = g.conv2d(x, k, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.data()[0] == 3.0);
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
  Graph g;
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b = Tensor::from_data({1}, {0.0});
  Tensor y = g.conv2d(x, k, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.data()[0] == 9.0);
}

TEST_CASE("conv2d matches brute-force direct convolution") {
  Rng rng(42);
  Graph g;
  Tensor x = rand_tensor({2, 3, 8, 8}, rng);
  Tensor k = rand_tensor({4, 3, 3, 3}, rng);
  Tensor b = rand_tensor({4}, rng);
  Tensor y = g.conv2d(x, k, b, 2, 1);
  // (8 + 2*1 - 3)/2 + 1 = 4
  REQUIRE(y.shape() == Shape{2, 4, 4, 4});
  auto ref = conv_oracle(x.data(), 2, 3, 8, 8, k.data(), b.data(), 4, 3, 2, 1, 4, 4);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(std::abs(y.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("conv2d shape errors") {
  Graph g;
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor k = Tensor::zeros({3, 1, 3, 3});  // channel mismatch
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS(g.conv2d(x, k, b, 1, 1));
  Tensor k2 = Tensor::zeros({3, 2, 5, 5});
  CHECK_THROWS(g.conv2d(x, k2, b, 1, 0));  // empty output
}

TEST_CASE("dense identity and sum-plus-bias") {
  Graph g;
  Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
  Tensor w = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor b = Tensor::from_data({2}, {0.0, 0.0});
  Tensor y = g.dense(x, w, b);
  CHECK(y.data() == std::vector<double>{1.0, 2.0});

  Tensor x2 = Tensor::from_data({1, 2}, {1.0, 1.0});
  Tensor w2 = Tensor::from_data({2, 1}, {1.0, 1.0});
  Tensor b2 = Tensor::from_data({1}, {1.0});
  CHECK(g.dense(x2, w2, b2).data()[0] == 3.0);
}

TEST_CASE("dense matches naive triple-loop matmul") {
  Rng rng(7);
  Graph g;
  Tensor x = rand_tensor({3, 5}, rng);
  Tensor w = rand_tensor({5, 4}, rng);
  Tensor b = rand_tensor({4}, rng);
  Tensor y = g.dense(x, w, b);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t kcol = 0; kcol < 4; ++kcol) {
      double acc = b.data()[kcol];
      for (std::size_t d = 0; d < 5; ++d)
        acc += x.data()[n * 5 + d] * w.data()[d * 4 + kcol];
      CHECK(std::abs(y.data()[n * 4 + kcol] - acc) < 1e-12);
    }
  Tensor bad = rand_tensor({6, 4}, rng);
  CHECK_THROWS(g.dense(x, bad, b));
}

TEST_CASE("sigmoid, relu and softmax point values") {
  Graph g;
  CHECK(g.sigmoid(Tensor::from_data({1}, {0.0})).data()[0] == 0.5);
  Tensor r = g.relu(Tensor::from_data({3}, {-1.0, 0.0, 2.0}));
  CHECK(r.data() == std::vector<double>{0.0, 0.0, 2.0});

  Tensor s = g.softmax(Tensor::from_data({4}, {0.0, 0.0, 0.0, 0.0}), 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

  // direct evaluation of e^{x_i} / sum e^{x_j}
  Tensor t = g.softmax(Tensor::from_data({3}, {1.0, 2.0, 3.0}), 0);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(t.data()[i] == doctest::Approx(std::exp(1.0 + i) / z).epsilon(1e-14));

  CHECK_THROWS(g.softmax(Tensor::from_data({3}, {1.0, 2.0, 3.0}), 1));
}

TEST_CASE("softmax rows sum to one for arbitrary finite input") {
  Rng rng(11);
  Graph g;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = rand_tensor({4, 6}, rng, false);
    for (auto& v : x.data()) v *= 50.0;  // stress the stabilized exponentials
    Tensor y = g.softmax(x, 1);
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) s += y.data()[n * 6 + c];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("global_avg_pool values and brute-force oracle") {
  Graph g;
  CHECK(g.global_avg_pool(Tensor::full({2, 3, 4, 5}, 7.0)).data()[0] == 7.0);
  Tensor p = g.global_avg_pool(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(p.data()[0] == 2.5);

  Rng rng(13);
  Tensor x = rand_tensor({2, 3, 5, 7}, rng);
  Tensor y = g.global_avg_pool(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < 35; ++i) acc += x.data()[(n * 3 + c) * 35 + i];
      CHECK(std::abs(y.data()[n * 3 + c] - acc / 35.0) < 1e-12);
    }
}

TEST_CASE("maxpool2d values, ties and brute-force oracle") {
  Graph g;
  Tensor y = g.maxpool2d(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.data()[0] == 4.0);
  CHECK(g.maxpool2d(Tensor::full({1, 1, 4, 4}, 5.0), 2, 2).data()[0] == 5.0);
  CHECK_THROWS(g.maxpool2d(Tensor::zeros({1, 1, 2, 2}), 3, 1));

  Rng rng(17);
  Tensor x = rand_tensor({2, 3, 6, 6}, rng);
  Tensor p = g.maxpool2d(x, 2, 2);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t oy = 0; oy < 3; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          double m = -1e300;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              m = std::max(m, x.data()[((n * 3 + c) * 6 + oy * 2 + dy) * 6 +
                                       ox * 2 + dx]);
          CHECK(p.data()[((n * 3 + c) * 3 + oy) * 3 + ox] == m);
        }
}

TEST_CASE("maxpool gradient goes to the lowest flat index on ties") {
  Graph g;
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {4.0, 4.0, 4.0, 4.0}, true);
  Tensor y = g.sum_all(g.maxpool2d(x, 2, 2));
  g.backward(y);
  CHECK(x.grad() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("backward of sum is all-ones; analytic quadratic gradient") {
  {
    Graph g;
    Rng rng(5);
    Tensor w = rand_tensor({2, 3}, rng);
    Tensor loss = g.sum_all(w);
    g.backward(loss);
    for (double v : w.grad()) CHECK(v == 1.0);
  }
  {
    Graph g;
    Tensor w = Tensor::from_data({3}, {1.0, -2.0, 3.0}, true);
    Tensor loss = g.scale(g.sum_all(g.mul(w, w)), 0.5);
    g.backward(loss);
    CHECK(w.grad() == std::vector<double>{1.0, -2.0, 3.0});
  }
}

TEST_CASE("backward requires a scalar loss; disconnected params get zeros") {
  Graph g;
  Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor other = Tensor::from_data({2}, {5.0, 5.0}, true);
  Tensor y = g.mul(w, w);
  CHECK_THROWS(g.backward(y));
  Graph g2;
  Tensor loss = g2.sum_all(g2.mul(w, w));
  g2.backward(loss);
  other.grad();  // allocate
  CHECK(other.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("fan-in accumulation equals the sum of single-branch runs") {
  Rng rng(23);
  Tensor w = rand_tensor({4}, rng);
  Tensor a = rand_tensor({4}, rng, false);
  Tensor b = rand_tensor({4}, rng, false);

  // two consumers of w in one graph
  w.zero_grad();
  {
    Graph g;
    Tensor loss = g.add(g.sum_all(g.mul(w, a)), g.sum_all(g.mul(g.relu(w), b)));
    g.backward(loss);
  }
  std::vector<double> both = w.grad();

  w.zero_grad();
  {
    Graph g;
    g.backward(g.sum_all(g.mul(w, a)));
  }
  std::vector<double> first = w.grad();
  w.zero_grad();
  {
    Graph g;
    g.backward(g.sum_all(g.mul(g.relu(w), b)));
  }
  std::vector<double> second = w.grad();

  for (std::size_t i = 0; i < 4; ++i)
    CHECK(both[i] == doctest::Approx(first[i] + second[i]).epsilon(1e-15));
}

TEST_CASE("forward values and gradients are deterministic across repeats") {
  auto run = [](std::vector<double>* grad_out) {
    Rng rng(31);
    Tensor x = rand_tensor({2, 3, 6, 6}, rng);
    Tensor k = rand_tensor({2, 3, 3, 3}, rng);
    Tensor b = rand_tensor({2}, rng);
    Graph g;
    Tensor loss = g.sum_all(g.sigmoid(g.conv2d(x, k, b, 1, 1)));
    double v = loss.item();
    g.backward(loss);
    *grad_out = k.grad();
    return v;
  };
  std::vector<double> g1, g2;
  double v1 = run(&g1);
  double v2 = run(&g2);
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("detach blocks gradients but keeps values") {
  Graph g;
  Tensor w = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tensor d = g.detach(w);
  CHECK(d.data() == w.data());
  CHECK_FALSE(d.requires_grad());
  Tensor loss = g.sum_all(g.mul(d, d));
  // nothing upstream requires grad, so backward over this graph leaves w at 0
  Tensor loss2 = g.add(loss, g.sum_all(w));
  g.backward(loss2);
  CHECK(w.grad() == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("concat, slice, stack and index plumbing round-trips") {
  Graph g;
  Tensor a = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from_data({1, 2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12}, true);
  std::vector<Tensor> xs{a, b};
  Tensor c = g.concat_channels(xs);
  REQUIRE(c.shape() == Shape{1, 3, 2, 2});
  CHECK(c.data()[0] == 1.0);
  CHECK(c.data()[4] == 5.0);

  Tensor m = Tensor::from_data({2, 4}, {0, 1, 2, 3, 4, 5, 6, 7});
  Tensor s = g.slice_cols(m, 1, 3);
  CHECK(s.data() == std::vector<double>{1, 2, 5, 6});

  std::vector<Tensor> scalars{Tensor::scalar(1.5), Tensor::scalar(-2.0)};
  Tensor st = g.stack_scalars(scalars);
  CHECK(st.data() == std::vector<double>{1.5, -2.0});
  CHECK(g.index(st, 1).item() == -2.0);
  CHECK_THROWS(g.index(st, 2));
}
