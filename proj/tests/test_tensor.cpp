#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tg2g/adam.hpp"
#include "tg2g/tensor.hpp"
#include "tg2g/util.hpp"

using namespace tg2g;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = dist(rng);
  return Tensor::from(std::move(d), std::move(shape));
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x = Tensor::from({0.0, 0.0, 0.0}, {1, 3});
  Tensor y = softmax_rows(x);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are nonnegative and sum to 1") {
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 6}, rng, -5.0, 5.0);
    Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(y(i, j) >= 0.0);
        s += y(i, j);
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("elu matches its closed form") {
  Tensor x = Tensor::from({-1.0, 0.5}, {2});
  Tensor y = elu(x);
  CHECK(y.data()[0] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
  CHECK(y.data()[1] == 0.5);
}

TEST_CASE("layer norm of [1,2,3]") {
  Tensor x = Tensor::from({1.0, 2.0, 3.0}, {1, 3});
  Tensor y = layer_norm_rows(x);
  CHECK(y.data()[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(1.2247).epsilon(1e-4));
  double mean = (y.data()[0] + y.data()[1] + y.data()[2]) / 3.0;
  CHECK(std::fabs(mean) < 1e-12);
}

TEST_CASE("shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 3});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), shape_error);
}

TEST_CASE("non-finite input is rejected") {
  Tensor a = Tensor::from({1.0, std::numeric_limits<double>::quiet_NaN()}, {2});
  CHECK_THROWS_AS(exp_t(a), value_error);
}

TEST_CASE("backward of x^2 at x=3") {
  Tensor x = Tensor::from({3.0}, {1}, true);
  Tensor y = square(x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad of sum(softmax(x)) is zero") {
  Rng rng = make_rng(3);
  Tensor x = Tensor::from(random_tensor({1, 5}, rng).data(), {1, 5}, true);
  Tensor y = sum(softmax_rows(x));
  backward(y);
  for (double g : x.grad()) CHECK(std::fabs(g) < 1e-12);
}

TEST_CASE("grad of sum(W v) for W of ones") {
  Tensor w = Tensor::from({1.0, 1.0, 1.0, 1.0}, {2, 2}, true);
  Tensor v = Tensor::from({1.0, 2.0}, {2, 1});
  Tensor y = sum(matmul(w, v));
  backward(y);
  CHECK(w.grad() == std::vector<double>{1.0, 2.0, 1.0, 2.0});
}

TEST_CASE("backward on non-scalar loss throws") {
  Tensor x = Tensor::from({1.0, 2.0}, {2}, true);
  Tensor y = square(x);
  CHECK_THROWS_AS(backward(y), shape_error);
}

TEST_CASE("backward twice on the same tape throws") {
  Tensor x = Tensor::from({2.0}, {1}, true);
  Tensor y = square(x);
  backward(y);
  CHECK_THROWS_AS(backward(y), value_error);
}

TEST_CASE("grads accumulate across separate tapes without zero_grad") {
  Tensor x = Tensor::from({2.0}, {1}, true);
  backward(square(x));
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("shared subexpression contributes once per path") {
  // f = g(x) + g(x) where both terms are the *same* node
  Tensor x = Tensor::from({1.5}, {1}, true);
  Tensor g = square(x);
  Tensor f = add(g, g);
  backward(f);
  CHECK(x.grad()[0] == doctest::Approx(2.0 * 2.0 * 1.5).epsilon(1e-12));
}

TEST_CASE("grad_check on sum of squares") {
  Tensor x = Tensor::from({1.0, 2.0, 3.0}, {3});
  double err = grad_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check for every op at random inputs, 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed, 0xabc);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor m2 = random_tensor({4, 3}, rng);
    Tensor same = random_tensor({3, 4}, rng);
    Tensor posv = random_tensor({3, 4}, rng, 0.5, 1.5);  // for div/log
    Tensor rowv = random_tensor({4}, rng);

    auto check = [&](const char* name, std::function<Tensor(const Tensor&)> f,
                     const Tensor& at) {
      INFO("op: " << name << " seed " << seed);
      CHECK(grad_check(f, at, 1e-5) < 1e-4);
    };

    check("matmul", [&](const Tensor& t) { return sum(matmul(t, m2)); }, x);
    check("matmul_rhs", [&](const Tensor& t) { return sum(matmul(same, t)); }, m2);
    check("add", [&](const Tensor& t) { return sum(add(t, same)); }, x);
    check("sub", [&](const Tensor& t) { return sum(sub(same, t)); }, x);
    check("mul", [&](const Tensor& t) { return sum(mul(t, same)); }, x);
    check("div_num", [&](const Tensor& t) { return sum(div(t, posv)); }, x);
    check("div_den", [&](const Tensor& t) { return sum(div(same, t)); }, posv);
    check("scale", [&](const Tensor& t) { return sum(scale(t, -2.5)); }, x);
    check("tanh", [&](const Tensor& t) { return sum(tanh_t(t)); }, x);
    check("relu", [&](const Tensor& t) { return sum(square(relu(t))); }, x);
    check("elu", [&](const Tensor& t) { return sum(square(elu(t))); }, x);
    check("sigmoid", [&](const Tensor& t) { return sum(sigmoid(t)); }, x);
    check("exp", [&](const Tensor& t) { return sum(exp_t(t)); }, x);
    check("log", [&](const Tensor& t) { return sum(log_t(t)); }, posv);
    check("square", [&](const Tensor& t) { return sum(square(t)); }, x);
    check("softplus", [&](const Tensor& t) { return sum(softplus(t)); }, x);
    check("mean", [&](const Tensor& t) { return mean(square(t)); }, x);
    check("sum_rows", [&](const Tensor& t) { return sum(square(sum_rows(t))); }, x);
    check("softmax", [&](const Tensor& t) { return sum(square(softmax_rows(t))); }, x);
    check("layer_norm", [&](const Tensor& t) { return sum(square(layer_norm_rows(t))); }, x);
    check("concat", [&](const Tensor& t) { return sum(square(concat_rows(t, same))); }, x);
    check("reshape", [&](const Tensor& t) { return sum(square(reshape(t, {2, 6}))); }, x);
    check("gather", [&](const Tensor& t) { return sum(square(gather_rows(t, {0, 2, 0}))); }, x);
    check("add_rowvec", [&](const Tensor& t) { return sum(square(add_rowvec(t, rowv))); }, x);
    check("add_rowvec_v", [&](const Tensor& t) { return sum(square(add_rowvec(same, t))); },
          rowv);
    check("mul_rowvec", [&](const Tensor& t) { return sum(square(mul_rowvec(t, rowv))); }, x);
    check("mul_rowvec_v", [&](const Tensor& t) { return sum(square(mul_rowvec(same, t))); },
          rowv);
    check("attention_q",
          [&](const Tensor& t) { return sum(square(block_attention(t, same, posv, 3))); }, x);
    check("attention_k",
          [&](const Tensor& t) { return sum(square(block_attention(same, t, posv, 3))); }, x);
    check("attention_v",
          [&](const Tensor& t) { return sum(square(block_attention(same, posv, t, 3))); }, x);
  }
}

TEST_CASE("block attention with zero queries averages values") {
  Tensor q = Tensor::zeros({2, 4});
  Rng rng = make_rng(11);
  Tensor k = random_tensor({2, 4}, rng);
  Tensor v = random_tensor({2, 4}, rng);
  std::vector<double> weights;
  Tensor out = block_attention(q, k, v, 2, &weights);
  for (double w : weights) CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(out(0, j) == doctest::Approx(0.5 * (v(0, j) + v(1, j))).epsilon(1e-12));
}

TEST_CASE("singleton attention is identity") {
  Rng rng = make_rng(12);
  Tensor q = random_tensor({1, 4}, rng);
  Tensor k = random_tensor({1, 4}, rng);
  Tensor v = random_tensor({1, 4}, rng);
  std::vector<double> weights;
  Tensor out = block_attention(q, k, v, 1, &weights);
  CHECK(weights.size() == 1);
  CHECK(weights[0] == 1.0);
  for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == v(0, j));
}

TEST_CASE("adam first step with unit gradient") {
  Tensor p = Tensor::from({0.0}, {1}, true);
  p.grad()[0] = 1.0;
  Adam opt({p}, {});
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradient leaves parameters in place") {
  Tensor p = Tensor::from({0.7}, {1}, true);
  p.grad()[0] = 0.0;
  Adam opt({p}, {});
  opt.step();
  CHECK(std::fabs(p.data()[0] - 0.7) < 1e-8 * 1e-3);
}

TEST_CASE("two identical adam steps move monotonically against the gradient") {
  Tensor p = Tensor::from({0.0}, {1}, true);
  Adam opt({p}, {});
  p.grad()[0] = 1.0;
  opt.step();
  const double after1 = p.data()[0];
  opt.step();
  CHECK(opt.step_count() == 2);
  CHECK(p.data()[0] < after1);
  CHECK(after1 < 0.0);
}

TEST_CASE("adam with lr=0 is an exact no-op") {
  Rng rng = make_rng(5);
  Tensor p = Tensor::from(random_tensor({4, 4}, rng).data(), {4, 4}, true);
  const auto before = p.data();
  for (auto& g : p.grad()) g = 1.7;
  Adam opt({p}, {.lr = 0.0});
  opt.step();
  opt.step();
  CHECK(p.data() == before);
}

TEST_CASE("adam requires populated gradients") {
  Tensor p = Tensor::from({1.0}, {1}, true);
  Adam opt({p}, {});
  CHECK_THROWS_AS(opt.step(), value_error);
}
