#include <doctest.h>

#include <cmath>
#include <random>

#include "levemb/nn/adam.hpp"
#include "levemb/nn/batchnorm.hpp"
#include "levemb/nn/gradcheck.hpp"
#include "levemb/nn/layers.hpp"
#include "unit/helpers.hpp"

using namespace levemb;
using namespace levemb::nn;

namespace {

using P = Parameter<double>;

P param(const std::string& name, const TensorD& t) {
  P p(name, t.shape());
  p.value = t;
  return p;
}

double weighted_sum(const TensorD& y, const TensorD& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

// Direct-sum convolution with zero padding.
TensorD conv_direct(const TensorD& x, const TensorD& w, const TensorD& b) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2), Co = w.dim(0);
  TensorD y({B, Co, L});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t l = 0; l < L; ++l) {
        double acc = b[o];
        for (std::size_t c = 0; c < Ci; ++c)
          for (std::size_t k = 0; k < 3; ++k) {
            const long pos = static_cast<long>(l) + static_cast<long>(k) - 1;
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            acc += w[(o * Ci + c) * 3 + k] * x[(n * Ci + c) * L + static_cast<std::size_t>(pos)];
          }
        y[(n * Co + o) * L + l] = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("conv1d forward matches the direct sum") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    std::uniform_int_distribution<std::size_t> dim(2, 7);
    const std::size_t B = dim(rng), Ci = dim(rng), Co = dim(rng), L = dim(rng) + 1;
    const TensorD x = testing::random_tensor({B, Ci, L}, rng);
    const TensorD w = testing::random_tensor({Co, Ci, 3}, rng);
    const TensorD b = testing::random_tensor({Co}, rng);
    const TensorD y = conv1d_forward(x, w, b);
    const TensorD ref = conv_direct(x, w, b);
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(conv1d_forward(TensorD({1, 2, 4}), TensorD({3, 3, 3}), TensorD({3})), ShapeError);
}

TEST_CASE("layer gradients match central differences") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(2, 6);
  GradCheckOptions opt;
  opt.tolerance = 1e-4;
  for (int rep = 0; rep < 20; ++rep) {
    opt.seed = static_cast<std::uint64_t>(rep);
    const std::size_t B = dim(rng), Ci = dim(rng), Co = dim(rng), L = 2 * dim(rng);

    {  // conv1d
      P x = param("x", testing::random_tensor({B, Ci, L}, rng));
      P w = param("w", testing::random_tensor({Co, Ci, 3}, rng));
      P b = param("b", testing::random_tensor({Co}, rng));
      const TensorD r = testing::random_tensor({B, Co, L}, rng);
      conv1d_backward(x.value, w.value, r, &x.grad, w.grad, b.grad);
      auto loss = [&] { return weighted_sum(conv1d_forward(x.value, w.value, b.value), r); };
      P* ps[] = {&x, &w, &b};
      const auto rep_ = grad_check(loss, ps, opt);
      CHECK_MESSAGE(rep_.passed, rep_.worst, " ", rep_.max_rel_error);
    }
    {  // avgpool1d
      P x = param("x", testing::random_tensor({B, Ci, L + (rep % 2)}, rng));
      const TensorD y = avgpool1d_forward(x.value);
      const TensorD r = testing::random_tensor(y.shape(), rng);
      x.grad = avgpool1d_backward(x.value.shape(), r);
      auto loss = [&] { return weighted_sum(avgpool1d_forward(x.value), r); };
      P* ps[] = {&x};
      CHECK(grad_check(loss, ps, opt).passed);
    }
    {  // relu
      P x = param("x", testing::random_tensor({B, Ci}, rng));
      // Keep inputs away from the kink.
      for (double& v : x.value.data()) v += v > 0 ? 0.1 : -0.1;
      const TensorD r = testing::random_tensor({B, Ci}, rng);
      x.grad = relu_backward(x.value, r);
      auto loss = [&] { return weighted_sum(relu_forward(x.value), r); };
      P* ps[] = {&x};
      CHECK(grad_check(loss, ps, opt).passed);
    }
    {  // linear
      P x = param("x", testing::random_tensor({B, Ci}, rng));
      P w = param("w", testing::random_tensor({Co, Ci}, rng));
      P b = param("b", testing::random_tensor({Co}, rng));
      const TensorD r = testing::random_tensor({B, Co}, rng);
      linear_backward(x.value, w.value, r, &x.grad, w.grad, b.grad);
      auto loss = [&] { return weighted_sum(linear_forward(x.value, w.value, b.value), r); };
      P* ps[] = {&x, &w, &b};
      CHECK(grad_check(loss, ps, opt).passed);
    }
    {  // batchnorm with batch statistics
      BatchNormState<double> st("bn", Co, 1e-9);
      st.gamma.value = testing::random_tensor({Co}, rng);
      st.beta.value = testing::random_tensor({Co}, rng);
      P x = param("x", testing::random_tensor({B + 1, Co}, rng));
      const TensorD r = testing::random_tensor({B + 1, Co}, rng);
      BatchNormCache<double> cache;
      batchnorm1d_forward(x.value, st, Mode::kBatchStats, &cache);
      x.grad = batchnorm1d_backward(r, cache, st);
      auto loss = [&] { return weighted_sum(batchnorm1d_forward(x.value, st, Mode::kBatchStats), r); };
      GradCheckOptions bn = opt;
      bn.tolerance = 1e-3;
      P* ps[] = {&x, &st.gamma, &st.beta};
      const auto res = grad_check(loss, ps, bn);
      CHECK_MESSAGE(res.passed, res.worst, " ", res.max_rel_error);
    }
    {  // batchnorm in eval mode
      BatchNormState<double> st("bn", Co, 1e-5);
      st.running_mean = testing::random_tensor({Co}, rng);
      for (std::size_t f = 0; f < Co; ++f) st.running_var[f] = 0.5 + f;
      P x = param("x", testing::random_tensor({B, Co}, rng));
      const TensorD r = testing::random_tensor({B, Co}, rng);
      BatchNormCache<double> cache;
      batchnorm1d_forward(x.value, st, Mode::kEval, &cache);
      x.grad = batchnorm1d_backward(r, cache, st);
      auto loss = [&] { return weighted_sum(batchnorm1d_forward(x.value, st, Mode::kEval), r); };
      P* ps[] = {&x, &st.gamma, &st.beta};
      CHECK(grad_check(loss, ps, opt).passed);
    }
  }
}

TEST_CASE("batchnorm normalizes and tracks running statistics") {
  std::mt19937_64 rng(3);
  BatchNormState<double> st("bn", 3, 1e-9);
  TensorD x = testing::random_tensor({500, 3}, rng, 4.0);
  for (std::size_t n = 0; n < 500; ++n) x[n * 3 + 1] += 7.0;
  const TensorD y = batchnorm1d_forward(x, st, Mode::kTrain);
  for (std::size_t f = 0; f < 3; ++f) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 500; ++n) m += y[n * 3 + f];
    m /= 500;
    for (std::size_t n = 0; n < 500; ++n) v += (y[n * 3 + f] - m) * (y[n * 3 + f] - m);
    v /= 500;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(st.running_mean[1] == doctest::Approx(0.7).epsilon(0.05));
  CHECK_THROWS_AS(batchnorm1d_forward(TensorD({1, 3}), st, Mode::kTrain), ShapeError);
  CHECK_NOTHROW(batchnorm1d_forward(TensorD({1, 3}), st, Mode::kEval));
}

namespace {

double normalized_variance(double input_var, double eps) {
  BatchNormState<double> st("bn", 1, eps);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, std::sqrt(input_var));
  TensorD x({4096, 1});
  for (double& v : x.data()) v = n(rng);
  double m = 0;
  for (double v : x.data()) m += v;
  m /= 4096;
  double s = 0;
  for (double v : x.data()) s += (v - m) * (v - m);
  s /= 4096;
  // Rescale to the exact target variance.
  for (double& v : x.data()) v = (v - m) * std::sqrt(input_var / s);
  const TensorD y = batchnorm1d_forward(x, st, Mode::kBatchStats);
  double out = 0;
  for (double v : y.data()) out += v * v;
  return out / 4096;
}

}  // namespace

TEST_CASE("small eps avoids collapsing low-variance features") {
  // Variance 1e-6: eps 1e-9 keeps unit scale, eps 1e-5 shrinks it ~11x.
  CHECK(normalized_variance(1e-6, 1e-9) == doctest::Approx(1.0).epsilon(2e-3));
  CHECK(normalized_variance(1e-6, 1e-5) == doctest::Approx(1.0 / 11.0).epsilon(1e-3));
  // Variance 1e-12: both shrink, but eps 1e-9 keeps 10^4 times more variance.
  const double small = normalized_variance(1e-12, 1e-9);
  const double large = normalized_variance(1e-12, 1e-5);
  CHECK(small == doctest::Approx(1e-12 / (1e-12 + 1e-9)).epsilon(1e-6));
  CHECK(small / large == doctest::Approx(1e4).epsilon(1e-3));
}

TEST_CASE("adam first step moves each weight by lr against its gradient sign") {
  Parameter<double> p("w", {4});
  p.value = TensorD({4}, std::vector<double>{1.0, -2.0, 0.5, 3.0});
  p.grad = TensorD({4}, std::vector<double>{0.3, -5.0, 1e-3, 0.0});
  Parameter<double>* ps[] = {&p};
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step<double>(ps, cfg, 1);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01 * 5.0 / (5.0 + 1e-8)));
  CHECK(p.value[2] == doctest::Approx(0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)));
  CHECK(p.value[3] == 3.0);
  for (double g : p.grad.data()) CHECK(g == 0.0);
}

TEST_CASE("adam second step follows the bias-corrected recurrence") {
  Parameter<double> p("w", {1});
  Parameter<double>* ps[] = {&p};
  AdamConfig cfg;
  Adam<double> opt(cfg);
  p.grad[0] = 2.0;
  opt.step(ps);
  p.grad[0] = -1.0;
  opt.step(ps);
  const double m1 = 0.1 * 2.0, v1 = 0.001 * 4.0;
  const double m2 = 0.9 * m1 + 0.1 * -1.0, v2 = 0.999 * v1 + 0.001 * 1.0;
  const double x1 = -cfg.lr * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + cfg.eps);
  const double x2 = x1 - cfg.lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + cfg.eps);
  CHECK(p.value[0] == doctest::Approx(x2).epsilon(1e-12));
  CHECK(opt.steps() == 2);
}

TEST_CASE("adam refuses non-finite gradients without touching parameters") {
  Parameter<double> a("a", {2}), b("b", {2});
  a.grad[0] = 1.0;
  b.grad[1] = std::nan("");
  Parameter<double>* ps[] = {&a, &b};
  try {
    adam_step<double>(ps, {}, 1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(a.value[0] == 0.0);
  CHECK_THROWS_AS(adam_step<double>(ps, {}, 0), UsageError);
}
