// tests/test_autodiff.cc

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mgf/autodiff.hpp"
#include "mgf/error.hpp"

using mgf::Array;
using mgf::Error;
using mgf::Rng;
namespace ad = mgf::ad;

namespace {

void check_close(const Array& a, const Array& b, double tol) {
  REQUIRE(a.same_shape(b));
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(std::abs(a.at(i) - b.at(i)) <= tol);
}

void check_exact(const Array& a, const Array& b) {
  REQUIRE(a.same_shape(b));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

// Builds the graph twice: once for backward(), once per finite-difference
// probe. Returns the worst relative error over all sampled coordinates.
double fd_max_err(
    const std::function<ad::Tensor(const std::vector<ad::Tensor>&)>& build,
    const std::vector<Array>& params, uint64_t seed = 1) {
  std::vector<ad::Tensor> leaves;
  for (const auto& p : params) leaves.push_back(ad::leaf(p));
  ad::Tensor loss = build(leaves);
  ad::backward(loss);
  std::vector<Array> analytic;
  for (auto& l : leaves) {
    REQUIRE(l->has_grad);
    analytic.push_back(l->grad);
  }
  auto f = [&build](const std::vector<Array>& ps) {
    std::vector<ad::Tensor> ls;
    ls.reserve(ps.size());
    for (const auto& p : ps) ls.push_back(ad::leaf(p));
    return build(ls)->value.at(0);
  };
  ad::FdOptions opt;
  opt.seed = seed;
  ad::FdReport rep = ad::finite_diff_check(f, params, analytic, opt);
  CHECK(rep.checked > 0);
  CHECK(rep.skipped == 0);
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  auto a = ad::leaf(Array({3}, {1.0, -2.0, 3.0}));
  auto b = ad::leaf(Array({3}, {4.0, 5.0, -6.0}));
  check_exact(ad::add(a, b)->value, Array({3}, {5.0, 3.0, -3.0}));
  check_exact(ad::sub(a, b)->value, Array({3}, {-3.0, -7.0, 9.0}));
  check_exact(ad::mul(a, b)->value, Array({3}, {4.0, -10.0, -18.0}));
  check_exact(ad::add_scalar(a, 1.5)->value, Array({3}, {2.5, -0.5, 4.5}));
  check_exact(ad::mul_scalar(a, -2.0)->value, Array({3}, {-2.0, 4.0, -6.0}));
  check_exact(ad::abs(a)->value, Array({3}, {1.0, 2.0, 3.0}));
  check_exact(ad::relu(a)->value, Array({3}, {1.0, 0.0, 3.0}));
  check_exact(ad::clamp(a, -1.0, 2.0)->value, Array({3}, {1.0, -1.0, 2.0}));
  check_exact(ad::powc(a, 2.0)->value, Array({3}, {1.0, 4.0, 9.0}));
  check_close(ad::log(ad::exp(a))->value, a->value, 1e-14);
}

TEST_CASE("gelu matches the gaussian cdf form") {
  auto x = ad::leaf(Array({3}, {0.0, 1.0, -10.0}));
  Array y = ad::gelu(x)->value;
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(std::abs(y.at(2)) < 1e-9);
}

TEST_CASE("sum of squares has gradient exactly 2w") {
  Rng rng(1);
  Array w = Array::random_normal({4, 5}, 1.0, rng);
  auto wl = ad::leaf(w);
  ad::backward(ad::sum_all(ad::mul(wl, wl)));
  Array expected(w.shape());
  for (int64_t i = 0; i < w.numel(); ++i) expected.at(i) = 2.0 * w.at(i);
  check_exact(wl->grad, expected);
}

TEST_CASE("shared subexpressions accumulate gradient") {
  Array x({3}, {1.0, -2.0, 0.5});
  auto xl = ad::leaf(x);
  auto z = ad::mul(xl, xl);
  ad::backward(ad::sum_all(ad::add(z, z)));
  Array expected({3}, {4.0, -8.0, 2.0});
  check_exact(xl->grad, expected);
}

TEST_CASE("softmax of zeros is uniform and stable for huge logits") {
  auto z = ad::leaf(Array({1, 3}));
  Array p = ad::softmax_rows(z)->value;
  for (int64_t i = 0; i < 3; ++i) CHECK(p.at(i) == 1.0 / 3.0);

  auto big = ad::leaf(Array({1, 3}, {1000.0, 1000.0, 1000.0}));
  Array pb = ad::softmax_rows(big)->value;
  for (int64_t i = 0; i < 3; ++i) CHECK(pb.at(i) == 1.0 / 3.0);
}

TEST_CASE("logsumexp values") {
  auto a = ad::leaf(Array({1, 2}, {0.0, std::log(3.0)}));
  CHECK(ad::logsumexp_rows(a)->value.at(0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  auto big = ad::leaf(Array({1, 2}, {1000.0, 1000.0}));
  CHECK(ad::logsumexp_rows(big)->value.at(0) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("layer_norm of a constant row is zero") {
  auto a = ad::leaf(Array::full({2, 6}, 3.7));
  Array y = ad::layer_norm_rows(a, 1e-5)->value;
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.at(i)) < 1e-10);
}

TEST_CASE("repeat_rows interleaves copies of each row") {
  auto a = ad::leaf(Array({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Array r = ad::repeat_rows(a, 2)->value;
  check_exact(r, Array({4, 2}, {1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0}));
}

TEST_CASE("duplicate gather indices accumulate gradient") {
  auto a = ad::leaf(Array({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
  ad::backward(ad::sum_all(ad::gather_rows(a, {1, 1})));
  check_exact(a->grad, Array({3, 2}, {0.0, 0.0, 2.0, 2.0, 0.0, 0.0}));
}

TEST_CASE("waveform conv arithmetic: 32000 samples give 200 steps and back") {
  CHECK(ad::conv1d_output_length(32000, 320, 160, 80) == 200);

  Rng rng(2);
  auto x = ad::leaf(Array::random_normal({32000, 1}, 0.1, rng));
  auto w = ad::leaf(Array::random_normal({320, 2}, 0.01, rng));
  auto b = ad::leaf(Array({2}));
  auto y = ad::conv1d(x, w, b, 320, 160, 80);
  CHECK(y->value.dim(0) == 200);
  CHECK(y->value.dim(1) == 2);

  auto xt = ad::leaf(Array::random_normal({200, 2}, 0.1, rng));
  auto wt = ad::leaf(Array::random_normal({2, 320}, 0.01, rng));
  auto bt = ad::leaf(Array({1}));
  auto z = ad::conv_transpose1d(xt, wt, bt, 320, 160, 80);
  CHECK(z->value.dim(0) == 32000);
  CHECK(z->value.dim(1) == 1);
}

TEST_CASE("conv1d matches a direct convolution") {
  Rng rng(3);
  const int64_t t_in = 9, c_in = 2, c_out = 3, kernel = 3, stride = 2, pad = 1;
  Array x = Array::random_normal({t_in, c_in}, 1.0, rng);
  Array w = Array::random_normal({kernel * c_in, c_out}, 1.0, rng);
  Array b = Array::random_normal({c_out}, 1.0, rng);
  Array y =
      ad::conv1d(ad::leaf(x), ad::leaf(w), ad::leaf(b), kernel, stride, pad)
          ->value;
  int64_t t_out = ad::conv1d_output_length(t_in, kernel, stride, pad);
  REQUIRE(y.dim(0) == t_out);
  for (int64_t t = 0; t < t_out; ++t) {
    for (int64_t co = 0; co < c_out; ++co) {
      double acc = b.at(co);
      for (int64_t k = 0; k < kernel; ++k) {
        int64_t src = t * stride - pad + k;
        if (src < 0 || src >= t_in) continue;
        for (int64_t ci = 0; ci < c_in; ++ci)
          acc += x.at(src, ci) * w.at(k * c_in + ci, co);
      }
      CHECK(y.at(t, co) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv_transpose1d matches its direct form") {
  Rng rng(4);
  const int64_t t_in = 5, c_in = 3, c_out = 2, kernel = 2, stride = 2, pad = 1;
  Array x = Array::random_normal({t_in, c_in}, 1.0, rng);
  Array w = Array::random_normal({c_in, kernel * c_out}, 1.0, rng);
  Array b = Array::random_normal({c_out}, 1.0, rng);
  Array y = ad::conv_transpose1d(ad::leaf(x), ad::leaf(w), ad::leaf(b), kernel,
                                 stride, pad)
                ->value;
  int64_t t_out = (t_in - 1) * stride + kernel - 2 * pad;
  REQUIRE(y.dim(0) == t_out);
  Array ref({t_out, c_out});
  for (int64_t t = 0; t < t_in; ++t)
    for (int64_t k = 0; k < kernel; ++k) {
      int64_t dst = t * stride - pad + k;
      if (dst < 0 || dst >= t_out) continue;
      for (int64_t ci = 0; ci < c_in; ++ci)
        for (int64_t co = 0; co < c_out; ++co)
          ref.at(dst, co) += x.at(t, ci) * w.at(ci, k * c_out + co);
    }
  for (int64_t t = 0; t < t_out; ++t)
    for (int64_t co = 0; co < c_out; ++co)
      CHECK(y.at(t, co) == doctest::Approx(ref.at(t, co) + b.at(co)).epsilon(1e-12));
}

TEST_CASE("finite differences: smooth elementwise chain") {
  Rng rng(10);
  std::vector<Array> params = {Array::random_normal({2, 3}, 0.8, rng),
                               Array::random_normal({2, 3}, 0.8, rng)};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto t = ad::add(ad::exp(ad::mul_scalar(p[1], 0.3)),
                         ad::powc(ad::add_scalar(ad::mul(p[0], p[0]), 1.0), 0.5));
        return ad::mean_all(ad::mul(ad::gelu(p[0]), t));
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: kinked ops away from their kinks") {
  std::vector<Array> params = {
      Array({6}, {0.25, 0.4, 0.7, 0.9, 1.2, 2.0})};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto r = ad::relu(ad::add_scalar(p[0], -0.5));
        auto c = ad::clamp(ad::log(p[0]), -0.6, 0.6);
        return ad::sum_all(ad::add(ad::mul(r, c), ad::abs(ad::add_scalar(p[0], -1.05))));
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("clamp passes no gradient in the saturated region") {
  auto x = ad::leaf(Array({2}, {5.0, 0.5}));
  ad::backward(ad::sum_all(ad::clamp(x, 0.0, 1.0)));
  check_exact(x->grad, Array({2}, {0.0, 1.0}));
}

TEST_CASE("finite differences: shape plumbing") {
  Rng rng(11);
  std::vector<Array> params = {Array::random_normal({3, 4}, 1.0, rng),
                               Array::random_normal({4, 3}, 1.0, rng)};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto t = ad::reshape(ad::transpose(p[0]), {4, 3});
        auto m = ad::mul(t, p[1]);
        auto c = ad::concat_rows({ad::slice_rows(m, 0, 2), ad::slice_rows(m, 1, 3)});
        auto d = ad::concat_cols(
            {ad::slice_cols(c, 0, 2), ad::slice_cols(c, 1, 2)});
        auto g = ad::gather_rows(d, {0, 4, 4, 2});
        auto r = ad::repeat_rows(g, 2);
        return ad::mean_all(ad::mul(r, r));
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: reductions") {
  Rng rng(12);
  std::vector<Array> params = {Array::random_normal({3, 5}, 1.0, rng)};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto a = ad::sum_all(ad::powc(ad::sum_rows(p[0]), 2.0));
        auto b = ad::sum_all(ad::powc(ad::sum_cols(p[0]), 2.0));
        return ad::add(a, ad::add(b, ad::mean_all(p[0])));
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: dense layers, norms and softmax") {
  Rng rng(13);
  std::vector<Array> params = {
      Array::random_normal({4, 3}, 1.0, rng), Array::random_normal({3, 5}, 0.7, rng),
      Array::random_normal({5}, 0.5, rng), Array::random_normal({5}, 0.5, rng)};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto h = ad::add_rowvec(ad::matmul(p[0], p[1]), p[2]);
        auto n = ad::layer_norm_rows(h, 1e-5);
        auto sm = ad::softmax_rows(ad::mul_rowvec(n, p[3]));
        auto lse = ad::logsumexp_rows(h);
        auto tp = ad::take_per_row(sm, {0, 2, 4, 1});
        return ad::add(ad::mean_all(tp), ad::mean_all(lse));
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: convolutions") {
  Rng rng(14);
  std::vector<Array> params = {
      Array::random_normal({10, 2}, 1.0, rng), Array::random_normal({4, 3}, 0.7, rng),
      Array::random_normal({3}, 0.5, rng)};
  double err = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto y = ad::conv1d(p[0], p[1], p[2], 2, 2, 1);
        return ad::mean_all(ad::powc(y, 2.0));
      },
      params);
  CHECK(err < 1e-6);

  std::vector<Array> tparams = {
      Array::random_normal({5, 3}, 1.0, rng), Array::random_normal({3, 4}, 0.7, rng),
      Array::random_normal({2}, 0.5, rng)};
  double terr = fd_max_err(
      [](const std::vector<ad::Tensor>& p) {
        auto y = ad::conv_transpose1d(p[0], p[1], p[2], 2, 2, 1);
        return ad::mean_all(ad::mul(y, y));
      },
      tparams);
  CHECK(terr < 1e-6);
}

TEST_CASE("finite differences: masked squared error and scalar scaling") {
  Rng rng(15);
  Array target = Array::random_normal({4, 3}, 1.0, rng);
  std::vector<Array> params = {Array::random_normal({4, 3}, 1.0, rng),
                               Array({1}, {0.7})};
  double err = fd_max_err(
      [target](const std::vector<ad::Tensor>& p) {
        auto e = ad::masked_sq_error(p[0], target, {0, 2});
        return ad::scale(p[1], e);
      },
      params);
  CHECK(err < 1e-6);
}

TEST_CASE("constants receive no gradient") {
  auto x = ad::leaf(Array({3}, {1.0, 2.0, 3.0}));
  auto c = ad::constant(Array({3}, {2.0, -1.0, 0.5}));
  CHECK_FALSE(c->requires_grad);
  ad::backward(ad::sum_all(ad::mul(x, c)));
  CHECK_FALSE(c->has_grad);
  check_exact(x->grad, c->value);
}

TEST_CASE("backward requires a scalar root") {
  auto x = ad::leaf(Array({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto rows = ad::sum_rows(x);
  CHECK_THROWS_AS(ad::backward(rows), Error);
}

TEST_CASE("non-finite outputs raise numeric failure naming the op") {
  auto neg = ad::leaf(Array({1}, {-1.0}));
  try {
    ad::log(neg);
    FAIL("expected numeric failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("numeric failure in op log") !=
          std::string::npos);
  }
  try {
    ad::powc(neg, 0.5);
    FAIL("expected numeric failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("numeric failure in op powc") !=
          std::string::npos);
  }
}

TEST_CASE("shape mismatches name the op and both shapes") {
  auto a = ad::leaf(Array({2, 3}));
  auto b = ad::leaf(Array({3, 2}));
  try {
    ad::add(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("op add") != std::string::npos);
    CHECK(msg.find("[2,3] vs [3,2]") != std::string::npos);
  }
  auto c = ad::leaf(Array({2, 3}));
  CHECK_THROWS_AS(ad::matmul(a, c), Error);
}

TEST_CASE("identical seeds produce bitwise identical losses and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    auto x = ad::leaf(Array::random_normal({5, 4}, 1.0, rng));
    auto w = ad::leaf(Array::random_normal({4, 3}, 0.5, rng));
    auto b = ad::leaf(Array::random_normal({3}, 0.1, rng));
    auto h = ad::gelu(ad::add_rowvec(ad::matmul(x, w), b));
    auto loss = ad::mean_all(ad::mul(ad::softmax_rows(h), h));
    ad::backward(loss);
    return std::make_tuple(loss->value.at(0), x->grad, w->grad, b->grad);
  };
  auto [l1, gx1, gw1, gb1] = run(77);
  auto [l2, gx2, gw2, gb2] = run(77);
  CHECK(l1 == l2);
  check_exact(gx1, gx2);
  check_exact(gw1, gw2);
  check_exact(gb1, gb2);
}

TEST_CASE("gradients are linear in the objective") {
  Rng rng(16);
  Array x = Array::random_normal({3, 3}, 1.0, rng);
  auto grad_of = [&x](double a, double b) {
    auto xl = ad::leaf(x);
    auto l1 = ad::sum_all(ad::mul(xl, xl));
    auto l2 = ad::mean_all(ad::gelu(xl));
    ad::backward(ad::add(ad::mul_scalar(l1, a), ad::mul_scalar(l2, b)));
    return xl->grad;
  };
  Array g10 = grad_of(1.0, 0.0);
  Array g01 = grad_of(0.0, 1.0);
  Array gab = grad_of(2.0, 3.0);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(gab.at(i) ==
          doctest::Approx(2.0 * g10.at(i) + 3.0 * g01.at(i)).epsilon(1e-10));
}

TEST_CASE("finite_diff_check reports coordinates it had to skip") {
  auto f = [](const std::vector<Array>& ps) {
    auto x = ad::leaf(ps[0]);
    return ad::log(x)->value.at(0);
  };
  std::vector<Array> params = {Array({1}, {1e-6})};
  std::vector<Array> analytic = {Array({1}, {1e6})};
  ad::FdOptions opt;  // eps 1e-5 pushes the probe negative
  ad::FdReport rep = ad::finite_diff_check(f, params, analytic, opt);
  CHECK(rep.skipped == 1);
  CHECK(rep.checked == 0);
}
