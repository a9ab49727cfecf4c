#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/graph.hpp"

#include <functional>

using namespace hpm;
using namespace hpm::ag;

namespace {

// central finite differences on a scalar-valued builder
double fd_check(std::vector<Var<Real>> leaves,
                const std::function<Var<Real>()>& build, double h = 1e-6) {
  Var<Real> loss = build();
  backward(loss);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    RMat g_auto = leaf.grad();
    for (Eigen::Index i = 0; i < leaf.rows(); ++i)
      for (Eigen::Index j = 0; j < leaf.cols(); ++j) {
        const double orig = leaf.value()(i, j);
        leaf.value()(i, j) = orig + h;
        const double fp = build().value()(0, 0);
        leaf.value()(i, j) = orig - h;
        const double fm = build().value()(0, 0);
        leaf.value()(i, j) = orig;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(g_auto(i, j)), 1e-8});
        worst = std::max(worst, std::abs(fd - g_auto(i, j)) / denom);
      }
  }
  return worst;
}

RMat randm(Rng& rng, int r, int c, double s = 1.0) {
  RMat m(r, c);
  rng.fill_normal(m, s);
  return m;
}

}  // namespace

TEST_CASE("matmul/add/tanh chain matches finite differences") {
  Rng rng(1);
  auto a = Var<Real>::leaf(randm(rng, 3, 4), true);
  auto b = Var<Real>::leaf(randm(rng, 4, 2), true);
  auto c = Var<Real>::leaf(randm(rng, 1, 2), true);
  auto build = [&] { return mean_all(tanh_(add_rowvec(matmul(a, b), c))); };
  CHECK(fd_check({a, b, c}, build) < 1e-6);
}

TEST_CASE("softmax_rows with additive mask") {
  Rng rng(2);
  auto x = Var<Real>::leaf(randm(rng, 3, 5), true);
  RMat bias = RMat::Zero(3, 5);
  bias.col(4).setConstant(-1e9);
  Rng wrng(22);
  auto weights = constant<Real>(randm(wrng, 3, 5));
  auto build = [&] { return mean_all(cmul(softmax_rows(x, bias), weights)); };
  auto w = softmax_rows(x, bias);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(w.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.value()(i, 4) == 0.0);  // exp(-1e9) underflows to exactly 0
  }
  CHECK(fd_check({x}, build) < 1e-6);
}

TEST_CASE("layer_norm_rows gradient") {
  Rng rng(3);
  auto x = Var<Real>::leaf(randm(rng, 4, 6), true);
  auto g = Var<Real>::leaf(randm(rng, 1, 6), true);
  auto b = Var<Real>::leaf(randm(rng, 1, 6), true);
  auto build = [&] { return mean_all(cmul(layer_norm_rows(x, g, b), x)); };
  CHECK(fd_check({x, g, b}, build) < 1e-5);
}

TEST_CASE("unfold_rows and conv via matmul") {
  Rng rng(4);
  auto x = Var<Real>::leaf(randm(rng, 5, 3), true);
  auto w = Var<Real>::leaf(randm(rng, 9, 2), true);  // k=3, Cin=3, Cout=2
  auto build = [&] { return mean_all(abs_(matmul(unfold_rows(x, 3), w))); };
  CHECK(fd_check({x, w}, build) < 1e-6);
}

TEST_CASE("conv_transpose_rows geometry and gradient") {
  Rng rng(5);
  auto x = Var<Real>::leaf(randm(rng, 4, 3), true);
  auto w = Var<Real>::leaf(randm(rng, 10 * 3, 2), true);
  auto y = conv_transpose_rows(x, w, 3, 10);
  CHECK(y.rows() == (4 - 1) * 3 + 10);
  CHECK(y.cols() == 2);
  auto build = [&] {
    return mean_all(cmul(conv_transpose_rows(x, w, 3, 10),
                         conv_transpose_rows(x, w, 3, 10)));
  };
  CHECK(fd_check({x, w}, build) < 1e-5);
}

TEST_CASE("gather/fit/concat/max/ce ops") {
  Rng rng(6);
  auto x = Var<Real>::leaf(randm(rng, 4, 3), true);
  auto build = [&] {
    auto g = gather_rows(x, {0, 2, 2, 1});
    auto f = fit_rows(g, 6);
    auto cc = concat_cols(f, relu(f));
    auto m = colwise_max(cc);
    return cross_entropy_logits(m, 2);
  };
  CHECK(fd_check({x}, build) < 1e-6);
}

TEST_CASE("l2_normalize_rows") {
  Rng rng(7);
  auto x = Var<Real>::leaf(randm(rng, 3, 5), true);
  auto y = l2_normalize_rows(x);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(y.value().row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  auto build = [&] { return mean_all(cmul(l2_normalize_rows(x), x)); };
  CHECK(fd_check({x}, build) < 1e-6);
}

TEST_CASE("mul_rows masks rows exactly") {
  Rng rng(8);
  auto x = Var<Real>::leaf(randm(rng, 4, 3), true);
  RVec w(4);
  w << 1, 0, 1, 0;
  auto y = mul_rows(x, w);
  CHECK(y.value().row(1).cwiseAbs().maxCoeff() == 0.0);
  auto build = [&] { return mean_all(cmul(mul_rows(x, w), x)); };
  CHECK(fd_check({x}, build) < 1e-6);
}
