#include <cmath>
#include <random>

#include "doctest.h"
#include "omad/gradcheck.hpp"
#include "omad/ops.hpp"
#include "test_util.hpp"

using namespace omad;
using testing::random_tensor;

namespace {

// Scalar probe: weighted sum of a tensor's elements with fixed random
// weights, so every output element influences the loss.
Var<double> probe(Var<double> v, const Tensor<double>& weights) {
  Tensor<double> w(v.shape(), std::vector<double>(weights.data().begin(),
                                                  weights.data().begin() + v.value().size()));
  return sum(mul(v, v.graph()->constant(w)));
}

struct Input {
  std::string name;
  Tensor<double> tensor;
};

// Checks analytic gradients of build(graph, params) against finite
// differences over every element.
template <typename Build>
void check_op(std::vector<Input> inputs, Build build, double tol = 1e-7) {
  std::mt19937_64 rng(99);
  const auto weights = random_tensor<double>(rng, {4096});
  std::vector<Tensor<double>> values;
  for (auto& t : inputs) values.push_back(t.tensor);

  auto evaluate = [&](bool with_grad) {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < values.size(); ++i) vars.push_back(g.parameter(inputs[i].name, values[i]));
    Var<double> loss = probe(build(vars), weights);
    GradMap<double> grads;
    if (with_grad) grads = g.backward(loss);
    return std::pair{loss.value().item(), grads};
  };
  const auto analytic = evaluate(true).second;
  std::vector<ParamView> views;
  for (std::size_t i = 0; i < values.size(); ++i) views.push_back({inputs[i].name, values[i].data()});
  const auto report = finite_diff_check([&] { return evaluate(false).first; }, views, analytic,
                                        GradCheckOptions{1e-5, tol, 0, 0});
  CAPTURE(report.worst.param);
  CAPTURE(report.worst.index);
  CAPTURE(report.max_rel_error);
  CHECK(report.passed);
}

Input named(std::string name, Tensor<double> t) { return {std::move(name), std::move(t)}; }

}  // namespace

TEST_CASE("backward: x^2 at 3 gives 6") {
  Graph<double> g;
  auto x = g.parameter("x", Tensor<double>::scalar(3.0));
  auto grads = g.backward(square(x));
  CHECK(grads.at("x") == std::vector<double>{6.0});
}

TEST_CASE("backward: parameters that do not reach the loss get zeros") {
  Graph<double> g;
  auto x = g.parameter("x", Tensor<double>::scalar(2.0));
  auto p = g.parameter("p", Tensor<double>({5}, 1.0));
  auto unused = add(p, p);
  (void)unused;
  auto grads = g.backward(scale(x, 4.0));
  CHECK(grads.at("x") == std::vector<double>{4.0});
  CHECK(grads.at("p") == std::vector<double>(5, 0.0));
}

TEST_CASE("backward: contract errors") {
  Graph<double> g;
  auto v = g.parameter("v", Tensor<double>({3}, 1.0));
  CHECK_THROWS_AS(g.backward(v), ContractError);
  CHECK_THROWS_AS(g.parameter("v", Tensor<double>::scalar(1.0)), ContractError);
  Graph<double> other;
  auto s = other.parameter("s", Tensor<double>::scalar(1.0));
  CHECK_THROWS_AS(g.backward(s), ContractError);
}

TEST_CASE("backward: non-finite gradient is a numeric error naming the parameter") {
  Graph<double> g;
  auto p = g.parameter("p", Tensor<double>::scalar(1.0));
  set_finite_checks(false);
  auto big = scale(square(scale(p, 1e200)), 1e200);
  set_finite_checks(true);
  try {
    g.backward(big);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("p") != std::string::npos);
  }
}

TEST_CASE("op gradients match finite differences") {
  std::mt19937_64 rng(11);
  SUBCASE("conv2d stride 1 and 2") {
    for (int stride : {1, 2}) {
      check_op({named("x", random_tensor<double>(rng, {2, 6, 6})), named("k", random_tensor<double>(rng, {3, 2, 3, 3}))},
               [stride](auto& v) { return conv2d(v[0], v[1], stride, 1); });
    }
  }
  SUBCASE("conv2d batched") {
    check_op({named("x", random_tensor<double>(rng, {2, 2, 5, 5})), named("k", random_tensor<double>(rng, {2, 2, 3, 3}))},
             [](auto& v) { return conv2d(v[0], v[1], 1, 0); });
  }
  SUBCASE("dense with bias") {
    check_op({named("x", random_tensor<double>(rng, {7})), named("w", random_tensor<double>(rng, {5, 7})),
              named("b", random_tensor<double>(rng, {5}))},
             [](auto& v) { return dense(v[0], v[1], v[2]); });
  }
  SUBCASE("relu and sigmoid") {
    check_op({named("x", random_tensor<double>(rng, {31}, -3, 3))}, [](auto& v) { return relu(v[0]); });
    check_op({named("x", random_tensor<double>(rng, {31}, -3, 3))}, [](auto& v) { return sigmoid(v[0]); });
  }
  SUBCASE("concat, inner product, cosine") {
    check_op({named("a", random_tensor<double>(rng, {6})), named("b", random_tensor<double>(rng, {4}))},
             [](auto& v) { return concat(v[0], v[1]); });
    check_op({named("a", random_tensor<double>(rng, {6})), named("b", random_tensor<double>(rng, {6}))},
             [](auto& v) { return inner_product(v[0], v[1]); });
    check_op({named("a", random_tensor<double>(rng, {6})), named("b", random_tensor<double>(rng, {6}))},
             [](auto& v) { return cosine(v[0], v[1]); });
  }
  SUBCASE("residual add, mul, square, mean") {
    check_op({named("a", random_tensor<double>(rng, {3, 2, 2})), named("b", random_tensor<double>(rng, {2, 2, 2}))},
             [](auto& v) { return add_channel_padded(v[0], v[1]); });
    check_op({named("a", random_tensor<double>(rng, {5})), named("b", random_tensor<double>(rng, {5}))},
             [](auto& v) { return square(mul(v[0], v[1])); });
    check_op({named("a", random_tensor<double>(rng, {})), named("b", random_tensor<double>(rng, {}))},
             [](auto& v) { return mean<double>(std::vector<Var<double>>{v[0], v[1], v[0]}); });
  }
  SUBCASE("binary cross entropy") {
    for (int label : {0, 1}) {
      check_op({named("x", random_tensor<double>(rng, {}))},
               [label](auto& v) { return binary_cross_entropy(sigmoid(v[0]), label); });
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(12);
  Graph<double> g;
  auto x = g.parameter("x", random_tensor<double>(rng, {2, 6, 6}));
  auto k = g.parameter("k", random_tensor<double>(rng, {3, 2, 3, 3}));
  auto w = g.parameter("w", random_tensor<double>(rng, {4, 3}));
  auto feat = global_avg_pool(relu(conv2d(x, k, 2, 1)));
  auto z = dense(feat, w);
  auto l1 = square(inner_product(z, z));
  auto l2 = sigmoid(inner_product(feat, feat));
  auto g1 = g.backward(l1);
  auto g2 = g.backward(l2);
  auto g12 = g.backward(add(l1, l2));
  for (const auto& [name, sum] : g12) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const double expect = g1.at(name)[i] + g2.at(name)[i];
      CHECK(std::abs(sum[i] - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("seeded forward and backward replay bitwise") {
  auto run = [] {
    std::mt19937_64 rng(13);
    Graph<float> g;
    auto x = g.constant(random_tensor<float>(rng, {1, 16, 16}));
    auto k = g.parameter("k", random_tensor<float>(rng, {4, 1, 3, 3}));
    auto w = g.parameter("w", random_tensor<float>(rng, {2, 4}));
    auto out = dense(global_avg_pool(relu(conv2d(x, k, 2, 1))), w);
    auto loss = inner_product(out, out);
    return std::pair{loss.value().item(), g.backward(loss)};
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("finite_diff_check on a quadratic passes at 1e-6") {
  std::vector<double> p{0.5, -1.25, 2.0};
  const std::vector<double> c{3.0, -2.0, 0.5};
  auto f = [&] {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i) s += c[i] * p[i] * p[i] + p[i];
    return s;
  };
  GradMap<double> grad{{"p", {}}};
  for (std::size_t i = 0; i < 3; ++i) grad["p"].push_back(2 * c[i] * p[i] + 1);
  auto report = finite_diff_check(f, {{"p", p}}, grad, {1e-5, 1e-6, 0, 0});
  CHECK(report.passed);
  CHECK(report.checked == 3);

  SUBCASE("a corrupted element fails and is named") {
    grad["p"][1] *= 2;
    auto bad = finite_diff_check(f, {{"p", p}}, grad, {1e-5, 1e-6, 0, 0});
    CHECK_FALSE(bad.passed);
    REQUIRE(bad.failures.size() == 1);
    CHECK(bad.failures[0].param == "p");
    CHECK(bad.failures[0].index == 1);
  }
  SUBCASE("non-finite loss names the parameter") {
    auto nan_f = [] { return std::nan(""); };
    CHECK_THROWS_WITH_AS(finite_diff_check(nan_f, {{"p", p}}, grad, {}), doctest::Contains("p["), NumericError);
  }
  SUBCASE("subsampling draws distinct elements") {
    std::vector<double> big(1000, 0.25);
    GradMap<double> g2{{"big", std::vector<double>(1000, 0.0)}};
    auto r = finite_diff_check([] { return 1.0; }, {{"big", big}}, g2, {1e-5, 1e-6, 200, 5});
    CHECK(r.checked == 200);
    CHECK(r.passed);
  }
}

TEST_CASE("kink recorder separates the two sides of a relu") {
  auto pattern_at = [](double x) {
    KinkRecorder rec;
    Graph<double> g;
    (void)relu(g.constant(Tensor<double>::scalar(x)));
    return rec.pattern();
  };
  CHECK(pattern_at(0.5) == pattern_at(2.0));
  CHECK(pattern_at(-0.5) == pattern_at(-2.0));
  CHECK(pattern_at(0.5) != pattern_at(-0.5));

  KinkRecorder outer;
  CHECK_THROWS_AS(KinkRecorder{}, ContractError);
}

TEST_CASE("finite_diff_check skips probes that straddle a relu kink") {
  // relu(x) at x = 1e-6 with step 1e-5: the central difference sees the
  // secant 0.55 while the derivative is 1.
  std::vector<double> p{1e-6, 0.5};
  auto loss = [&] {
    Graph<double> g;
    auto x = g.constant(Tensor<double>({2}, std::vector<double>(p)));
    return sum(relu(x)).value()[0];
  };
  GradMap<double> grad{{"p", {1.0, 1.0}}};

  auto guarded = finite_diff_check(loss, {{"p", p}}, grad, {1e-5, 1e-6, 0, 0, true});
  CHECK(guarded.passed);
  CHECK(guarded.checked == 1);
  CHECK(guarded.kink_skipped == 1);

  auto raw = finite_diff_check(loss, {{"p", p}}, grad, {1e-5, 1e-6, 0, 0, false});
  CHECK_FALSE(raw.passed);
  CHECK(raw.kink_skipped == 0);
  REQUIRE(raw.failures.size() == 1);
  CHECK(raw.failures[0].index == 0);
}
