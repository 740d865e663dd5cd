#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "deqn/network.hpp"

using namespace deqn;

namespace {

NetworkSpec mlp_spec(std::vector<std::string> inputs, std::vector<int> hidden,
                     Activation act = Activation::Tanh) {
  NetworkSpec s;
  s.kind = NetworkKind::MLP;
  s.input_names = std::move(inputs);
  s.hidden_sizes = std::move(hidden);
  s.activation = act;
  return s;
}

NetworkSpec kan_spec(std::vector<std::string> inputs, std::vector<int> hidden,
                     int G = 5, int k = 3) {
  NetworkSpec s;
  s.kind = NetworkKind::KAN;
  s.input_names = std::move(inputs);
  s.hidden_sizes = std::move(hidden);
  s.grid_size = G;
  s.spline_order = k;
  return s;
}

}  // namespace

TEST_CASE("parameter counts") {
  // 1 input, 4 hidden layers of 30, 1 output:
  // (1*30+30) + 3*(30*30+30) + (30*1+1) = 60 + 2790 + 31 = 2881
  CHECK(param_count(mlp_spec({"x"}, {30, 30, 30, 30})) == 2881);
  // KAN layer cost: in*out base weights + in*(G+k)*out spline coefficients.
  // [1 -> 5 -> 5 -> 1], G=5, k=3: (5+40) + (25+200) + (5+40) = 315
  CHECK(param_count(kan_spec({"x"}, {5, 5})) == 315);
  // Parameter count matches the materialized tensors.
  for (const NetworkSpec& s :
       {mlp_spec({"x", "y"}, {7, 3}), kan_spec({"x"}, {4}, 6, 2)}) {
    NetworkState st = init_network(s, 1);
    std::int64_t n = 0;
    for (const auto& t : st.tensors) n += static_cast<std::int64_t>(t.size());
    CHECK(n == param_count(s));
  }
}

TEST_CASE("initialization is seeded and in the Xavier range") {
  NetworkSpec s = mlp_spec({"x"}, {30, 30});
  NetworkState a = init_network(s, 7);
  NetworkState b = init_network(s, 7);
  NetworkState c = init_network(s, 8);
  REQUIRE(a.tensors.size() == b.tensors.size());
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    all_same &= a.tensors[i] == b.tensors[i];
    any_diff |= a.tensors[i] != c.tensors[i];
  }
  CHECK(all_same);
  CHECK(any_diff);

  // Biases are zero; weights fall inside the layer's Xavier-uniform bound.
  CHECK(a.tensors[1] == std::vector<double>(30, 0.0));
  const double bound0 = std::sqrt(6.0 / (1 + 30));
  for (double w : a.tensors[0]) CHECK(std::fabs(w) <= bound0);
  const double bound1 = std::sqrt(6.0 / (30 + 30));
  for (double w : a.tensors[2]) CHECK(std::fabs(w) <= bound1);
}

TEST_CASE("validate rejects malformed specs") {
  CHECK_THROWS_AS(mlp_spec({}, {8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(mlp_spec({"x"}, {0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(kan_spec({"x"}, {4}, 0, 3).validate(),
                  std::invalid_argument);
  NetworkSpec bad = kan_spec({"x"}, {4});
  bad.grid_range = {1.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(mlp_spec({"x"}, {8}).validate());
}

TEST_CASE("mlp forward matches a hand-rolled evaluation") {
  NetworkSpec s = mlp_spec({"x"}, {3});
  NetworkState st;
  st.tensors = {{0.5, -1.0, 2.0},        // W0: 1x3
                {0.1, 0.2, -0.3},        // b0
                {1.0, -2.0, 0.5},        // W1: 3x1
                {0.25}};                 // b1
  Tape t;
  NetworkBinding bind = bind_network(s, st, t);
  Var X = t.leaf({2, 1}, std::vector<double>{0.7, -1.3}, true);
  Var y = network_forward(s, bind, X);
  REQUIRE(y.shape() == Shape{2, 1});
  for (int r = 0; r < 2; ++r) {
    const double x = r == 0 ? 0.7 : -1.3;
    const double h0 = std::tanh(0.5 * x + 0.1);
    const double h1 = std::tanh(-1.0 * x + 0.2);
    const double h2 = std::tanh(2.0 * x - 0.3);
    const double want = h0 * 1.0 + h1 * -2.0 + h2 * 0.5 + 0.25;
    CHECK(y.data()[r] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("output transforms keep the advertised ranges") {
  for (OutputTransform ot : {OutputTransform::Softplus, OutputTransform::Exp}) {
    NetworkSpec s = mlp_spec({"x"}, {8});
    s.output_transform = ot;
    NetworkState st = init_network(s, 3);
    Tape t;
    NetworkBinding bind = bind_network(s, st, t);
    std::vector<double> xs;
    for (int i = 0; i < 64; ++i) xs.push_back(-4.0 + i * (8.0 / 63));
    Var y = network_forward(s, bind, t.leaf({64, 1}, xs, true));
    for (double v : y.data()) CHECK(v > 0.0);
  }
}

TEST_CASE("spline basis is a partition of unity inside the grid") {
  NetworkSpec s = kan_spec({"x"}, {4}, 5, 3);
  Tape t;
  std::vector<double> xs;
  for (int i = 0; i < 41; ++i) xs.push_back(-0.95 + i * (1.9 / 40));
  Var B = kan_spline_basis(s, t, t.leaf({41, 1}, xs, false));
  REQUIRE(B.shape() == Shape{41, 5 + 3});
  auto d = B.data();
  for (int r = 0; r < 41; ++r) {
    double sum = 0;
    for (int j = 0; j < 8; ++j) {
      CHECK(d[r * 8 + j] >= -1e-12);
      sum += d[r * 8 + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("spline basis order 1 reproduces hat functions") {
  // k=1 on grid [-1, 1] with G=2: knots at -2, -1, 0, 1, 2. The hat centered
  // at 0 evaluates to 0.5 at x = +/-0.5 and 1 at 0.
  NetworkSpec s = kan_spec({"x"}, {2}, 2, 1);
  Tape t;
  Var B = kan_spline_basis(
      s, t, t.leaf({3, 1}, std::vector<double>{-0.5, 0.0, 0.5}, false));
  REQUIRE(B.shape() == Shape{3, 3});
  auto d = B.data();
  CHECK(d[0 * 3 + 1] == doctest::Approx(0.5));  // hat at 0, x=-0.5
  CHECK(d[1 * 3 + 1] == doctest::Approx(1.0));  // hat at 0, x=0
  CHECK(d[2 * 3 + 1] == doctest::Approx(0.5));  // hat at 0, x=0.5
  CHECK(d[0 * 3 + 0] == doctest::Approx(0.5));  // hat at -1, x=-0.5
  CHECK(d[2 * 3 + 2] == doctest::Approx(0.5));  // hat at 1, x=0.5
}

TEST_CASE("kan forward runs and is differentiable in its inputs") {
  NetworkSpec s = kan_spec({"x"}, {5, 5});
  NetworkState st = init_network(s, 11);
  Tape t;
  NetworkBinding bind = bind_network(s, st, t);
  std::vector<double> xs{-0.8, -0.2, 0.3, 0.9};
  Var X = t.leaf({4, 1}, xs, true);
  Var y = network_forward(s, bind, X);
  REQUIRE(y.shape() == Shape{4, 1});
  for (double v : y.data()) CHECK(std::isfinite(v));

  Var g = grad(t.sum_all(y), std::span<const Var>(&X, 1))[0];
  // Finite-difference check of dy/dx per row.
  for (int r = 0; r < 4; ++r) {
    auto shift = [&](double h) {
      Tape t2;
      NetworkBinding b2 = bind_network(s, st, t2, false);
      auto xs2 = xs;
      xs2[r] += h;
      Var y2 = network_forward(s, b2, t2.leaf({4, 1}, xs2, false));
      return y2.data()[r];
    };
    const double want = (shift(1e-6) - shift(-1e-6)) / 2e-6;
    CHECK(g.data()[r] == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("mlp gradient with respect to parameters matches finite differences") {
  NetworkSpec s = mlp_spec({"x"}, {4}, Activation::Silu);
  NetworkState st = init_network(s, 5);
  std::vector<double> xs{0.3, -0.6};

  auto loss_at = [&](const NetworkState& state) {
    Tape t;
    NetworkBinding b = bind_network(s, state, t, false);
    Var y = network_forward(s, b, t.leaf({2, 1}, xs, false));
    return t.sum_all(t.square(y)).item();
  };

  Tape t;
  NetworkBinding bind = bind_network(s, st, t);
  Var y = network_forward(s, bind, t.leaf({2, 1}, xs, false));
  Var loss = t.sum_all(t.square(y));
  auto g = grad(loss, bind.tensors);
  for (std::size_t ti = 0; ti < st.tensors.size(); ++ti)
    for (std::size_t i = 0; i < st.tensors[ti].size(); ++i) {
      NetworkState p = st, m = st;
      p.tensors[ti][i] += 1e-6;
      m.tensors[ti][i] -= 1e-6;
      const double want = (loss_at(p) - loss_at(m)) / 2e-6;
      CHECK(g[ti].data()[i] == doctest::Approx(want).epsilon(1e-4));
    }
}

TEST_CASE("serialization round-trips bitwise") {
  for (const NetworkSpec& s :
       {mlp_spec({"x", "t"}, {6, 6}, Activation::Sigmoid),
        kan_spec({"eta"}, {5}, 7, 2)}) {
    NetworkState st = init_network(s, 99);
    const std::string text = serialize_network(s, st);
    NetworkSpec s2;
    NetworkState st2;
    deserialize_network(text, s2, st2);
    CHECK(s2.kind == s.kind);
    CHECK(s2.input_names == s.input_names);
    CHECK(s2.hidden_sizes == s.hidden_sizes);
    CHECK(s2.activation == s.activation);
    REQUIRE(st2.tensors.size() == st.tensors.size());
    for (std::size_t i = 0; i < st.tensors.size(); ++i) {
      REQUIRE(st2.tensors[i].size() == st.tensors[i].size());
      CHECK(std::memcmp(st2.tensors[i].data(), st.tensors[i].data(),
                        st.tensors[i].size() * sizeof(double)) == 0);
    }
  }
  CHECK_THROWS_AS(
      [] {
        NetworkSpec s;
        NetworkState st;
        deserialize_network("{\"bogus\": 1}", s, st);
      }(),
      std::runtime_error);
}

TEST_CASE("enum names round-trip") {
  CHECK(parse_network_kind(to_string(NetworkKind::KAN)) == NetworkKind::KAN);
  CHECK(parse_activation("silu") == Activation::Silu);
  CHECK(parse_output_transform("softplus") == OutputTransform::Softplus);
  CHECK(std::string(to_string(Activation::Relu)) == "relu");
  CHECK_THROWS_AS(parse_activation("gelu"), std::invalid_argument);
}

TEST_CASE("scalar activation helpers") {
  CHECK(silu(0.0) == 0.0);
  CHECK(silu(3.0) == doctest::Approx(3.0 / (1.0 + std::exp(-3.0))));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(40.0) == doctest::Approx(40.0));
  CHECK(softplus(-40.0) > 0.0);
}
