#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "deqn/framework.hpp"

using namespace deqn;

namespace {

NetworkSpec small_mlp(std::vector<std::string> inputs,
                      std::vector<int> hidden = {8}) {
  NetworkSpec s;
  s.kind = NetworkKind::MLP;
  s.input_names = std::move(inputs);
  s.hidden_sizes = std::move(hidden);
  return s;
}

ModelDefinition one_state_model() {
  ModelDefinition def;
  def.state_vars.push_back({"x", 0.0, 1.0});
  LearnableDef y;
  y.name = "y";
  y.spec = small_mlp({"x"});
  y.derivative_order = 2;
  def.learnables.push_back(y);
  return def;
}

Batch batch_of(const std::vector<double>& xs) {
  Batch b;
  b.size = static_cast<int>(xs.size());
  b.columns = {xs};
  return b;
}

}  // namespace

TEST_CASE("sample_batch stays in bounds and is seed-reproducible") {
  std::vector<StateVariableDef> states = {{"x", -2.0, 3.0}, {"t", 0.0, 1.0}};
  std::mt19937_64 r1(5), r2(5), r3(6);
  Batch a = sample_batch(states, 200, r1);
  Batch b = sample_batch(states, 200, r2);
  Batch c = sample_batch(states, 200, r3);
  REQUIRE(a.size == 200);
  REQUIRE(a.columns.size() == 2);
  for (double v : a.columns[0]) {
    CHECK(v >= -2.0);
    CHECK(v <= 3.0);
  }
  for (double v : a.columns[1]) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.columns == b.columns);
  CHECK(a.columns != c.columns);
}

TEST_CASE("fixed-grid sampling enumerates the product grid") {
  std::vector<StateVariableDef> states = {
      {"x", 0.0, 1.0, Sampling::FixedGrid, 3},
      {"t", 0.0, 2.0, Sampling::FixedGrid, 3}};
  std::mt19937_64 rng(0);
  Batch b = sample_batch(states, 999, rng);  // B is ignored on a fixed grid
  REQUIRE(b.size == 9);
  // First state slowest, linspace including both endpoints.
  CHECK(b.columns[0] ==
        std::vector<double>{0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1});
  CHECK(b.columns[1] == std::vector<double>{0, 1, 2, 0, 1, 2, 0, 1, 2});
}

TEST_CASE("compile_model rejects malformed definitions with clear messages") {
  {
    ModelDefinition def;  // no states
    CHECK_THROWS_AS(compile_model(def), ModelError);
  }
  {
    ModelDefinition def = one_state_model();
    def.state_vars[0].low = 2.0;  // low >= high
    CHECK_THROWS_AS(compile_model(def), ModelError);
  }
  {
    ModelDefinition def = one_state_model();
    def.params.push_back({"y", 1.0});  // duplicate name
    CHECK_THROWS_AS(compile_model(def), ModelError);
  }
  {
    ModelDefinition def = one_state_model();
    def.equations.push_back({"z", parse_formula("y + w")});  // unknown w
    try {
      compile_model(def);
      FAIL("expected ModelError");
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find("'w'") != std::string::npos);
    }
  }
  {
    ModelDefinition def = one_state_model();
    // Third derivative referenced but derivative_order is 2.
    def.endogenous.push_back(
        {"eq", parse_formula("y_xxx"), parse_formula("0"), 1.0});
    CHECK_THROWS_AS(compile_model(def), ModelError);
  }
}

TEST_CASE("derivative names cover all states, orders, and mixed orderings") {
  ModelDefinition def;
  def.state_vars.push_back({"x", 0.0, 1.0});
  def.state_vars.push_back({"v", 0.0, 1.0});
  LearnableDef p;
  p.name = "p";
  p.spec = small_mlp({"x", "v"});
  p.derivative_order = 2;
  def.learnables.push_back(p);
  CompiledModel m = compile_model(def);
  REQUIRE(m.derivative_names.size() == 1);
  const auto& names = m.derivative_names[0];
  for (const char* want :
       {"p_x", "p_v", "p_xx", "p_xv", "p_vx", "p_vv"})
    CHECK_MESSAGE(std::find(names.begin(), names.end(), want) != names.end(),
                  "missing ", want);
  CHECK(names.size() == 6);
}

TEST_CASE("evaluate_variables resolves chained equations") {
  ModelDefinition def = one_state_model();
  def.params.push_back({"k", 3.0});
  def.equations.push_back({"a", parse_formula("x + 1")});
  def.equations.push_back({"b", parse_formula("2*a + k")});
  CompiledModel m = compile_model(def);
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  EvalContext ctx = evaluate_variables(bound, batch_of({0.0, 1.0, 2.0}));
  REQUIRE(ctx.count("a"));
  REQUIRE(ctx.count("b"));
  REQUIRE(ctx.count("y_x"));
  REQUIRE(ctx.count("y_xx"));
  auto a = ctx.at("a").data();
  auto b = ctx.at("b").data();
  CHECK(a[1] == doctest::Approx(2.0));
  CHECK(b[1] == doctest::Approx(7.0));
  CHECK(b[2] == doctest::Approx(9.0));
}

TEST_CASE("mocks replace the network and have analytic derivatives") {
  ModelDefinition def = one_state_model();
  CompiledModel m = compile_model(def);
  MockMap mocks{{"y", parse_formula("x^3")}};
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  EvalContext ctx = evaluate_variables(bound, batch_of({0.5, 2.0}), mocks);
  CHECK(ctx.at("y").data()[1] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(ctx.at("y_x").data()[1] == doctest::Approx(12.0).epsilon(1e-10));
  CHECK(ctx.at("y_xx").data()[1] == doctest::Approx(12.0).epsilon(1e-10));
}

TEST_CASE("condition loss is the mean squared residual on its points") {
  ModelDefinition def = one_state_model();
  ConditionDef cond;
  cond.label = "c";
  cond.target_expr = parse_formula("y - 2");  // with y mocked to 0: residual 2
  cond.points = {{0.1}, {0.2}, {0.3}, {0.4}, {0.5}};
  def.conditions.push_back(cond);
  CompiledModel m = compile_model(def);
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  std::mt19937_64 rng(0);
  Var loss = condition_loss(bound, m.def.conditions[0], rng,
                            {{"y", parse_formula("0")}});
  CHECK(loss.item() == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("boundary-sampled conditions pin the fixed state") {
  ModelDefinition def;
  def.state_vars.push_back({"x", -1.0, 1.0});
  def.state_vars.push_back({"t", 0.0, 1.0});
  LearnableDef y;
  y.name = "y";
  y.spec = small_mlp({"x", "t"});
  def.learnables.push_back(y);
  ConditionDef cond;
  cond.label = "initial";
  cond.target_expr = parse_formula("y - x");
  ConditionDef::BoundarySampler bs;
  bs.fixed_state = "t";
  bs.value = 0.0;
  bs.count = 50;
  cond.boundary = bs;
  def.conditions.push_back(cond);
  CompiledModel m = compile_model(def);
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  std::mt19937_64 rng(3);
  // Mock y = x + 5*t: on the t=0 boundary the residual must vanish.
  Var loss = condition_loss(bound, m.def.conditions[0], rng,
                            {{"y", parse_formula("x + 5*t")}});
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("endogenous and hjb losses are mean squared residuals") {
  Tape t;
  EvalContext ctx;
  ctx["l"] = t.leaf({4, 1}, std::vector<double>{1, 2, 3, 4}, false);
  ctx["r"] = t.leaf({4, 1}, std::vector<double>{0, 2, 3, 2}, false);
  EndogenousEquationDef eq{"e", parse_formula("l"), parse_formula("r"), 1.0};
  CHECK(endogenous_loss(eq, ctx, t).item() ==
        doctest::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4).epsilon(1e-15));
  HJBEquationDef h{"h", parse_formula("l - r"), 1.0};
  CHECK(hjb_loss(h, ctx, t).item() == doctest::Approx(5.0 / 4).epsilon(1e-15));
}

TEST_CASE("constraint loss rectifies violations only") {
  Tape t;
  EvalContext ctx;
  ctx["a"] = t.leaf({2, 1}, std::vector<double>{1.0, 3.0}, false);
  ctx["b"] = t.leaf({2, 1}, std::vector<double>{2.0, 2.0}, false);
  ConstraintDef c{"c", parse_formula("a"), parse_formula("b"), Comparator::LE,
                  1.0};
  // a <= b: violation only at a=3 (excess 1), mean of {0, 1} = 0.5.
  CHECK(constraint_loss(c, ctx, t).item() ==
        doctest::Approx(0.5).epsilon(1e-15));
  c.comparator = Comparator::GE;
  // a >= b: violation only at a=1 (short by 1).
  CHECK(constraint_loss(c, ctx, t).item() ==
        doctest::Approx(0.5).epsilon(1e-15));

  // Strict comparators add a small epsilon inside the rectifier, so
  // equality is already a violation.
  ConstraintDef strict{"s", parse_formula("a"), parse_formula("a"),
                       Comparator::LT, 1.0};
  const double v = constraint_loss(strict, ctx, t).item();
  CHECK(v == doctest::Approx(1e-16).epsilon(1e-6));
  ConstraintDef loose{"n", parse_formula("a"), parse_formula("a"),
                      Comparator::LE, 1.0};
  CHECK(constraint_loss(loose, ctx, t).item() == 0.0);
}

TEST_CASE("system loss averages over activated points only") {
  Tape t;
  EvalContext ctx;
  ctx["z"] = t.leaf({3, 1}, std::vector<double>{1.0, 0.0, 1.0}, false);
  ctx["w"] = t.leaf({3, 1}, std::vector<double>{1.0, 2.0, 3.0}, false);
  SystemDef sys;
  sys.label = "s";
  // Active where z >= 1: points 0 and 2.
  sys.activation_constraints.push_back(
      {"act", parse_formula("z"), parse_formula("1"), Comparator::GE, 1.0});
  sys.endogenous.push_back(
      {"res", parse_formula("w"), parse_formula("0"), 1.0});
  // Masked MSE: (1^2 + 3^2) / 2 = 5.
  CHECK(system_loss(sys, ctx, t).item() == doctest::Approx(5.0).epsilon(1e-15));

  // All constraints must hold simultaneously.
  sys.activation_constraints.push_back(
      {"act2", parse_formula("w"), parse_formula("2"), Comparator::GT, 1.0});
  // Now only point 2 (z=1, w=3) is active: 3^2 / 1 = 9.
  CHECK(system_loss(sys, ctx, t).item() == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("system loss is exactly zero when no point activates") {
  Tape t;
  EvalContext ctx;
  ctx["z"] = t.leaf({3, 1}, std::vector<double>{0.0, 0.0, 0.0}, false);
  ctx["w"] = t.leaf({3, 1}, std::vector<double>{5.0, 5.0, 5.0}, false);
  SystemDef sys;
  sys.label = "s";
  sys.activation_constraints.push_back(
      {"act", parse_formula("z"), parse_formula("1"), Comparator::GE, 1.0});
  sys.endogenous.push_back(
      {"res", parse_formula("w"), parse_formula("0"), 1.0});
  CHECK(system_loss(sys, ctx, t).item() == 0.0);
}

TEST_CASE("system with an always-true mask equals the endogenous loss") {
  Tape t;
  EvalContext ctx;
  ctx["w"] = t.leaf({4, 1}, std::vector<double>{1, -2, 3, 0.5}, false);
  SystemDef sys;
  sys.label = "s";
  sys.activation_constraints.push_back(
      {"act", parse_formula("0"), parse_formula("1"), Comparator::LE, 1.0});
  EndogenousEquationDef eq{"res", parse_formula("w"), parse_formula("0"), 1.0};
  sys.endogenous.push_back(eq);
  CHECK(system_loss(sys, ctx, t).item() ==
        doctest::Approx(endogenous_loss(eq, ctx, t).item()).epsilon(1e-15));
}

TEST_CASE("system-local equations are scoped to the system") {
  ModelDefinition def = one_state_model();
  SystemDef sys;
  sys.label = "s";
  sys.activation_constraints.push_back(
      {"act", parse_formula("x"), parse_formula("0.5"), Comparator::GE, 1.0});
  sys.equations.push_back({"local", parse_formula("2*y")});
  sys.endogenous.push_back(
      {"res", parse_formula("local"), parse_formula("0"), 1.0});
  def.systems.push_back(sys);
  CHECK_NOTHROW(compile_model(def));
  // The local name must not leak into the global scope.
  ModelDefinition leaky = one_state_model();
  leaky.systems.push_back(sys);
  leaky.endogenous.push_back(
      {"global", parse_formula("local"), parse_formula("0"), 1.0});
  CHECK_THROWS_AS(compile_model(leaky), ModelError);
}

TEST_CASE("total loss applies weights and itemizes raw components") {
  ModelDefinition def = one_state_model();
  ConditionDef c1;
  c1.label = "first";
  c1.target_expr = parse_formula("y - 1");  // mocked y=0: raw loss 1
  c1.points = {{0.5}};
  c1.weight = 2.0;
  ConditionDef c2;
  c2.label = "second";
  c2.target_expr = parse_formula("y + 1");  // raw loss 1
  c2.points = {{0.5}};
  c2.weight = 0.5;
  def.conditions = {c1, c2};
  CompiledModel m = compile_model(def);
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  std::mt19937_64 rng(0);
  Batch batch = batch_of({0.25, 0.75});
  auto [loss, report] =
      total_loss(bound, batch, rng, {{"y", parse_formula("0")}});
  CHECK(loss.item() == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(report.total == doctest::Approx(2.5).epsilon(1e-14));
  REQUIRE(report.components.size() == 2);
  CHECK(report.components[0].first == "first");
  CHECK(report.components[0].second == doctest::Approx(1.0));  // raw value
  CHECK(report.components[1].first == "second");
  CHECK(report.components[1].second == doctest::Approx(1.0));
  CHECK_FALSE(report.non_finite);
}

TEST_CASE("an exact solution nulls every residual via mocks") {
  // ODE x^2 y'' + 6 x y' + 4 y = 0 with y = 4 x^-4 + 2 x^-1.
  ModelDefinition def;
  def.state_vars.push_back({"x", 1.0, 2.0});
  LearnableDef y;
  y.name = "y";
  y.spec = small_mlp({"x"});
  def.learnables.push_back(y);
  def.endogenous.push_back({"ode",
                            parse_formula("x^2*y_xx + 6*x*y_x + 4*y"),
                            parse_formula("0"), 1.0});
  CompiledModel m = compile_model(def);
  Tape t;
  BoundModel bound = bind_model(m, init_states(m, 0), t);
  std::mt19937_64 rng(1);
  Batch batch = sample_batch(m.def.state_vars, 64, rng);
  auto [loss, report] =
      total_loss(bound, batch, rng,
                 {{"y", parse_formula("4*x^(-4) + 2*x^(-1)")}});
  CHECK(loss.item() <= 1e-8);
}

TEST_CASE("flatten and unflatten round-trip network states") {
  ModelDefinition def = one_state_model();
  LearnableDef q;
  q.name = "q";
  q.spec = small_mlp({"x"}, {4, 4});
  def.learnables.push_back(q);
  CompiledModel m = compile_model(def);
  std::vector<NetworkState> states = init_states(m, 9);
  std::vector<double> flat = flatten_states(states);
  std::int64_t want = 0;
  for (const auto& l : m.def.learnables) want += param_count(l.spec);
  CHECK(static_cast<std::int64_t>(flat.size()) == want);
  std::vector<NetworkState> round = states;
  for (auto& t : round.front().tensors)
    for (double& v : t) v = 0.0;
  unflatten_states(flat, round);
  for (std::size_t i = 0; i < states.size(); ++i)
    CHECK(states[i].tensors == round[i].tensors);
}

TEST_CASE("train runs zero epochs as a no-op evaluation") {
  ModelDefinition def = one_state_model();
  def.endogenous.push_back(
      {"eq", parse_formula("y"), parse_formula("0"), 1.0});
  CompiledModel m = compile_model(def);
  TrainingConfig cfg;
  cfg.epochs = 0;
  std::vector<NetworkState> init = init_states(m, 4);
  TrainResult r = train(m, init, cfg);
  CHECK(r.history.empty());
  REQUIRE(r.final.size() == 1);
  CHECK(r.final[0].tensors == init[0].tensors);
  CHECK(r.best[0].tensors == init[0].tensors);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  ModelDefinition def = one_state_model();
  def.endogenous.push_back(
      {"fit", parse_formula("y"), parse_formula("sin(3*x)"), 1.0});
  CompiledModel m = compile_model(def);
  TrainingConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 32;
  cfg.seed = 123;
  auto run = [&] { return train(m, init_states(m, cfg.seed), cfg); };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.history.size() == 25);
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(std::memcmp(&a.history[e].total, &b.history[e].total,
                      sizeof(double)) == 0);
  }
  CHECK(a.final[0].tensors == b.final[0].tensors);
  CHECK(a.best_total == b.best_total);
  // The best total is the minimum of the recorded history.
  double min_total = a.history[0].total;
  for (const auto& h : a.history) min_total = std::min(min_total, h.total);
  CHECK(a.best_total <= min_total + 1e-18);
}

TEST_CASE("training reduces the loss on a simple regression") {
  ModelDefinition def = one_state_model();
  def.endogenous.push_back(
      {"fit", parse_formula("y"), parse_formula("x*x"), 1.0});
  CompiledModel m = compile_model(def);
  TrainingConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 64;
  cfg.optimizer.learning_rate = 1e-2;
  TrainResult r = train(m, init_states(m, 0), cfg);
  CHECK(r.history.back().total < r.history.front().total);
  CHECK(r.best_total < 1e-2);
  CHECK(r.skipped_steps == 0);
}

TEST_CASE("lbfgs training works through the closure path") {
  ModelDefinition def = one_state_model();
  def.endogenous.push_back(
      {"fit", parse_formula("y"), parse_formula("x"), 1.0});
  CompiledModel m = compile_model(def);
  TrainingConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.optimizer.kind = OptimizerKind::LBFGS;
  cfg.optimizer.learning_rate = 1.0;
  cfg.optimizer.max_iter = 10;
  TrainResult r = train(m, init_states(m, 0), cfg);
  REQUIRE(r.history.size() == 10);
  CHECK(r.best_total < 1e-4);
}

TEST_CASE("pretrain fits a piecewise constant guess") {
  ModelDefinition def = one_state_model();
  PretrainDef pre;
  pre.learnable = "y";
  GuessBranch low;
  low.has_condition = true;
  low.cond_lhs = parse_formula("x");
  low.cond_rhs = parse_formula("0.5");
  low.cond_cmp = Comparator::LT;
  low.value = parse_formula("2");
  GuessBranch rest;
  rest.value = parse_formula("3");
  pre.guess = {low, rest};
  pre.epochs = 800;
  pre.optimizer.learning_rate = 1e-2;
  def.pretrain.push_back(pre);
  CompiledModel m = compile_model(def);
  NetworkState st = pretrain(m, m.def.pretrain[0], init_states(m, 0)[0], 0);

  // Evaluate the fitted network away from the breakpoint.
  Tape t;
  NetworkBinding b = bind_network(m.def.learnables[0].spec, st, t, false);
  Var y = network_forward(m.def.learnables[0].spec, b,
                          t.leaf({2, 1}, std::vector<double>{0.2, 0.8}, false));
  CHECK(y.data()[0] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(y.data()[1] == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("parameter gradients through derivative columns match finite differences") {
  // Loss involving y_x: checks reverse-over-reverse parameter gradients.
  ModelDefinition def = one_state_model();
  def.endogenous.push_back(
      {"eq", parse_formula("y_x + y"), parse_formula("0"), 1.0});
  CompiledModel m = compile_model(def);
  std::vector<NetworkState> states = init_states(m, 2);
  const std::vector<double> xs{0.2, 0.5, 0.9};

  auto loss_at = [&](const std::vector<NetworkState>& st) {
    Tape t;
    BoundModel bound = bind_model(m, st, t, true);
    EvalContext ctx = evaluate_variables(bound, batch_of(xs));
    return endogenous_loss(m.def.endogenous[0], ctx, t).item();
  };

  Tape t;
  BoundModel bound = bind_model(m, states, t, true);
  EvalContext ctx = evaluate_variables(bound, batch_of(xs));
  Var loss = endogenous_loss(m.def.endogenous[0], ctx, t);
  auto g = grad(loss, bound.bindings[0].tensors);

  std::mt19937_64 rng(7);
  for (std::size_t ti = 0; ti < states[0].tensors.size(); ++ti) {
    // Spot-check a few entries per tensor.
    const std::size_t n = states[0].tensors[ti].size();
    for (int probe = 0; probe < 3; ++probe) {
      const std::size_t i = rng() % n;
      auto p = states, q = states;
      p[0].tensors[ti][i] += 1e-6;
      q[0].tensors[ti][i] -= 1e-6;
      const double want = (loss_at(p) - loss_at(q)) / 2e-6;
      CHECK(g[ti].data()[i] == doctest::Approx(want).epsilon(2e-4));
    }
  }
}

TEST_CASE("losses_csv has a fixed schema and full precision") {
  LossReport r1;
  r1.epoch = 0;
  r1.components = {{"a", 0.1}, {"b", 0.25}};
  r1.total = 0.35;
  LossReport r2 = r1;
  r2.epoch = 1;
  r2.total = 1.0 / 3.0;
  const std::string csv = losses_csv({r1, r2});
  CHECK(csv.substr(0, csv.find('\n')) == "epoch,a,b,total");
  CHECK(csv.find("0.33333333333333331") != std::string::npos);
  CHECK(csv.back() == '\n');
}
