#include "deqn/config.hpp"

#include <set>

#include <json.hpp>

#include "deqn/latex.hpp"
#include "deqn/network.hpp"
#include "deqn/optimizer.hpp"
#include "deqn/util.hpp"

namespace deqn {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) fail(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      fail(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail("key '" + key + "': wrong type");
  }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where + ": missing key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(where + ": key '" + key + "' has wrong type");
  }
}

ExprPtr parse_field(const json& obj, const std::string& key,
                    const std::string& where) {
  const std::string text = require<std::string>(obj, key, where);
  const bool latex = get_or<bool>(obj, "latex", false);
  try {
    return latex ? parse_latex(text) : parse_formula(text);
  } catch (const std::exception& e) {
    fail(where + ": formula '" + key + "': " + e.what());
  }
}

Comparator parse_comparator(const std::string& s, const std::string& where) {
  if (s == "le" || s == "<=") return Comparator::LE;
  if (s == "ge" || s == ">=") return Comparator::GE;
  if (s == "lt" || s == "<") return Comparator::LT;
  if (s == "gt" || s == ">") return Comparator::GT;
  fail(where + ": unknown comparator '" + s + "'");
}

const char* comparator_name(Comparator c) {
  switch (c) {
    case Comparator::LE: return "le";
    case Comparator::GE: return "ge";
    case Comparator::LT: return "lt";
    case Comparator::GT: return "gt";
  }
  return "?";
}

OptimizerConfig parse_optimizer(const json& obj, const std::string& where) {
  check_keys(obj,
             {"kind", "learning_rate", "beta1", "beta2", "eps",
              "weight_decay", "history_size", "max_iter",
              "max_line_search_steps", "tolerance_grad"},
             where);
  OptimizerConfig c;
  try {
    c.kind = parse_optimizer_kind(require<std::string>(obj, "kind", where));
  } catch (const std::invalid_argument& e) {
    fail(where + ": " + e.what());
  }
  c.learning_rate = get_or<double>(obj, "learning_rate", c.learning_rate);
  c.beta1 = get_or<double>(obj, "beta1", c.beta1);
  c.beta2 = get_or<double>(obj, "beta2", c.beta2);
  c.eps = get_or<double>(obj, "eps", c.eps);
  c.weight_decay = get_or<double>(obj, "weight_decay", c.weight_decay);
  c.history_size = get_or<int>(obj, "history_size", c.history_size);
  c.max_iter = get_or<int>(obj, "max_iter", c.max_iter);
  c.max_line_search_steps =
      get_or<int>(obj, "max_line_search_steps", c.max_line_search_steps);
  c.tolerance_grad = get_or<double>(obj, "tolerance_grad", c.tolerance_grad);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(where + ": " + e.what());
  }
  return c;
}

json write_optimizer(const OptimizerConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["learning_rate"] = c.learning_rate;
  if (c.kind == OptimizerKind::LBFGS) {
    j["history_size"] = c.history_size;
    j["max_iter"] = c.max_iter;
    j["max_line_search_steps"] = c.max_line_search_steps;
    j["tolerance_grad"] = c.tolerance_grad;
  } else {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    if (c.kind == OptimizerKind::AdamW) j["weight_decay"] = c.weight_decay;
  }
  return j;
}

NetworkSpec parse_network_spec(const json& obj, const std::string& where) {
  check_keys(obj,
             {"kind", "inputs", "hidden", "activation", "output_transform",
              "grid_size", "spline_order", "grid_range"},
             where);
  NetworkSpec spec;
  try {
    spec.kind = parse_network_kind(get_or<std::string>(obj, "kind", "mlp"));
    spec.activation =
        parse_activation(get_or<std::string>(obj, "activation", "tanh"));
    spec.output_transform = parse_output_transform(
        get_or<std::string>(obj, "output_transform", "none"));
  } catch (const std::invalid_argument& e) {
    fail(where + ": " + e.what());
  }
  spec.input_names = require<std::vector<std::string>>(obj, "inputs", where);
  spec.hidden_sizes = require<std::vector<int>>(obj, "hidden", where);
  spec.grid_size = get_or<int>(obj, "grid_size", spec.grid_size);
  spec.spline_order = get_or<int>(obj, "spline_order", spec.spline_order);
  if (obj.contains("grid_range"))
    spec.grid_range = require<std::array<double, 2>>(obj, "grid_range", where);
  return spec;
}

json write_network_spec(const NetworkSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["inputs"] = spec.input_names;
  j["hidden"] = spec.hidden_sizes;
  j["activation"] = to_string(spec.activation);
  j["output_transform"] = to_string(spec.output_transform);
  if (spec.kind == NetworkKind::KAN) {
    j["grid_size"] = spec.grid_size;
    j["spline_order"] = spec.spline_order;
    j["grid_range"] = spec.grid_range;
  }
  return j;
}

ConstraintDef parse_constraint(const json& obj, const std::string& where) {
  check_keys(obj, {"label", "lhs", "rhs", "comparator", "weight", "latex"},
             where);
  ConstraintDef c;
  c.label = get_or<std::string>(obj, "label", "");
  c.lhs = parse_field(obj, "lhs", where);
  c.rhs = parse_field(obj, "rhs", where);
  c.comparator =
      parse_comparator(require<std::string>(obj, "comparator", where), where);
  c.weight = get_or<double>(obj, "weight", 1.0);
  return c;
}

json write_constraint(const ConstraintDef& c) {
  json j;
  if (!c.label.empty()) j["label"] = c.label;
  j["lhs"] = format_expr(c.lhs);
  j["rhs"] = format_expr(c.rhs);
  j["comparator"] = comparator_name(c.comparator);
  if (c.weight != 1.0) j["weight"] = c.weight;
  return j;
}

EquationDef parse_equation(const json& obj, const std::string& where) {
  check_keys(obj, {"lhs", "rhs", "latex"}, where);
  EquationDef eq;
  eq.lhs_name = require<std::string>(obj, "lhs", where);
  eq.rhs = parse_field(obj, "rhs", where);
  return eq;
}

json write_equation(const EquationDef& eq) {
  json j;
  j["lhs"] = eq.lhs_name;
  j["rhs"] = format_expr(eq.rhs);
  return j;
}

EndogenousEquationDef parse_endogenous(const json& obj,
                                       const std::string& where) {
  check_keys(obj, {"label", "lhs", "rhs", "weight", "latex"}, where);
  EndogenousEquationDef e;
  e.label = get_or<std::string>(obj, "label", "");
  e.lhs = parse_field(obj, "lhs", where);
  e.rhs = parse_field(obj, "rhs", where);
  e.weight = get_or<double>(obj, "weight", 1.0);
  return e;
}

json write_endogenous(const EndogenousEquationDef& e) {
  json j;
  if (!e.label.empty()) j["label"] = e.label;
  j["lhs"] = format_expr(e.lhs);
  j["rhs"] = format_expr(e.rhs);
  if (e.weight != 1.0) j["weight"] = e.weight;
  return j;
}

}  // namespace

ConfigDocument parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config: not valid JSON: ") + e.what());
  }
  check_keys(root,
             {"state", "params", "learnable", "equations", "conditions",
              "endogenous", "hjb", "constraints", "systems", "training",
              "pretrain", "oracle"},
             "config");

  ConfigDocument doc;
  ModelDefinition& m = doc.model;

  if (!root.contains("state")) fail("config: missing section 'state'");
  for (const auto& s : root.at("state")) {
    check_keys(s, {"name", "low", "high", "sampling", "points_per_dim"},
               "state");
    StateVariableDef sv;
    sv.name = require<std::string>(s, "name", "state");
    sv.low = get_or<double>(s, "low", -1.0);
    sv.high = get_or<double>(s, "high", 1.0);
    const std::string sampling =
        get_or<std::string>(s, "sampling", "uniform_random");
    if (sampling == "uniform_random") {
      sv.sampling = Sampling::UniformRandom;
    } else if (sampling == "fixed_grid") {
      sv.sampling = Sampling::FixedGrid;
      sv.points_per_dim = require<int>(s, "points_per_dim", "state");
    } else {
      fail("state '" + sv.name + "': unknown sampling '" + sampling + "'");
    }
    m.state_vars.push_back(sv);
  }

  for (const auto& p : root.value("params", json::array())) {
    check_keys(p, {"name", "value"}, "params");
    m.params.push_back({require<std::string>(p, "name", "params"),
                        require<double>(p, "value", "params")});
  }

  for (const auto& l : root.value("learnable", json::array())) {
    check_keys(l, {"name", "role", "derivative_order", "network"},
               "learnable");
    LearnableDef def;
    def.name = require<std::string>(l, "name", "learnable");
    const std::string role = get_or<std::string>(l, "role",
                                                 "endogenous_variable");
    if (role == "agent")
      def.role = LearnableRole::Agent;
    else if (role == "endogenous_variable")
      def.role = LearnableRole::EndogenousVariable;
    else
      fail("learnable '" + def.name + "': unknown role '" + role + "'");
    def.derivative_order = get_or<int>(l, "derivative_order", 2);
    if (!l.contains("network"))
      fail("learnable '" + def.name + "': missing key 'network'");
    def.spec =
        parse_network_spec(l.at("network"), "learnable '" + def.name + "'");
    m.learnables.push_back(std::move(def));
  }

  for (const auto& e : root.value("equations", json::array()))
    m.equations.push_back(parse_equation(e, "equations"));

  for (const auto& c : root.value("conditions", json::array())) {
    check_keys(c, {"label", "target", "points", "boundary", "weight", "latex"},
               "conditions");
    ConditionDef cond;
    cond.label = get_or<std::string>(c, "label", "");
    cond.target_expr = parse_field(c, "target", "conditions");
    if (c.contains("points"))
      cond.points =
          require<std::vector<std::vector<double>>>(c, "points", "conditions");
    if (c.contains("boundary")) {
      const auto& b = c.at("boundary");
      check_keys(b, {"state", "value", "count"}, "conditions.boundary");
      ConditionDef::BoundarySampler bs;
      bs.fixed_state = require<std::string>(b, "state", "conditions.boundary");
      bs.value = require<double>(b, "value", "conditions.boundary");
      bs.count = get_or<int>(b, "count", 100);
      cond.boundary = bs;
    }
    cond.weight = get_or<double>(c, "weight", 1.0);
    m.conditions.push_back(std::move(cond));
  }

  for (const auto& e : root.value("endogenous", json::array()))
    m.endogenous.push_back(parse_endogenous(e, "endogenous"));

  for (const auto& h : root.value("hjb", json::array())) {
    check_keys(h, {"label", "expr", "weight", "latex"}, "hjb");
    HJBEquationDef def;
    def.label = get_or<std::string>(h, "label", "");
    def.expr = parse_field(h, "expr", "hjb");
    def.weight = get_or<double>(h, "weight", 1.0);
    m.hjb.push_back(std::move(def));
  }

  for (const auto& c : root.value("constraints", json::array()))
    m.constraints.push_back(parse_constraint(c, "constraints"));

  for (const auto& s : root.value("systems", json::array())) {
    check_keys(s, {"label", "activation", "equations", "endogenous", "weight"},
               "systems");
    SystemDef sys;
    sys.label = get_or<std::string>(s, "label", "");
    for (const auto& a : s.value("activation", json::array()))
      sys.activation_constraints.push_back(
          parse_constraint(a, "systems.activation"));
    for (const auto& e : s.value("equations", json::array()))
      sys.equations.push_back(parse_equation(e, "systems.equations"));
    for (const auto& e : s.value("endogenous", json::array()))
      sys.endogenous.push_back(parse_endogenous(e, "systems.endogenous"));
    sys.weight = get_or<double>(s, "weight", 1.0);
    m.systems.push_back(std::move(sys));
  }

  if (root.contains("training")) {
    const auto& t = root.at("training");
    check_keys(t, {"batch_size", "epochs", "paper_epochs", "seed", "optimizer"},
               "training");
    doc.training.batch_size = get_or<int>(t, "batch_size", 100);
    doc.training.epochs = get_or<int>(t, "epochs", 0);
    doc.training.paper_epochs = get_or<int>(t, "paper_epochs", 0);
    doc.training.seed = get_or<std::uint64_t>(t, "seed", 0);
    if (t.contains("optimizer"))
      doc.training.optimizer =
          parse_optimizer(t.at("optimizer"), "training.optimizer");
  }

  for (const auto& p : root.value("pretrain", json::array())) {
    check_keys(p, {"learnable", "epochs", "optimizer", "guess"}, "pretrain");
    PretrainDef pre;
    pre.learnable = require<std::string>(p, "learnable", "pretrain");
    pre.epochs = get_or<int>(p, "epochs", 6000);
    if (p.contains("optimizer"))
      pre.optimizer = parse_optimizer(p.at("optimizer"), "pretrain.optimizer");
    for (const auto& g : p.value("guess", json::array())) {
      check_keys(g, {"condition", "value", "latex"}, "pretrain.guess");
      GuessBranch br;
      br.value = parse_field(g, "value", "pretrain.guess");
      if (g.contains("condition")) {
        const auto& c = g.at("condition");
        check_keys(c, {"lhs", "rhs", "comparator", "latex"},
                   "pretrain.guess.condition");
        br.has_condition = true;
        br.cond_lhs = parse_field(c, "lhs", "pretrain.guess.condition");
        br.cond_rhs = parse_field(c, "rhs", "pretrain.guess.condition");
        br.cond_cmp = parse_comparator(
            require<std::string>(c, "comparator", "pretrain.guess.condition"),
            "pretrain.guess.condition");
      }
      pre.guess.push_back(std::move(br));
    }
    m.pretrain.push_back(std::move(pre));
  }

  if (root.contains("oracle")) {
    const auto& o = root.at("oracle");
    check_keys(o, {"closed_form", "eval_grid"}, "oracle");
    if (o.contains("closed_form"))
      for (const auto& [name, text] : o.at("closed_form").items()) {
        try {
          doc.closed_form[name] = parse_formula(text.get<std::string>());
        } catch (const std::exception& e) {
          fail("oracle.closed_form '" + name + "': " + e.what());
        }
      }
    doc.eval_grid = get_or<std::vector<int>>(o, "eval_grid", {});
  }

  return doc;
}

std::string write_config(const ConfigDocument& doc) {
  const ModelDefinition& m = doc.model;
  json root;

  json state = json::array();
  for (const auto& s : m.state_vars) {
    json j;
    j["name"] = s.name;
    j["low"] = s.low;
    j["high"] = s.high;
    if (s.sampling == Sampling::FixedGrid) {
      j["sampling"] = "fixed_grid";
      j["points_per_dim"] = s.points_per_dim;
    } else {
      j["sampling"] = "uniform_random";
    }
    state.push_back(j);
  }
  root["state"] = state;

  if (!m.params.empty()) {
    json params = json::array();
    for (const auto& p : m.params)
      params.push_back({{"name", p.name}, {"value", p.value}});
    root["params"] = params;
  }

  if (!m.learnables.empty()) {
    json learnable = json::array();
    for (const auto& l : m.learnables) {
      json j;
      j["name"] = l.name;
      j["role"] =
          l.role == LearnableRole::Agent ? "agent" : "endogenous_variable";
      j["derivative_order"] = l.derivative_order;
      j["network"] = write_network_spec(l.spec);
      learnable.push_back(j);
    }
    root["learnable"] = learnable;
  }

  if (!m.equations.empty()) {
    json eqs = json::array();
    for (const auto& e : m.equations) eqs.push_back(write_equation(e));
    root["equations"] = eqs;
  }

  if (!m.conditions.empty()) {
    json conds = json::array();
    for (const auto& c : m.conditions) {
      json j;
      if (!c.label.empty()) j["label"] = c.label;
      j["target"] = format_expr(c.target_expr);
      if (!c.points.empty()) j["points"] = c.points;
      if (c.boundary) {
        j["boundary"] = {{"state", c.boundary->fixed_state},
                         {"value", c.boundary->value},
                         {"count", c.boundary->count}};
      }
      if (c.weight != 1.0) j["weight"] = c.weight;
      conds.push_back(j);
    }
    root["conditions"] = conds;
  }

  if (!m.endogenous.empty()) {
    json endo = json::array();
    for (const auto& e : m.endogenous) endo.push_back(write_endogenous(e));
    root["endogenous"] = endo;
  }

  if (!m.hjb.empty()) {
    json hjb = json::array();
    for (const auto& h : m.hjb) {
      json j;
      if (!h.label.empty()) j["label"] = h.label;
      j["expr"] = format_expr(h.expr);
      if (h.weight != 1.0) j["weight"] = h.weight;
      hjb.push_back(j);
    }
    root["hjb"] = hjb;
  }

  if (!m.constraints.empty()) {
    json cons = json::array();
    for (const auto& c : m.constraints) cons.push_back(write_constraint(c));
    root["constraints"] = cons;
  }

  if (!m.systems.empty()) {
    json systems = json::array();
    for (const auto& s : m.systems) {
      json j;
      if (!s.label.empty()) j["label"] = s.label;
      json act = json::array();
      for (const auto& a : s.activation_constraints)
        act.push_back(write_constraint(a));
      j["activation"] = act;
      if (!s.equations.empty()) {
        json eqs = json::array();
        for (const auto& e : s.equations) eqs.push_back(write_equation(e));
        j["equations"] = eqs;
      }
      json endo = json::array();
      for (const auto& e : s.endogenous) endo.push_back(write_endogenous(e));
      j["endogenous"] = endo;
      if (s.weight != 1.0) j["weight"] = s.weight;
      systems.push_back(j);
    }
    root["systems"] = systems;
  }

  json training;
  training["batch_size"] = doc.training.batch_size;
  training["epochs"] = doc.training.epochs;
  if (doc.training.paper_epochs != 0)
    training["paper_epochs"] = doc.training.paper_epochs;
  training["seed"] = doc.training.seed;
  training["optimizer"] = write_optimizer(doc.training.optimizer);
  root["training"] = training;

  if (!m.pretrain.empty()) {
    json pretrain = json::array();
    for (const auto& p : m.pretrain) {
      json j;
      j["learnable"] = p.learnable;
      j["epochs"] = p.epochs;
      j["optimizer"] = write_optimizer(p.optimizer);
      json guesses = json::array();
      for (const auto& g : p.guess) {
        json gj;
        gj["value"] = format_expr(g.value);
        if (g.has_condition) {
          gj["condition"] = {{"lhs", format_expr(g.cond_lhs)},
                             {"rhs", format_expr(g.cond_rhs)},
                             {"comparator", comparator_name(g.cond_cmp)}};
        }
        guesses.push_back(gj);
      }
      j["guess"] = guesses;
      pretrain.push_back(j);
    }
    root["pretrain"] = pretrain;
  }

  if (!doc.closed_form.empty() || !doc.eval_grid.empty()) {
    json oracle;
    if (!doc.closed_form.empty()) {
      json cf;
      for (const auto& [name, expr] : doc.closed_form)
        cf[name] = format_expr(expr);
      oracle["closed_form"] = cf;
    }
    if (!doc.eval_grid.empty()) oracle["eval_grid"] = doc.eval_grid;
    root["oracle"] = oracle;
  }

  return root.dump(2) + "\n";
}

std::string write_checkpoint(const Checkpoint& ckpt) {
  json root;
  json nets = json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    json j;
    j["name"] = ckpt.names[i];
    j["network"] =
        json::parse(serialize_network(ckpt.specs[i], ckpt.states[i]));
    nets.push_back(j);
  }
  root["networks"] = nets;
  if (!ckpt.optimizer_state.empty())
    root["optimizer"] = json::parse(ckpt.optimizer_state);
  return root.dump() + "\n";
}

Checkpoint read_checkpoint(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("checkpoint: not valid JSON: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    for (const auto& n : root.at("networks")) {
      ckpt.names.push_back(n.at("name").get<std::string>());
      NetworkSpec spec;
      NetworkState state;
      deserialize_network(n.at("network").dump(), spec, state);
      ckpt.specs.push_back(std::move(spec));
      ckpt.states.push_back(std::move(state));
    }
    if (root.contains("optimizer"))
      ckpt.optimizer_state = root.at("optimizer").dump();
  } catch (const std::exception& e) {
    fail(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

}  // namespace deqn
