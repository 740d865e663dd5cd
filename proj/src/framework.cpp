#include "deqn/framework.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace deqn {

namespace {

std::string join_names(const std::set<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

void default_label(std::string& label, const char* prefix, std::size_t i) {
  if (label.empty()) label = std::string(prefix) + "_" + std::to_string(i);
}

void check_refs(const ExprPtr& e, const std::set<std::string>& known,
                const std::string& where) {
  if (!e) throw ModelError(where + ": missing formula");
  for (const auto& v : collect_variables(e)) {
    if (!known.count(v))
      throw ModelError(where + ": unknown name '" + v + "'");
  }
}

}  // namespace

CompiledModel compile_model(ModelDefinition def) {
  CompiledModel out;

  if (def.state_vars.empty())
    throw ModelError("model: at least one state variable is required");
  std::set<std::string> names;
  int grid_count = 0;
  for (const auto& s : def.state_vars) {
    if (s.name.empty()) throw ModelError("state variable: empty name");
    if (!names.insert(s.name).second)
      throw ModelError("duplicate name '" + s.name + "'");
    if (!(s.low < s.high))
      throw ModelError("state '" + s.name + "': domain low must be < high");
    if (s.sampling == Sampling::FixedGrid) {
      ++grid_count;
      if (s.points_per_dim < 2)
        throw ModelError("state '" + s.name +
                         "': fixed grid needs points_per_dim >= 2");
    }
  }
  if (grid_count != 0 && grid_count != static_cast<int>(def.state_vars.size()))
    throw ModelError(
        "sampling: fixed_grid must be used on all state variables or none");
  out.fixed_grid = grid_count > 0;

  for (const auto& p : def.params) {
    if (p.name.empty()) throw ModelError("parameter: empty name");
    if (!names.insert(p.name).second)
      throw ModelError("duplicate name '" + p.name + "'");
  }

  std::set<std::string> state_names;
  for (const auto& s : def.state_vars) state_names.insert(s.name);

  for (auto& l : def.learnables) {
    if (l.name.empty()) throw ModelError("learnable: empty name");
    if (!names.insert(l.name).second)
      throw ModelError("duplicate name '" + l.name + "'");
    if (l.derivative_order < 0)
      throw ModelError("learnable '" + l.name + "': negative derivative order");
    try {
      l.spec.validate();
    } catch (const std::invalid_argument& e) {
      throw ModelError("learnable '" + l.name + "': " + e.what());
    }
    for (const auto& in : l.spec.input_names)
      if (!state_names.count(in))
        throw ModelError("learnable '" + l.name + "': input '" + in +
                         "' is not a state variable");
  }

  // Derivative columns: suffix tuples over all state variables, orders
  // 1..derivative_order, both orderings of mixed partials present.
  for (const auto& l : def.learnables) {
    std::vector<std::string> dnames;
    std::vector<std::string> suffixes{""};
    for (int o = 1; o <= l.derivative_order; ++o) {
      std::vector<std::string> next;
      for (const auto& suf : suffixes)
        for (const auto& s : def.state_vars) {
          next.push_back(suf + s.name);
          dnames.push_back(l.name + "_" + next.back());
        }
      suffixes = std::move(next);
    }
    out.derivative_names.push_back(std::move(dnames));
  }

  std::set<std::string> known = names;
  for (const auto& dn : out.derivative_names)
    for (const auto& n : dn) known.insert(n);

  for (const auto& eq : def.equations) {
    if (eq.lhs_name.empty()) throw ModelError("equation: empty lhs name");
    check_refs(eq.rhs, known, "equation '" + eq.lhs_name + "'");
    if (!known.insert(eq.lhs_name).second)
      throw ModelError("equation '" + eq.lhs_name +
                       "': name already defined");
  }

  for (std::size_t i = 0; i < def.conditions.size(); ++i) {
    auto& c = def.conditions[i];
    default_label(c.label, "condition", i);
    check_refs(c.target_expr, known, "condition '" + c.label + "'");
    if (c.points.empty() && !c.boundary)
      throw ModelError("condition '" + c.label + "': no point set");
    for (const auto& p : c.points)
      if (p.size() != def.state_vars.size())
        throw ModelError("condition '" + c.label +
                         "': point dimension mismatch");
    if (c.boundary) {
      if (!state_names.count(c.boundary->fixed_state))
        throw ModelError("condition '" + c.label + "': fixed state '" +
                         c.boundary->fixed_state + "' unknown");
      if (c.boundary->count < 1)
        throw ModelError("condition '" + c.label + "': count must be >= 1");
    }
  }
  for (std::size_t i = 0; i < def.endogenous.size(); ++i) {
    auto& e = def.endogenous[i];
    default_label(e.label, "endogenous", i);
    check_refs(e.lhs, known, "endogenous '" + e.label + "'");
    check_refs(e.rhs, known, "endogenous '" + e.label + "'");
  }
  for (std::size_t i = 0; i < def.hjb.size(); ++i) {
    auto& h = def.hjb[i];
    default_label(h.label, "hjb", i);
    check_refs(h.expr, known, "hjb '" + h.label + "'");
  }
  for (std::size_t i = 0; i < def.constraints.size(); ++i) {
    auto& c = def.constraints[i];
    default_label(c.label, "constraint", i);
    check_refs(c.lhs, known, "constraint '" + c.label + "'");
    check_refs(c.rhs, known, "constraint '" + c.label + "'");
  }
  for (std::size_t i = 0; i < def.systems.size(); ++i) {
    auto& sys = def.systems[i];
    default_label(sys.label, "system", i);
    for (const auto& ac : sys.activation_constraints) {
      check_refs(ac.lhs, known, "system '" + sys.label + "' activation");
      check_refs(ac.rhs, known, "system '" + sys.label + "' activation");
    }
    std::set<std::string> local = known;
    for (const auto& eq : sys.equations) {
      check_refs(eq.rhs, local,
                 "system '" + sys.label + "' equation '" + eq.lhs_name + "'");
      if (!local.insert(eq.lhs_name).second)
        throw ModelError("system '" + sys.label + "' equation '" +
                         eq.lhs_name + "': name already defined");
    }
    for (std::size_t k = 0; k < sys.endogenous.size(); ++k) {
      auto& e = sys.endogenous[k];
      default_label(e.label, (sys.label + "_endogenous").c_str(), k);
      check_refs(e.lhs, local, "system '" + sys.label + "'");
      check_refs(e.rhs, local, "system '" + sys.label + "'");
    }
  }

  // Unique loss labels.
  std::set<std::string> labels;
  auto add_label = [&](const std::string& l) {
    if (!labels.insert(l).second)
      throw ModelError("duplicate loss label '" + l + "'");
  };
  for (const auto& c : def.conditions) add_label(c.label);
  for (const auto& e : def.endogenous) add_label(e.label);
  for (const auto& h : def.hjb) add_label(h.label);
  for (const auto& c : def.constraints) add_label(c.label);
  for (const auto& s : def.systems) add_label(s.label);

  std::set<std::string> learnable_names;
  for (const auto& l : def.learnables) learnable_names.insert(l.name);
  std::set<std::string> guess_scope = state_names;
  for (const auto& p : def.params) guess_scope.insert(p.name);
  for (const auto& pre : def.pretrain) {
    if (!learnable_names.count(pre.learnable))
      throw ModelError("pretrain: unknown learnable '" + pre.learnable + "'");
    if (pre.guess.empty())
      throw ModelError("pretrain '" + pre.learnable + "': empty guess");
    for (const auto& br : pre.guess) {
      if (!br.value)
        throw ModelError("pretrain '" + pre.learnable +
                         "': guess branch missing value");
      check_refs(br.value, guess_scope, "pretrain '" + pre.learnable + "'");
      if (br.has_condition) {
        check_refs(br.cond_lhs, guess_scope,
                   "pretrain '" + pre.learnable + "'");
        check_refs(br.cond_rhs, guess_scope,
                   "pretrain '" + pre.learnable + "'");
      }
    }
    if (pre.epochs < 0)
      throw ModelError("pretrain '" + pre.learnable + "': negative epochs");
  }

  out.def = std::move(def);
  return out;
}

Batch sample_batch(const std::vector<StateVariableDef>& states, int B,
                   std::mt19937_64& rng) {
  Batch batch;
  const std::size_t d = states.size();
  batch.columns.resize(d);
  const bool grid = !states.empty() && states[0].sampling == Sampling::FixedGrid;
  if (grid) {
    int total = 1;
    for (const auto& s : states) total *= s.points_per_dim;
    batch.size = total;
    for (auto& c : batch.columns) c.resize(total);
    // Lexicographic order, first state slowest.
    for (int row = 0; row < total; ++row) {
      int rem = row;
      for (std::size_t i = d; i-- > 0;) {
        const auto& s = states[i];
        const int idx = rem % s.points_per_dim;
        rem /= s.points_per_dim;
        batch.columns[i][row] =
            s.low + idx * (s.high - s.low) / (s.points_per_dim - 1);
      }
    }
  } else {
    if (B < 1) throw ModelError("sample_batch: batch size must be >= 1");
    batch.size = B;
    for (std::size_t i = 0; i < d; ++i) {
      std::uniform_real_distribution<double> dist(states[i].low,
                                                  states[i].high);
      batch.columns[i].resize(B);
      for (int b = 0; b < B; ++b) batch.columns[i][b] = dist(rng);
    }
  }
  return batch;
}

BoundModel bind_model(const CompiledModel& model,
                      const std::vector<NetworkState>& states, Tape& tape,
                      bool requires_grad) {
  if (states.size() != model.def.learnables.size())
    throw ModelError("bind_model: state count mismatch");
  BoundModel bound;
  bound.model = &model;
  bound.tape = &tape;
  for (std::size_t i = 0; i < states.size(); ++i)
    bound.bindings.push_back(bind_network(model.def.learnables[i].spec,
                                          states[i], tape, requires_grad));
  return bound;
}

EvalContext evaluate_variables(const BoundModel& bound, const Batch& batch,
                               const MockMap& mocks) {
  const CompiledModel& model = *bound.model;
  Tape& t = *bound.tape;
  const auto& states = model.def.state_vars;
  const std::size_t d = states.size();
  const int B = batch.size;

  // One leaf holding the whole batch so that derivatives w.r.t. every state
  // come out of a single reverse sweep.
  std::vector<double> xdata(static_cast<std::size_t>(B) * d);
  for (int b = 0; b < B; ++b)
    for (std::size_t i = 0; i < d; ++i)
      xdata[b * d + i] = batch.columns[i][b];
  Var X = t.leaf({B, static_cast<int>(d)}, xdata, true);

  EvalContext ctx;
  std::vector<Var> state_cols(d);
  for (std::size_t i = 0; i < d; ++i) {
    state_cols[i] = t.col_slice(X, static_cast<int>(i), 1);
    ctx[states[i].name] = state_cols[i];
  }
  for (const auto& p : model.def.params) ctx[p.name] = t.scalar(p.value);

  for (std::size_t li = 0; li < model.def.learnables.size(); ++li) {
    const auto& l = model.def.learnables[li];
    Var v{};
    auto mock = mocks.find(l.name);
    if (mock != mocks.end()) {
      v = evaluate(mock->second, ctx, t);
      if (v.shape().rows != B) v = t.broadcast_to(v, {B, 1});
    } else {
      std::vector<Var> in_cols;
      for (const auto& in : l.spec.input_names)
        for (std::size_t i = 0; i < d; ++i)
          if (states[i].name == in) in_cols.push_back(state_cols[i]);
      Var Xin = in_cols.size() == 1 ? in_cols[0] : t.hstack(in_cols);
      v = network_forward(l.spec, bound.bindings[li], Xin);
    }
    ctx[l.name] = v;

    std::vector<std::pair<std::string, Var>> frontier{{"", v}};
    for (int o = 1; o <= l.derivative_order; ++o) {
      std::vector<std::pair<std::string, Var>> next;
      for (const auto& [suffix, var] : frontier) {
        Var gX = grad(var, std::span<const Var>(&X, 1))[0];
        for (std::size_t i = 0; i < d; ++i) {
          Var col = t.col_slice(gX, static_cast<int>(i), 1);
          const std::string suf = suffix + states[i].name;
          ctx[l.name + "_" + suf] = col;
          next.emplace_back(suf, col);
        }
      }
      frontier = std::move(next);
    }
  }

  for (const auto& eq : model.def.equations)
    ctx[eq.lhs_name] = evaluate(eq.rhs, ctx, t);
  return ctx;
}

namespace {

Batch condition_batch(const CompiledModel& model, const ConditionDef& cond,
                      std::mt19937_64& rng) {
  const auto& states = model.def.state_vars;
  Batch batch;
  batch.columns.resize(states.size());
  if (!cond.points.empty()) {
    batch.size = static_cast<int>(cond.points.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
      batch.columns[i].resize(cond.points.size());
      for (std::size_t p = 0; p < cond.points.size(); ++p)
        batch.columns[i][p] = cond.points[p][i];
    }
  } else {
    const auto& b = *cond.boundary;
    batch.size = b.count;
    for (std::size_t i = 0; i < states.size(); ++i) {
      batch.columns[i].resize(b.count);
      if (states[i].name == b.fixed_state) {
        std::fill(batch.columns[i].begin(), batch.columns[i].end(), b.value);
      } else {
        std::uniform_real_distribution<double> dist(states[i].low,
                                                    states[i].high);
        for (int k = 0; k < b.count; ++k) batch.columns[i][k] = dist(rng);
      }
    }
  }
  return batch;
}

Var mse_of(Var residual, Tape& t) { return t.mean_all(t.square(residual)); }

// Broadcast-aware read of one batch entry from an evaluated column.
double col_at(const Var& v, int b) {
  auto data = v.data();
  return data.size() == 1 ? data[0] : data[b];
}

bool comparator_holds(Comparator c, double l, double r) {
  switch (c) {
    case Comparator::LE: return l <= r;
    case Comparator::GE: return l >= r;
    case Comparator::LT: return l < r;
    case Comparator::GT: return l > r;
  }
  return false;
}

}  // namespace

Var condition_loss_on(const BoundModel& bound, const ConditionDef& cond,
                      const Batch& batch, const MockMap& mocks) {
  EvalContext ctx = evaluate_variables(bound, batch, mocks);
  Var r = evaluate(cond.target_expr, ctx, *bound.tape);
  return mse_of(r, *bound.tape);
}

Var condition_loss(const BoundModel& bound, const ConditionDef& cond,
                   std::mt19937_64& rng, const MockMap& mocks) {
  return condition_loss_on(bound, cond, condition_batch(*bound.model, cond, rng),
                           mocks);
}

Var endogenous_loss(const EndogenousEquationDef& eq, const EvalContext& ctx,
                    Tape& tape) {
  Var l = evaluate(eq.lhs, ctx, tape);
  Var r = evaluate(eq.rhs, ctx, tape);
  return mse_of(tape.sub(l, r), tape);
}

Var hjb_loss(const HJBEquationDef& eq, const EvalContext& ctx, Tape& tape) {
  return mse_of(evaluate(eq.expr, ctx, tape), tape);
}

Var constraint_loss(const ConstraintDef& c, const EvalContext& ctx,
                    Tape& tape) {
  constexpr double kStrictEps = 1e-8;
  Var l = evaluate(c.lhs, ctx, tape);
  Var r = evaluate(c.rhs, ctx, tape);
  Var d{};
  switch (c.comparator) {
    case Comparator::LE: d = l - r; break;
    case Comparator::GE: d = r - l; break;
    case Comparator::LT: d = l - r + kStrictEps; break;
    case Comparator::GT: d = r - l + kStrictEps; break;
  }
  return mse_of(tape.relu(d), tape);
}

Var system_loss(const SystemDef& sys, const EvalContext& ctx, Tape& tape) {
  // Activation mask from detached constraint values: a point participates
  // only when every activation constraint holds there.
  int B = 1;
  for (const auto& [name, v] : ctx)
    B = std::max(B, v.shape().rows);
  std::vector<double> mask(B, 1.0);
  for (const auto& ac : sys.activation_constraints) {
    Var l = evaluate(ac.lhs, ctx, tape);
    Var r = evaluate(ac.rhs, ctx, tape);
    for (int b = 0; b < B; ++b)
      if (!comparator_holds(ac.comparator, col_at(l, b), col_at(r, b)))
        mask[b] = 0.0;
  }
  double active = 0;
  for (double m : mask) active += m;

  Var total = tape.scalar(0.0);
  if (active == 0) return total;  // no active points carry no information
  Var mask_var = tape.leaf({B, 1}, mask, false);

  EvalContext local = ctx;
  for (const auto& eq : sys.equations)
    local[eq.lhs_name] = evaluate(eq.rhs, local, tape);
  for (const auto& eq : sys.endogenous) {
    Var l = evaluate(eq.lhs, local, tape);
    Var r = evaluate(eq.rhs, local, tape);
    Var masked = tape.mul(tape.square(tape.sub(l, r)), mask_var);
    Var li = tape.sum_all(masked) / active;
    total = total + li * eq.weight;
  }
  return total;
}

namespace {

struct EpochData {
  Batch batch;
  std::vector<Batch> condition_batches;
};

EpochData make_epoch_data(const CompiledModel& model, int B,
                          std::mt19937_64& rng) {
  EpochData data;
  data.batch = sample_batch(model.def.state_vars, B, rng);
  for (const auto& c : model.def.conditions)
    data.condition_batches.push_back(condition_batch(model, c, rng));
  return data;
}

std::pair<Var, LossReport> total_loss_on(const BoundModel& bound,
                                         const EpochData& data,
                                         const MockMap& mocks) {
  const CompiledModel& model = *bound.model;
  Tape& t = *bound.tape;
  EvalContext ctx = evaluate_variables(bound, data.batch, mocks);

  LossReport report;
  Var total = t.scalar(0.0);
  auto add = [&](const std::string& label, Var loss, double weight) {
    report.components.emplace_back(label, loss.item());
    total = total + loss * weight;
  };
  for (std::size_t i = 0; i < model.def.conditions.size(); ++i) {
    const auto& c = model.def.conditions[i];
    add(c.label,
        condition_loss_on(bound, c, data.condition_batches[i], mocks),
        c.weight);
  }
  for (const auto& e : model.def.endogenous)
    add(e.label, endogenous_loss(e, ctx, t), e.weight);
  for (const auto& h : model.def.hjb) add(h.label, hjb_loss(h, ctx, t), h.weight);
  for (const auto& c : model.def.constraints)
    add(c.label, constraint_loss(c, ctx, t), c.weight);
  for (const auto& s : model.def.systems)
    add(s.label, system_loss(s, ctx, t), s.weight);

  report.total = total.item();
  report.non_finite = !std::isfinite(report.total);
  return {total, report};
}

}  // namespace

std::pair<Var, LossReport> total_loss(const BoundModel& bound,
                                      const Batch& batch,
                                      std::mt19937_64& rng,
                                      const MockMap& mocks) {
  EpochData data;
  data.batch = batch;
  for (const auto& c : bound.model->def.conditions)
    data.condition_batches.push_back(condition_batch(*bound.model, c, rng));
  return total_loss_on(bound, data, mocks);
}

std::vector<double> flatten_states(const std::vector<NetworkState>& states) {
  std::vector<double> flat;
  for (const auto& s : states)
    for (const auto& t : s.tensors) flat.insert(flat.end(), t.begin(), t.end());
  return flat;
}

void unflatten_states(std::span<const double> flat,
                      std::vector<NetworkState>& states) {
  std::size_t pos = 0;
  for (auto& s : states)
    for (auto& t : s.tensors) {
      if (pos + t.size() > flat.size())
        throw ModelError("unflatten_states: size mismatch");
      std::copy(flat.begin() + pos, flat.begin() + pos + t.size(), t.begin());
      pos += t.size();
    }
  if (pos != flat.size()) throw ModelError("unflatten_states: size mismatch");
}

std::vector<NetworkState> init_states(const CompiledModel& model,
                                      std::uint64_t seed) {
  std::vector<NetworkState> states;
  for (std::size_t i = 0; i < model.def.learnables.size(); ++i)
    states.push_back(init_network(model.def.learnables[i].spec,
                                  seed * 0x9E3779B97F4A7C15ULL + i));
  return states;
}

NetworkState pretrain(const CompiledModel& model, const PretrainDef& pre,
                      NetworkState init, std::uint64_t seed) {
  const auto& def = model.def;
  std::size_t li = 0;
  while (li < def.learnables.size() && def.learnables[li].name != pre.learnable)
    ++li;
  const auto& learnable = def.learnables[li];

  std::seed_seq seq{static_cast<std::uint64_t>(0xC0FFEEULL), seed,
                    static_cast<std::uint64_t>(li)};
  std::mt19937_64 rng(seq);
  Optimizer opt(pre.optimizer);
  NetworkState state = std::move(init);

  std::map<std::string, double> point;
  for (const auto& p : def.params) point[p.name] = p.value;

  for (int epoch = 0; epoch < pre.epochs; ++epoch) {
    Batch batch = sample_batch(def.state_vars, 100, rng);
    const int B = batch.size;

    std::vector<double> target(B);
    for (int b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < def.state_vars.size(); ++i)
        point[def.state_vars[i].name] = batch.columns[i][b];
      double val = 0;
      bool hit = false;
      for (const auto& br : pre.guess) {
        const bool match =
            !br.has_condition ||
            comparator_holds(br.cond_cmp, evaluate_scalar(br.cond_lhs, point),
                             evaluate_scalar(br.cond_rhs, point));
        if (match) {
          val = evaluate_scalar(br.value, point);
          hit = true;
          break;
        }
      }
      target[b] = hit ? val : 0.0;
    }

    auto eval_loss = [&](const NetworkState& s, Tape& t) {
      NetworkBinding binding = bind_network(learnable.spec, s, t, true);
      std::vector<Var> cols;
      for (const auto& in : learnable.spec.input_names)
        for (std::size_t i = 0; i < def.state_vars.size(); ++i)
          if (def.state_vars[i].name == in)
            cols.push_back(t.leaf({B, 1}, batch.columns[i], false));
      Var Xin = cols.size() == 1 ? cols[0] : t.hstack(cols);
      Var v = network_forward(learnable.spec, binding, Xin);
      Var tgt = t.leaf({B, 1}, target, false);
      Var loss = t.mean_all(t.square(t.sub(v, tgt)));
      return std::pair{loss, binding};
    };

    if (pre.optimizer.kind == OptimizerKind::LBFGS) {
      std::vector<double> flat;
      for (const auto& ten : state.tensors)
        flat.insert(flat.end(), ten.begin(), ten.end());
      auto closure = [&](std::span<const double> params,
                         std::vector<double>& grads) {
        NetworkState s = state;
        std::size_t pos = 0;
        for (auto& ten : s.tensors) {
          std::copy(params.begin() + pos, params.begin() + pos + ten.size(),
                    ten.begin());
          pos += ten.size();
        }
        Tape t;
        auto [loss, binding] = eval_loss(s, t);
        auto gs = grad(loss, binding.tensors);
        grads.clear();
        for (const auto& g : gs) {
          auto gd = g.data();
          grads.insert(grads.end(), gd.begin(), gd.end());
        }
        return loss.item();
      };
      opt.step(flat, closure);
      std::size_t pos = 0;
      for (auto& ten : state.tensors) {
        std::copy(flat.begin() + pos, flat.begin() + pos + ten.size(),
                  ten.begin());
        pos += ten.size();
      }
    } else {
      Tape t;
      auto [loss, binding] = eval_loss(state, t);
      auto gs = grad(loss, binding.tensors);
      std::vector<double> flat, grads;
      for (const auto& ten : state.tensors)
        flat.insert(flat.end(), ten.begin(), ten.end());
      for (const auto& g : gs) {
        auto gd = g.data();
        grads.insert(grads.end(), gd.begin(), gd.end());
      }
      opt.step(flat, grads);
      std::size_t pos = 0;
      for (auto& ten : state.tensors) {
        std::copy(flat.begin() + pos, flat.begin() + pos + ten.size(),
                  ten.begin());
        pos += ten.size();
      }
    }
  }
  return state;
}

TrainResult train(const CompiledModel& model, std::vector<NetworkState> init,
                  const TrainingConfig& config, const MockMap& mocks,
                  bool skip_pretrain) {
  if (init.empty()) init = init_states(model, config.seed);
  if (!skip_pretrain) {
    for (const auto& pre : model.def.pretrain) {
      for (std::size_t i = 0; i < model.def.learnables.size(); ++i)
        if (model.def.learnables[i].name == pre.learnable)
          init[i] = pretrain(model, pre, std::move(init[i]), config.seed);
    }
  }

  TrainResult result;
  result.best = init;
  result.final = init;
  result.best_total = std::numeric_limits<double>::infinity();

  std::seed_seq seq{static_cast<std::uint64_t>(0x5EEDULL), config.seed};
  std::mt19937_64 rng(seq);

  Optimizer opt(config.optimizer);
  std::vector<NetworkState> current = std::move(init);
  const bool lbfgs = config.optimizer.kind == OptimizerKind::LBFGS;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochData data = make_epoch_data(model, config.batch_size, rng);

    Tape tape;
    BoundModel bound = bind_model(model, current, tape, true);
    auto [loss, report] = total_loss_on(bound, data, mocks);
    report.epoch = epoch;

    if (!report.non_finite && report.total < result.best_total) {
      result.best_total = report.total;
      result.best = current;
    }

    if (report.non_finite) {
      ++result.skipped_steps;
      result.history.push_back(std::move(report));
      continue;
    }

    std::vector<double> flat = flatten_states(current);
    if (lbfgs) {
      auto closure = [&](std::span<const double> params,
                         std::vector<double>& grads) {
        std::vector<NetworkState> s = current;
        unflatten_states(params, s);
        Tape t;
        BoundModel b = bind_model(model, s, t, true);
        auto [l, rep] = total_loss_on(b, data, mocks);
        std::vector<Var> wrt;
        for (const auto& bind : b.bindings)
          wrt.insert(wrt.end(), bind.tensors.begin(), bind.tensors.end());
        auto gs = grad(l, wrt);
        grads.clear();
        for (const auto& g : gs) {
          auto gd = g.data();
          grads.insert(grads.end(), gd.begin(), gd.end());
        }
        return l.item();
      };
      if (!opt.step(flat, closure)) ++result.skipped_steps;
      unflatten_states(flat, current);
    } else {
      std::vector<Var> wrt;
      for (const auto& bind : bound.bindings)
        wrt.insert(wrt.end(), bind.tensors.begin(), bind.tensors.end());
      auto gs = grad(loss, wrt);
      std::vector<double> grads;
      for (const auto& g : gs) {
        auto gd = g.data();
        grads.insert(grads.end(), gd.begin(), gd.end());
      }
      if (opt.step(flat, grads))
        unflatten_states(flat, current);
      else
        ++result.skipped_steps;
    }
    result.history.push_back(std::move(report));
  }

  result.final = std::move(current);
  if (!std::isfinite(result.best_total) || config.epochs == 0)
    result.best = result.final;
  return result;
}

std::string losses_csv(const std::vector<LossReport>& history) {
  std::ostringstream out;
  out << "epoch";
  if (!history.empty())
    for (const auto& [label, value] : history[0].components)
      out << "," << label;
  out << ",total\n";
  for (const auto& rep : history) {
    out << rep.epoch;
    for (const auto& [label, value] : rep.components) {
      out << ",";
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      out << buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", rep.total);
    out << "," << buf << "\n";
  }
  return out.str();
}

}  // namespace deqn
