#pragma once

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deqn/model.hpp"

namespace deqn {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validated model: name tables resolved, equation dependency order checked,
// derivative references bounded by each learnable's derivative_order.
struct CompiledModel {
  ModelDefinition def;
  // Names of every derivative column each learnable contributes, in the
  // order they are produced (order 1 first, then order 2, ...).
  std::vector<std::vector<std::string>> derivative_names;  // per learnable
  bool fixed_grid = false;  // all state vars sampled on a fixed grid
};

CompiledModel compile_model(ModelDefinition def);  // throws ModelError

// One sampled batch: column-major per state variable.
struct Batch {
  int size = 0;
  std::vector<std::vector<double>> columns;  // per state var, length size
};

Batch sample_batch(const std::vector<StateVariableDef>& states, int B,
                   std::mt19937_64& rng);

// Closed-form stand-ins for learnables (testing / oracle injection): the
// expression is evaluated over the state columns instead of the network.
using MockMap = std::map<std::string, ExprPtr>;

// A model bound to one tape for one evaluation/step.
struct BoundModel {
  const CompiledModel* model = nullptr;
  Tape* tape = nullptr;
  std::vector<NetworkBinding> bindings;  // parallel to def.learnables
};

BoundModel bind_model(const CompiledModel& model,
                      const std::vector<NetworkState>& states, Tape& tape,
                      bool requires_grad = true);

// Context: state columns, parameters, learnable values, derivative columns
// up to each learnable's order, then equation-defined variables in
// declaration order.
EvalContext evaluate_variables(const BoundModel& bound, const Batch& batch,
                               const MockMap& mocks = {});

// Loss components (differentiable scalars on the bound tape).
Var condition_loss(const BoundModel& bound, const ConditionDef& cond,
                   std::mt19937_64& rng, const MockMap& mocks = {});
Var condition_loss_on(const BoundModel& bound, const ConditionDef& cond,
                      const Batch& batch, const MockMap& mocks = {});
Var endogenous_loss(const EndogenousEquationDef& eq, const EvalContext& ctx,
                    Tape& tape);
Var hjb_loss(const HJBEquationDef& eq, const EvalContext& ctx, Tape& tape);
Var constraint_loss(const ConstraintDef& c, const EvalContext& ctx,
                    Tape& tape);
Var system_loss(const SystemDef& sys, const EvalContext& ctx, Tape& tape);

// Weighted sum of every component; the report itemizes each label.
std::pair<Var, LossReport> total_loss(const BoundModel& bound,
                                      const Batch& batch,
                                      std::mt19937_64& rng,
                                      const MockMap& mocks = {});

// Flat parameter vector across all learnables, in learnable order.
std::vector<double> flatten_states(const std::vector<NetworkState>& states);
void unflatten_states(std::span<const double> flat,
                      std::vector<NetworkState>& states);

struct TrainResult {
  std::vector<NetworkState> best;
  std::vector<NetworkState> final;
  double best_total = 0.0;
  std::vector<LossReport> history;
  int skipped_steps = 0;
};

// Algorithm: per epoch sample -> evaluate -> losses -> gradient -> step;
// lowest-total state is deep-copied; non-finite totals skip the step.
// Runs any pretraining phases first unless `skip_pretrain`.
TrainResult train(const CompiledModel& model,
                  std::vector<NetworkState> init,
                  const TrainingConfig& config,
                  const MockMap& mocks = {},
                  bool skip_pretrain = false);

// Fit one learnable to a piecewise guess by MSE on sampled state batches.
NetworkState pretrain(const CompiledModel& model, const PretrainDef& pre,
                      NetworkState init, std::uint64_t seed);

// Fresh seeded initial states for every learnable.
std::vector<NetworkState> init_states(const CompiledModel& model,
                                      std::uint64_t seed);

// CSV: epoch, one column per labeled component, total.
std::string losses_csv(const std::vector<LossReport>& history);

}  // namespace deqn
