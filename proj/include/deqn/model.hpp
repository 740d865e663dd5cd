#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deqn/expr.hpp"
#include "deqn/network.hpp"
#include "deqn/optimizer.hpp"

namespace deqn {

enum class Sampling { UniformRandom, FixedGrid };

struct StateVariableDef {
  std::string name;
  double low = -1.0;
  double high = 1.0;
  Sampling sampling = Sampling::UniformRandom;
  int points_per_dim = 0;  // FixedGrid only
};

struct ParameterDef {
  std::string name;
  double value = 0.0;
};

enum class LearnableRole { Agent, EndogenousVariable };

struct LearnableDef {
  std::string name;
  LearnableRole role = LearnableRole::EndogenousVariable;
  NetworkSpec spec;
  int derivative_order = 2;
};

struct EquationDef {
  std::string lhs_name;
  ExprPtr rhs;
};

struct ConditionDef {
  std::string label;
  ExprPtr target_expr;  // residual driven to zero
  // Point set: either explicit points (one entry per point, one value per
  // state variable in model order) or a boundary sampler.
  std::vector<std::vector<double>> points;
  struct BoundarySampler {
    std::string fixed_state;
    double value = 0.0;
    int count = 100;
  };
  std::optional<BoundarySampler> boundary;
  double weight = 1.0;
};

enum class Comparator { LE, GE, LT, GT };

struct ConstraintDef {
  std::string label;
  ExprPtr lhs, rhs;
  Comparator comparator = Comparator::LE;
  double weight = 1.0;
};

struct EndogenousEquationDef {
  std::string label;
  ExprPtr lhs, rhs;
  double weight = 1.0;
};

struct HJBEquationDef {
  std::string label;
  ExprPtr expr;  // the supremum value, driven to zero
  double weight = 1.0;
};

struct SystemDef {
  std::string label;
  std::vector<ConstraintDef> activation_constraints;
  std::vector<EquationDef> equations;  // scoped to this system's loss
  std::vector<EndogenousEquationDef> endogenous;
  double weight = 1.0;
};

// Piecewise initial guess: branches tried in order, first whose condition
// holds wins; a branch without a condition always matches.
struct GuessBranch {
  bool has_condition = false;
  ExprPtr cond_lhs, cond_rhs;  // set when has_condition
  Comparator cond_cmp = Comparator::LT;
  ExprPtr value;
};

struct PretrainDef {
  std::string learnable;
  std::vector<GuessBranch> guess;
  int epochs = 6000;
  OptimizerConfig optimizer;  // defaults: Adam, lr 1e-3
};

struct TrainingConfig {
  int batch_size = 100;
  int epochs = 0;
  int paper_epochs = 0;  // full-scale epoch count; 0 means same as epochs
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

struct ModelDefinition {
  std::vector<StateVariableDef> state_vars;
  std::vector<ParameterDef> params;
  std::vector<LearnableDef> learnables;
  std::vector<EquationDef> equations;
  std::vector<ConditionDef> conditions;
  std::vector<EndogenousEquationDef> endogenous;
  std::vector<HJBEquationDef> hjb;
  std::vector<ConstraintDef> constraints;
  std::vector<SystemDef> systems;
  std::vector<PretrainDef> pretrain;
};

struct LossReport {
  int epoch = 0;
  std::vector<std::pair<std::string, double>> components;
  double total = 0.0;
  bool non_finite = false;
};

}  // namespace deqn
