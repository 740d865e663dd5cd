#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "deqn/framework.hpp"

namespace deqn {

// All variables (states, learnables, derivatives, equation-defined) plus the
// per-label endogenous/HJB residuals, evaluated on an equispaced grid.
struct GridEval {
  int size = 0;
  std::vector<std::string> state_names;
  std::map<std::string, std::vector<double>> vars;
  std::map<std::string, std::vector<double>> residuals;  // keyed by label
};

GridEval eval_on_grid(const CompiledModel& model,
                      const std::vector<NetworkState>& states,
                      const std::vector<int>& counts,
                      const MockMap& mocks = {});

struct PropertyCheck {
  std::string name;
  // Returns (pass, measured value).
  std::function<std::pair<bool, double>(const GridEval&)> fn;
};

struct ProblemDefinition {
  std::string name;
  ModelDefinition model;
  TrainingConfig training;
  std::map<std::string, ExprPtr> closed_form;  // per learnable, may be empty
  std::vector<PropertyCheck> property_checks;
  std::vector<int> eval_grid;  // points per state variable
};

struct OracleEntry {
  std::string name;
  bool pass = true;
  double measured = 0.0;     // property checks
  double max_abs_err = 0.0;  // closed forms
  double rms_err = 0.0;
};

struct OracleReport {
  std::vector<OracleEntry> entries;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

// Closed forms: max-abs and RMS error per variable over the eval grid (pass
// is left true; thresholds are the caller's concern). Property checks: named
// pass/fail with the measured value.
OracleReport evaluate_against_oracle(const ProblemDefinition& problem,
                                     const std::vector<NetworkState>& states,
                                     const MockMap& mocks = {});

std::vector<std::string> problem_names();
ProblemDefinition make_problem(const std::string& name);

}  // namespace deqn
