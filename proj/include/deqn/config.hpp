#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqn/model.hpp"

namespace deqn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigDocument {
  ModelDefinition model;
  TrainingConfig training;
  // Optional oracle section (closed forms only; property checks are code).
  std::map<std::string, ExprPtr> closed_form;
  std::vector<int> eval_grid;
};

// JSON text <-> document. Schema errors throw ConfigError with the offending
// key in the message; unknown keys are rejected. Formula strings are raw
// grammar by default; "latex": true on an entry switches that entry's
// formulas to LaTeX input.
ConfigDocument parse_config(const std::string& text);
std::string write_config(const ConfigDocument& doc);

// Checkpoint: every learnable's network (spec + parameters) plus optimizer
// state, keyed by learnable name.
struct Checkpoint {
  std::vector<std::string> names;
  std::vector<NetworkSpec> specs;
  std::vector<NetworkState> states;
  std::string optimizer_state;  // empty if none
};

std::string write_checkpoint(const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& text);  // throws ConfigError

}  // namespace deqn
