#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "deqn/expr.hpp"

namespace deqn {

class LatexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Textual normalization of the supported LaTeX subset into plain formula
// syntax. See docs/formula_syntax.md for the grammar and the default name
// mapping. `name_map` entries override the default-mapped name of a symbol
// occurrence (keyed by the default-mapped name).
std::string latex_to_formula(
    const std::string& text,
    const std::map<std::string, std::string>& name_map = {});

// Two-stage contract: parse_latex(x) == parse_formula(latex_to_formula(x)).
ExprPtr parse_latex(const std::string& text,
                    const std::map<std::string, std::string>& name_map = {});

}  // namespace deqn
