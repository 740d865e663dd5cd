#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "deqn/latex.hpp"

using namespace deqn;

TEST_CASE("golden normalizations") {
  struct Golden {
    const char* latex;
    const char* formula;
  };
  const std::vector<Golden> goldens = {
      {"\\frac{a}{b}", "((a)/(b))"},
      {"\\frac{\\sigma}{1 - \\psi}", "((sigma)/(1-psi))"},
      {"\\sqrt{\\eta}", "sqrt(eta)"},
      {"\\sigma", "sigma"},
      {"\\sigma_q", "sigma_q"},
      {"\\sigma_q^a", "sigma_q_a"},
      {"\\sigma_t^q", "sigma_q"},  // the time subscript is dropped
      {"\\eta_t", "eta"},
      {"x^2", "x^(2)"},
      {"x^{-2}", "x^(-2)"},
      {"x^{a + 1}", "x^(a+1)"},
      {"2\\sigma q", "2*sigma*q"},
      {"a + b \\cdot c", "a+b*c"},
      {"q(\\psi - \\eta)", "q*(psi-eta)"},
      {"\\left(a + b\\right)^2", "(a+b)^(2)"},
      {"\\exp(x)", "exp(x)"},
      {"\\log\\left(c_t\\right)", "log(c)"},
      {"\\sin{\\pi x}", "sin(pi*x)"},
      {"\\frac{\\partial q}{\\partial \\eta}", "q_eta"},
      {"\\frac{\\partial^2 q}{\\partial \\eta^2}", "q_etaeta"},
      {"\\frac{\\partial^2 v}{\\partial x \\partial y}", "v_xy"},
      {"\\frac{\\partial \\xi^i}{\\partial \\eta}", "xi_i_eta"},
      {"2 q_\\eta (\\psi - \\eta)", "2*q_eta*(psi-eta)"},
      {"{a + b} c", "(a+b)*c"},
      {"\\rho \\xi_t^h", "rho*xi_h"},
  };
  for (const auto& g : goldens)
    CHECK_MESSAGE(latex_to_formula(g.latex) == g.formula,
                  "latex: ", g.latex, " got: ", latex_to_formula(g.latex));
}

TEST_CASE("name_map overrides the default-mapped symbol name") {
  std::map<std::string, std::string> nm{{"sigma_q", "sigq"}, {"eta", "e"}};
  CHECK(latex_to_formula("\\sigma_q + \\eta", nm) == "sigq+e");
  CHECK(latex_to_formula("\\frac{\\partial q}{\\partial \\eta}", nm) ==
        "q_e");
}

TEST_CASE("two-stage contract: parse_latex equals parse of normalized text") {
  const std::vector<std::string> inputs = {
      "\\frac{a}{b} + \\sigma_q^a x^2",
      "\\frac{\\partial^2 q}{\\partial \\eta^2} - 2\\sigma q",
      "\\left(a + b\\right)^2 \\cdot \\exp(x)",
      "\\sqrt{\\eta} / \\rho",
  };
  for (const auto& t : inputs)
    CHECK(structurally_equal(parse_latex(t),
                             parse_formula(latex_to_formula(t))));
}

TEST_CASE("values survive the translation") {
  std::map<std::string, double> ctx{{"sigma", 0.1}, {"psi", 0.4},
                                    {"eta", 0.3}, {"q", 1.1}};
  CHECK(evaluate_scalar(parse_latex("\\frac{\\sigma}{1 - \\psi}"), ctx) ==
        doctest::Approx(0.1 / 0.6));
  CHECK(evaluate_scalar(parse_latex("q^2 - \\eta\\sigma"), ctx) ==
        doctest::Approx(1.1 * 1.1 - 0.03));
}

TEST_CASE("unsupported constructs are rejected") {
  CHECK_THROWS_AS(latex_to_formula("\\lfloor x \\rfloor"), LatexError);
  CHECK_THROWS_AS(latex_to_formula("{a + b"), LatexError);
  CHECK_THROWS_AS(latex_to_formula("a & b"), LatexError);
  CHECK_THROWS_AS(latex_to_formula("x_{\\frac}"), LatexError);
  // Declared second order but only one state in the denominator.
  CHECK_THROWS_AS(
      latex_to_formula("\\frac{\\partial^2 q}{\\partial \\eta}"), LatexError);
}
