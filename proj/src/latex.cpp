#include "deqn/latex.hpp"

#include <cctype>
#include <vector>

namespace deqn {

namespace {

const std::map<std::string, std::string>& greek_table() {
  static const std::map<std::string, std::string> table = {
      {"alpha", "alpha"},     {"beta", "beta"},       {"gamma", "gamma"},
      {"delta", "delta"},     {"epsilon", "epsilon"}, {"zeta", "zeta"},
      {"eta", "eta"},         {"theta", "theta"},     {"iota", "iota"},
      {"kappa", "kappa"},     {"lambda", "lambda"},   {"mu", "mu"},
      {"nu", "nu"},           {"xi", "xi"},           {"pi", "pi"},
      {"rho", "rho"},         {"sigma", "sigma"},     {"tau", "tau"},
      {"upsilon", "upsilon"}, {"phi", "phi"},         {"chi", "chi"},
      {"psi", "psi"},         {"omega", "omega"},     {"Gamma", "Gamma"},
      {"Delta", "Delta"},     {"Theta", "Theta"},     {"Lambda", "Lambda"},
      {"Xi", "Xi"},           {"Pi", "Pi"},           {"Sigma", "Sigma"},
      {"Phi", "Phi"},         {"Psi", "Psi"},         {"Omega", "Omega"},
      {"varepsilon", "epsilon"}, {"varphi", "phi"},   {"varsigma", "sigma"},
  };
  return table;
}

struct Normalizer {
  const std::string& s;
  const std::map<std::string, std::string>& name_map;
  std::size_t pos = 0;
  std::string out;
  bool prev_operand = false;

  Normalizer(const std::string& text,
             const std::map<std::string, std::string>& nm)
      : s(text), name_map(nm) {}

  [[noreturn]] void fail(const std::string& msg) { throw LatexError(msg); }

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= s.size();
  }

  void emit_operand(const std::string& t) {
    if (prev_operand) out += '*';
    out += t;
    prev_operand = true;
  }

  void emit_operator(const std::string& t) {
    out += t;
    prev_operand = false;
  }

  // Reads {...} and returns the raw content (balanced braces).
  std::string read_group() {
    skip_ws();
    if (pos >= s.size() || s[pos] != '{') fail("expected '{'");
    int depth = 0;
    const std::size_t start = ++pos;
    for (; pos < s.size(); ++pos) {
      if (s[pos] == '{') ++depth;
      if (s[pos] == '}') {
        if (depth == 0) return s.substr(start, pos++ - start);
        --depth;
      }
    }
    fail("unbalanced braces");
  }

  std::string read_command() {
    // caller consumed '\'
    const std::size_t start = pos;
    while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos == start) fail("lone backslash");
    return s.substr(start, pos - start);
  }

  std::string normalize_sub(const std::string& text) {
    Normalizer inner(text, name_map);
    return inner.run();
  }

  // Script content flattened into name characters (letters, digits, greek).
  std::string flatten_script(const std::string& text) {
    std::string r;
    std::size_t p = 0;
    while (p < text.size()) {
      const char c = text[p];
      if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        ++p;
      } else if (c == '\\') {
        ++p;
        std::size_t st = p;
        while (p < text.size() &&
               std::isalpha(static_cast<unsigned char>(text[p])))
          ++p;
        const std::string cmd = text.substr(st, p - st);
        auto it = greek_table().find(cmd);
        if (it == greek_table().end())
          fail("unsupported LaTeX command in script: \\" + cmd);
        r += it->second;
      } else if (std::isalnum(static_cast<unsigned char>(c))) {
        r += c;
        ++p;
      } else {
        fail(std::string("unsupported character in script: ") + c);
      }
    }
    return r;
  }

  static bool all_digits(const std::string& t) {
    if (t.empty()) return false;
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c)) && c != '.')
        return false;
    return true;
  }

  // Reads a single script token after ^ or _: a braced group, one
  // letter/digit, or one greek command. Returns raw content.
  std::string read_script() {
    skip_ws();
    if (pos >= s.size()) fail("dangling script");
    if (s[pos] == '{') return read_group();
    if (s[pos] == '\\') {
      ++pos;
      return "\\" + read_command();
    }
    return std::string(1, s[pos++]);
  }

  // Base symbol already mapped; consumes attached scripts and returns the
  // final operand text ("sigma_qa", "x^(2)", ...).
  std::string attach_scripts(std::string base) {
    std::string name = std::move(base);
    std::string power;  // trailing numeric superscripts
    for (;;) {
      skip_ws();
      if (pos < s.size() && s[pos] == '_') {
        ++pos;
        const std::string sc = flatten_script(read_script());
        if (sc != "t") name += "_" + sc;  // the time subscript is dropped
      } else if (pos < s.size() && s[pos] == '^') {
        ++pos;
        const std::string raw = read_script();
        if (all_digits(raw) || (raw.size() > 1 && raw[0] == '-' &&
                                all_digits(raw.substr(1)))) {
          power += "^(" + raw + ")";
        } else {
          // Letter superscripts name a symbol variant (sigma^a); anything
          // that is not a plain name fragment is an exponent expression.
          bool as_name = true;
          std::string flat;
          try {
            flat = flatten_script(raw);
          } catch (const LatexError&) {
            as_name = false;
          }
          if (as_name)
            name += "_" + flat;
          else
            power += "^(" + normalize_sub(raw) + ")";
        }
      } else {
        break;
      }
    }
    auto it = name_map.find(name);
    if (it != name_map.end()) name = it->second;
    return name + power;
  }

  // --- partial derivative fractions ---------------------------------------

  struct PartialSpec {
    int order = 0;
    std::string var;  // numerator: empty for denominator parses
  };

  // Parses "\partial[^k] <symbol>" sequences.
  // For the numerator: returns order and variable name.
  bool starts_with_partial(const std::string& g) {
    std::size_t p = 0;
    while (p < g.size() && std::isspace(static_cast<unsigned char>(g[p]))) ++p;
    return g.compare(p, 8, "\\partial") == 0;
  }

  std::string derivative_name(const std::string& num, const std::string& den) {
    // Numerator: \partial[^k] v
    Normalizer n(num, name_map);
    n.skip_ws();
    if (n.pos >= n.s.size() || n.s[n.pos] != '\\') fail("bad derivative");
    ++n.pos;
    if (n.read_command() != "partial") fail("bad derivative numerator");
    int order = 1;
    n.skip_ws();
    if (n.pos < n.s.size() && n.s[n.pos] == '^') {
      ++n.pos;
      const std::string sc = n.read_script();
      order = std::stoi(sc);
    }
    n.skip_ws();
    std::string var;
    if (n.pos < n.s.size() && n.s[n.pos] == '\\') {
      ++n.pos;
      const std::string cmd = n.read_command();
      auto it = greek_table().find(cmd);
      if (it == greek_table().end())
        fail("unsupported symbol in derivative: \\" + cmd);
      var = n.attach_scripts(it->second);
    } else {
      std::size_t st = n.pos;
      while (n.pos < n.s.size() &&
             std::isalnum(static_cast<unsigned char>(n.s[n.pos])))
        ++n.pos;
      if (st == n.pos) fail("missing variable in derivative numerator");
      var = n.attach_scripts(n.s.substr(st, n.pos - st));
    }
    if (!n.eof()) fail("unexpected content in derivative numerator");

    // Denominator: sequence of \partial x[^2]
    Normalizer d(den, name_map);
    std::string states;
    int total = 0;
    while (!d.eof()) {
      if (d.s[d.pos] != '\\') fail("bad derivative denominator");
      ++d.pos;
      if (d.read_command() != "partial") fail("bad derivative denominator");
      d.skip_ws();
      std::string st_name;
      if (d.pos < d.s.size() && d.s[d.pos] == '\\') {
        ++d.pos;
        const std::string cmd = d.read_command();
        auto it = greek_table().find(cmd);
        if (it == greek_table().end())
          fail("unsupported symbol in derivative: \\" + cmd);
        st_name = cmd;
        st_name = it->second;
      } else {
        std::size_t sp = d.pos;
        while (d.pos < d.s.size() &&
               std::isalnum(static_cast<unsigned char>(d.s[d.pos])))
          ++d.pos;
        if (sp == d.pos) fail("missing state in derivative denominator");
        st_name = d.s.substr(sp, d.pos - sp);
      }
      // Drop a time subscript on the state symbol (\eta_t).
      d.skip_ws();
      int rep = 1;
      if (d.pos < d.s.size() && d.s[d.pos] == '_') {
        ++d.pos;
        const std::string sc = d.flatten_script(d.read_script());
        if (sc != "t") st_name += "_" + sc;
        d.skip_ws();
      }
      if (d.pos < d.s.size() && d.s[d.pos] == '^') {
        ++d.pos;
        rep = std::stoi(d.read_script());
      }
      auto it = name_map.find(st_name);
      if (it != name_map.end()) st_name = it->second;
      for (int i = 0; i < rep; ++i) states += st_name;
      total += rep;
    }
    if (total != order) fail("derivative order mismatch");
    return var + "_" + states;
  }

  // --- main loop ----------------------------------------------------------

  void handle_command() {
    const std::string cmd = read_command();
    if (cmd == "frac") {
      const std::string g1 = read_group();
      const std::string g2 = read_group();
      if (starts_with_partial(g1)) {
        emit_operand(attach_scripts(derivative_name(g1, g2)));
      } else {
        emit_operand("((" + normalize_sub(g1) + ")/(" + normalize_sub(g2) +
                     "))");
      }
      return;
    }
    if (cmd == "sqrt") {
      emit_operand("sqrt(" + normalize_sub(read_group()) + ")");
      return;
    }
    if (cmd == "log" || cmd == "exp" || cmd == "sin" || cmd == "cos" ||
        cmd == "tanh") {
      skip_ws();
      std::string arg;
      if (pos < s.size() && s[pos] == '{') {
        arg = normalize_sub(read_group());
      } else if (pos < s.size() && (s[pos] == '(' || s[pos] == '\\')) {
        // \log(...) or \log\left(...\right): consume one parenthesized
        // factor by scanning balanced \left(/( pairs.
        arg = read_paren_factor();
      } else {
        fail("expected argument after \\" + cmd);
      }
      emit_operand(cmd + "(" + arg + ")");
      return;
    }
    if (cmd == "left") {
      skip_ws();
      if (pos < s.size() && s[pos] == '(') {
        ++pos;
        if (prev_operand) out += '*';
        emit_operator("(");
        return;
      }
      fail("unsupported \\left delimiter");
    }
    if (cmd == "right") {
      skip_ws();
      if (pos < s.size() && s[pos] == ')') {
        ++pos;
        out += ')';
        prev_operand = true;
        return;
      }
      fail("unsupported \\right delimiter");
    }
    if (cmd == "cdot") {
      emit_operator("*");
      return;
    }
    auto it = greek_table().find(cmd);
    if (it != greek_table().end()) {
      emit_operand(attach_scripts(it->second));
      return;
    }
    fail("unsupported LaTeX command: \\" + cmd);
  }

  // Consumes "(...)" or "\left( ... \right)" and returns normalized content.
  std::string read_paren_factor() {
    skip_ws();
    std::size_t start;
    int depth = 0;
    if (s[pos] == '(') {
      start = ++pos;
      for (; pos < s.size(); ++pos) {
        if (s[pos] == '(') ++depth;
        if (s[pos] == ')') {
          if (depth == 0) {
            std::string content = s.substr(start, pos - start);
            ++pos;
            return normalize_sub(content);
          }
          --depth;
        }
      }
      fail("unbalanced parentheses");
    }
    // \left( ... \right)
    if (s.compare(pos, 6, "\\left(") == 0) {
      pos += 6;
      start = pos;
      for (; pos < s.size(); ++pos) {
        if (s.compare(pos, 6, "\\left(") == 0) ++depth;
        if (s.compare(pos, 7, "\\right)") == 0) {
          if (depth == 0) {
            std::string content = s.substr(start, pos - start);
            pos += 7;
            return normalize_sub(content);
          }
          --depth;
        }
      }
      fail("unbalanced \\left( \\right)");
    }
    fail("expected parenthesized argument");
  }

  std::string run() {
    while (!eof()) {
      const char c = s[pos];
      if (c == '\\') {
        ++pos;
        handle_command();
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t st = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) ||
                s[pos] == '_'))
          ++pos;
        // a trailing _ belongs to a script only if it splits letters;
        // identifiers in latex source may themselves contain '_mapped'
        // names only via name_map, so re-split on the first '_'.
        std::string run_text = s.substr(st, pos - st);
        std::size_t us = run_text.find('_');
        if (us != std::string::npos) {
          pos = st + us;  // reparse scripts through attach_scripts
          run_text = run_text.substr(0, us);
        }
        emit_operand(attach_scripts(run_text));
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t st = pos;
        while (pos < s.size() &&
               (std::isdigit(static_cast<unsigned char>(s[pos])) ||
                s[pos] == '.'))
          ++pos;
        emit_operand(attach_scripts(s.substr(st, pos - st)));
      } else if (c == '+' || c == '-' || c == '*' || c == '/') {
        ++pos;
        emit_operator(std::string(1, c));
      } else if (c == '(') {
        ++pos;
        if (prev_operand) out += '*';
        emit_operator("(");
      } else if (c == ')') {
        ++pos;
        out += ')';
        prev_operand = true;
      } else if (c == '^') {
        ++pos;
        const std::string sc = read_script();
        out += "^(" + normalize_sub(sc) + ")";
        prev_operand = true;
      } else if (c == '{') {
        // bare group acts as parentheses
        emit_operand("(" + normalize_sub(read_group()) + ")");
      } else if (c == '}') {
        fail("unbalanced braces");
      } else if (c == ',') {
        fail("unsupported character ','");
      } else {
        fail(std::string("unsupported character '") + c + "'");
      }
    }
    return out;
  }
};

}  // namespace

std::string latex_to_formula(
    const std::string& text,
    const std::map<std::string, std::string>& name_map) {
  Normalizer n(text, name_map);
  return n.run();
}

ExprPtr parse_latex(const std::string& text,
                    const std::map<std::string, std::string>& name_map) {
  return parse_formula(latex_to_formula(text, name_map));
}

}  // namespace deqn
