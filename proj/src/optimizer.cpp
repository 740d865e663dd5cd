#include "deqn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "deqn/util.hpp"

namespace deqn {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0))
    throw std::invalid_argument("optimizer: learning_rate must be > 0");
  if (kind != OptimizerKind::LBFGS) {
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
      throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
    if (!(eps > 0)) throw std::invalid_argument("optimizer: eps must be > 0");
  }
  if (kind == OptimizerKind::AdamW && weight_decay < 0)
    throw std::invalid_argument("optimizer: weight_decay must be >= 0");
  if (kind == OptimizerKind::LBFGS) {
    if (history_size < 0)
      throw std::invalid_argument("optimizer: history_size must be >= 0");
    if (max_iter < 1 || max_line_search_steps < 1)
      throw std::invalid_argument("optimizer: iteration limits must be >= 1");
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  config_.validate();
}

namespace {

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> a) {
  double m = 0;
  for (double x : a) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace

bool Optimizer::step(std::vector<double>& params,
                     std::span<const double> grads) {
  if (config_.kind == OptimizerKind::LBFGS)
    throw std::logic_error("L-BFGS requires the closure-based step()");
  if (grads.size() != params.size())
    throw std::invalid_argument("optimizer: gradient size mismatch");
  if (!all_finite(grads)) return false;

  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++step_count_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const bool decoupled = config_.kind == OptimizerKind::AdamW;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (decoupled) params[i] *= 1.0 - lr * config_.weight_decay;
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
  }
  return true;
}

bool Optimizer::step(std::vector<double>& params, const LossClosure& closure,
                     double* final_loss) {
  if (config_.kind != OptimizerKind::LBFGS)
    throw std::logic_error("closure-based step() is L-BFGS only");
  const std::size_t n = params.size();
  std::vector<double> g;
  double loss = closure(params, g);
  if (g.size() != n)
    throw std::invalid_argument("optimizer: closure gradient size mismatch");
  if (final_loss) *final_loss = loss;
  if (!std::isfinite(loss) || !all_finite(g)) return false;

  bool moved = false;
  std::vector<double> d(n), x_new(n), g_new;
  for (int it = 0; it < config_.max_iter; ++it) {
    if (inf_norm(g) <= config_.tolerance_grad) break;

    // Two-loop recursion over stored curvature pairs.
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    const std::size_t h = s_hist_.size();
    std::vector<double> alpha(h), rho(h);
    for (std::size_t i = 0; i < h; ++i)
      rho[i] = 1.0 / dot(s_hist_[i], y_hist_[i]);
    for (std::size_t i = h; i-- > 0;) {
      alpha[i] = rho[i] * dot(s_hist_[i], d);
      for (std::size_t j = 0; j < n; ++j) d[j] -= alpha[i] * y_hist_[i][j];
    }
    if (h > 0) {
      const double gamma =
          dot(s_hist_[h - 1], y_hist_[h - 1]) /
          dot(y_hist_[h - 1], y_hist_[h - 1]);
      for (double& dj : d) dj *= gamma;
    }
    for (std::size_t i = 0; i < h; ++i) {
      const double beta = rho[i] * dot(y_hist_[i], d);
      for (std::size_t j = 0; j < n; ++j)
        d[j] += (alpha[i] - beta) * s_hist_[i][j];
    }

    const double gd = dot(g, d);
    if (!(gd < 0)) break;  // not a descent direction

    // Armijo backtracking from the configured learning rate.
    constexpr double kArmijoC = 1e-4;
    double t = config_.learning_rate;
    double loss_new = 0;
    bool accepted = false;
    for (int ls = 0; ls < config_.max_line_search_steps; ++ls) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = params[j] + t * d[j];
      loss_new = closure(x_new, g_new);
      if (std::isfinite(loss_new) && loss_new <= loss + kArmijoC * t * gd &&
          all_finite(g_new)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_new[j] - params[j];
      y[j] = g_new[j] - g[j];
    }
    if (config_.history_size > 0 && dot(s, y) > 0) {
      s_hist_.push_back(std::move(s));
      y_hist_.push_back(std::move(y));
      while (static_cast<int>(s_hist_.size()) > config_.history_size) {
        s_hist_.pop_front();
        y_hist_.pop_front();
      }
    }
    params = x_new;
    g = g_new;
    loss = loss_new;
    moved = true;
    if (final_loss) *final_loss = loss;
  }
  return moved;
}

std::string Optimizer::serialize_state() const {
  nlohmann::json j;
  j["step_count"] = step_count_;
  j["m"] = util::base64_encode(m_);
  j["v"] = util::base64_encode(v_);
  nlohmann::json s = nlohmann::json::array(), y = nlohmann::json::array();
  for (const auto& p : s_hist_) s.push_back(util::base64_encode(p));
  for (const auto& p : y_hist_) y.push_back(util::base64_encode(p));
  j["s_hist"] = s;
  j["y_hist"] = y;
  return j.dump();
}

void Optimizer::deserialize_state(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("optimizer state parse error: ") +
                             e.what());
  }
  step_count_ = j.at("step_count").get<std::int64_t>();
  m_ = util::base64_decode_doubles(j.at("m").get<std::string>());
  v_ = util::base64_decode_doubles(j.at("v").get<std::string>());
  s_hist_.clear();
  y_hist_.clear();
  for (const auto& p : j.at("s_hist"))
    s_hist_.push_back(util::base64_decode_doubles(p.get<std::string>()));
  for (const auto& p : j.at("y_hist"))
    y_hist_.push_back(util::base64_decode_doubles(p.get<std::string>()));
  if (s_hist_.size() != y_hist_.size())
    throw std::runtime_error("optimizer state: mismatched history lengths");
}

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::LBFGS: return "lbfgs";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "adamw") return OptimizerKind::AdamW;
  if (s == "lbfgs") return OptimizerKind::LBFGS;
  throw std::invalid_argument("unknown optimizer kind: " + s);
}

}  // namespace deqn
