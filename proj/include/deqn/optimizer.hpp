#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace deqn {

enum class OptimizerKind { Adam, AdamW, LBFGS };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  // Adam / AdamW
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;  // AdamW only
  // L-BFGS
  int history_size = 10;
  int max_iter = 20;  // inner iterations per step() call
  int max_line_search_steps = 20;
  double tolerance_grad = 1e-10;

  void validate() const;  // throws std::invalid_argument
};

// Loss + gradient at the supplied parameter vector. `grads` is resized by the
// callee.
using LossClosure =
    std::function<double(std::span<const double> params,
                         std::vector<double>& grads)>;

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }

  // Adam / AdamW. Returns false (and leaves params, state untouched) when any
  // gradient entry is non-finite.
  bool step(std::vector<double>& params, std::span<const double> grads);

  // L-BFGS. Runs up to max_iter inner iterations, each with an Armijo
  // backtracking line search starting at learning_rate. Returns false when no
  // progress could be made (line-search failure or non-finite values); params
  // hold the best point seen either way. `final_loss` (optional) receives the
  // loss at the returned params.
  bool step(std::vector<double>& params, const LossClosure& closure,
            double* final_loss = nullptr);

  // Bitwise state round-trip (JSON text with base64 payloads).
  std::string serialize_state() const;
  void deserialize_state(const std::string& text);

 private:
  OptimizerConfig config_;
  // Adam / AdamW moments.
  std::int64_t step_count_ = 0;
  std::vector<double> m_, v_;
  // L-BFGS curvature pairs, oldest first.
  std::deque<std::vector<double>> s_hist_, y_hist_;
};

const char* to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& s);

}  // namespace deqn
