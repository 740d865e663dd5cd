#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deqn/tape.hpp"

namespace deqn {

enum class NetworkKind { MLP, KAN };
enum class Activation { Tanh, Sigmoid, Relu, Silu };
enum class OutputTransform { None, Softplus, Exp };

struct NetworkSpec {
  NetworkKind kind = NetworkKind::MLP;
  std::vector<std::string> input_names;
  std::vector<int> hidden_sizes;
  Activation activation = Activation::Tanh;
  OutputTransform output_transform = OutputTransform::None;
  // KAN only:
  int grid_size = 5;
  int spline_order = 3;
  std::array<double, 2> grid_range{-1.0, 1.0};

  void validate() const;  // throws std::invalid_argument
};

// Flat parameter tensors, layout fixed by the spec:
//   MLP  per layer: W (in x out, row-major), b (out)
//   KAN  per layer: base_W (in x out, row-major),
//                   coeff (in x (grid_size+spline_order) x out, row-major)
struct NetworkState {
  std::vector<std::vector<double>> tensors;
};

NetworkState init_network(const NetworkSpec& spec, std::uint64_t seed);

std::int64_t param_count(const NetworkSpec& spec);

// Per-tensor tape leaves for one training step.
struct NetworkBinding {
  std::vector<Var> tensors;
};

NetworkBinding bind_network(const NetworkSpec& spec, const NetworkState& state,
                            Tape& tape, bool requires_grad = true);

// X is (B x d); returns (B x 1). Participates in autodiff for both the
// inputs and the bound parameters.
Var network_forward(const NetworkSpec& spec, const NetworkBinding& binding,
                    Var X);

// Checkpoint payload for one network (JSON text fragment handled in
// config.cpp); here only raw helpers:
std::string serialize_network(const NetworkSpec& spec,
                              const NetworkState& state);
// Throws std::runtime_error on corrupt/mismatched payloads.
void deserialize_network(const std::string& text, NetworkSpec& spec,
                         NetworkState& state);

// Activation helpers (plain doubles, used by tests).
double silu(double x);
double softplus(double x);

// B-spline basis matrix (B x (grid_size+spline_order)) for one input column.
Var kan_spline_basis(const NetworkSpec& spec, Tape& tape, Var x_col);

const char* to_string(NetworkKind k);
const char* to_string(Activation a);
const char* to_string(OutputTransform t);
NetworkKind parse_network_kind(const std::string& s);
Activation parse_activation(const std::string& s);
OutputTransform parse_output_transform(const std::string& s);

}  // namespace deqn
