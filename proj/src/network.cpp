#include "deqn/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "deqn/util.hpp"

namespace deqn {

void NetworkSpec::validate() const {
  if (input_names.empty())
    throw std::invalid_argument("network: no input names");
  if (hidden_sizes.empty())
    throw std::invalid_argument("network: hidden_sizes must be non-empty");
  for (int h : hidden_sizes)
    if (h < 1) throw std::invalid_argument("network: hidden size < 1");
  if (kind == NetworkKind::KAN) {
    if (grid_size < 1) throw std::invalid_argument("kan: grid_size < 1");
    if (spline_order < 1) throw std::invalid_argument("kan: spline_order < 1");
    if (!(grid_range[0] < grid_range[1]))
      throw std::invalid_argument("kan: empty grid range");
  }
}

namespace {

std::vector<int> layer_sizes(const NetworkSpec& spec) {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(spec.input_names.size()));
  for (int h : spec.hidden_sizes) sizes.push_back(h);
  sizes.push_back(1);
  return sizes;
}

int kan_basis_count(const NetworkSpec& spec) {
  return spec.grid_size + spec.spline_order;
}

}  // namespace

std::int64_t param_count(const NetworkSpec& spec) {
  spec.validate();
  const auto sizes = layer_sizes(spec);
  std::int64_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::int64_t in = sizes[l], out = sizes[l + 1];
    if (spec.kind == NetworkKind::MLP)
      total += in * out + out;
    else
      total += in * out + in * kan_basis_count(spec) * out;
  }
  return total;
}

NetworkState init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint64_t>(0x9e3779b97f4a7c15ULL), seed};
  std::mt19937_64 rng(seq);
  const auto sizes = layer_sizes(spec);
  NetworkState state;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> xavier(-bound, bound);
    std::vector<double> W(static_cast<std::size_t>(in) * out);
    for (double& w : W) w = xavier(rng);
    state.tensors.push_back(std::move(W));
    if (spec.kind == NetworkKind::MLP) {
      state.tensors.emplace_back(out, 0.0);  // biases start at zero
    } else {
      std::uniform_real_distribution<double> small(-0.1, 0.1);
      std::vector<double> C(static_cast<std::size_t>(in) *
                            kan_basis_count(spec) * out);
      for (double& c : C) c = small(rng);
      state.tensors.push_back(std::move(C));
    }
  }
  return state;
}

NetworkBinding bind_network(const NetworkSpec& spec, const NetworkState& state,
                            Tape& tape, bool requires_grad) {
  const auto sizes = layer_sizes(spec);
  NetworkBinding binding;
  std::size_t t = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    binding.tensors.push_back(
        tape.leaf({in, out}, state.tensors.at(t++), requires_grad));
    if (spec.kind == NetworkKind::MLP) {
      binding.tensors.push_back(
          tape.leaf({1, out}, state.tensors.at(t++), requires_grad));
    } else {
      binding.tensors.push_back(tape.leaf({in * kan_basis_count(spec), out},
                                          state.tensors.at(t++),
                                          requires_grad));
    }
  }
  if (t != state.tensors.size())
    throw std::runtime_error("network state does not match spec");
  return binding;
}

namespace {

Var apply_activation(Tape& t, Activation a, Var x) {
  switch (a) {
    case Activation::Tanh: return t.tanh(x);
    case Activation::Sigmoid: return t.sigmoid(x);
    case Activation::Relu: return t.relu(x);
    case Activation::Silu: return t.silu(x);
  }
  throw std::logic_error("bad activation");
}

}  // namespace

Var kan_spline_basis(const NetworkSpec& spec, Tape& tape, Var x_col) {
  const int G = spec.grid_size;
  const int k = spec.spline_order;
  const double lo = spec.grid_range[0], hi = spec.grid_range[1];
  const double h = (hi - lo) / G;
  // Knots t_i = lo + (i - k) * h, i = 0..G+2k.
  auto knot = [&](int i) { return lo + (i - k) * h; };

  const int rows = x_col.shape().rows;
  const auto xd = x_col.data();

  // Order-0 indicators are piecewise constant; they enter the recursion as
  // detached values so derivatives flow only through the polynomial factors.
  std::vector<Var> level;
  for (int i = 0; i < G + 2 * k; ++i) {
    std::vector<double> ind(rows);
    const double t0 = knot(i), t1 = knot(i + 1);
    for (int r = 0; r < rows; ++r)
      ind[r] = (xd[r] >= t0 && xd[r] < t1) ? 1.0 : 0.0;
    level.push_back(tape.leaf({rows, 1}, ind, false));
  }

  for (int r = 1; r <= k; ++r) {
    std::vector<Var> next;
    for (int i = 0; i < G + 2 * k - r; ++i) {
      const double d0 = knot(i + r) - knot(i);
      const double d1 = knot(i + r + 1) - knot(i + 1);
      Var a = (x_col - knot(i)) / d0 * level[i];
      Var b = (knot(i + r + 1) - x_col) / d1 * level[i + 1];
      next.push_back(a + b);
    }
    level = std::move(next);
  }
  return tape.hstack(level);
}

Var network_forward(const NetworkSpec& spec, const NetworkBinding& binding,
                    Var X) {
  Tape& t = *X.tape;
  const auto sizes = layer_sizes(spec);
  if (X.shape().cols != sizes.front())
    throw std::invalid_argument("network_forward: input column mismatch");
  Var h = X;
  std::size_t ti = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const bool last = l + 2 == sizes.size();
    if (spec.kind == NetworkKind::MLP) {
      Var W = binding.tensors.at(ti++);
      Var b = binding.tensors.at(ti++);
      h = t.add(t.matmul(h, W), b);
      if (!last) h = apply_activation(t, spec.activation, h);
    } else {
      Var baseW = binding.tensors.at(ti++);
      Var coeff = binding.tensors.at(ti++);
      Var base = t.matmul(t.silu(h), baseW);
      std::vector<Var> bases;
      for (int c = 0; c < sizes[l]; ++c)
        bases.push_back(kan_spline_basis(spec, t, t.col_slice(h, c, 1)));
      Var big = bases.size() == 1 ? bases[0] : t.hstack(bases);
      h = t.add(base, t.matmul(big, coeff));
    }
  }
  switch (spec.output_transform) {
    case OutputTransform::None: return h;
    case OutputTransform::Softplus: return t.softplus(h);
    case OutputTransform::Exp: return t.exp(h);
  }
  throw std::logic_error("bad output transform");
}

double silu(double x) {
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
  return x * s;
}

double softplus(double x) {
  const double m = x > 0.0 ? x : 0.0;
  return m + std::log1p(std::exp(-std::fabs(x)));
}

const char* to_string(NetworkKind k) {
  return k == NetworkKind::MLP ? "mlp" : "kan";
}
const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Silu: return "silu";
  }
  return "?";
}
const char* to_string(OutputTransform t) {
  switch (t) {
    case OutputTransform::None: return "none";
    case OutputTransform::Softplus: return "softplus";
    case OutputTransform::Exp: return "exp";
  }
  return "?";
}

NetworkKind parse_network_kind(const std::string& s) {
  if (s == "mlp") return NetworkKind::MLP;
  if (s == "kan") return NetworkKind::KAN;
  throw std::invalid_argument("unknown network kind: " + s);
}
Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  if (s == "silu") return Activation::Silu;
  throw std::invalid_argument("unknown activation: " + s);
}
OutputTransform parse_output_transform(const std::string& s) {
  if (s == "none") return OutputTransform::None;
  if (s == "softplus") return OutputTransform::Softplus;
  if (s == "exp") return OutputTransform::Exp;
  throw std::invalid_argument("unknown output transform: " + s);
}

namespace {

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["inputs"] = spec.input_names;
  j["hidden"] = spec.hidden_sizes;
  j["activation"] = to_string(spec.activation);
  j["output_transform"] = to_string(spec.output_transform);
  if (spec.kind == NetworkKind::KAN) {
    j["grid_size"] = spec.grid_size;
    j["spline_order"] = spec.spline_order;
    j["grid_range"] = spec.grid_range;
  }
  return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.kind = parse_network_kind(j.at("kind").get<std::string>());
  spec.input_names = j.at("inputs").get<std::vector<std::string>>();
  spec.hidden_sizes = j.at("hidden").get<std::vector<int>>();
  spec.activation = parse_activation(j.at("activation").get<std::string>());
  spec.output_transform =
      parse_output_transform(j.at("output_transform").get<std::string>());
  if (spec.kind == NetworkKind::KAN) {
    spec.grid_size = j.at("grid_size").get<int>();
    spec.spline_order = j.at("spline_order").get<int>();
    spec.grid_range = j.at("grid_range").get<std::array<double, 2>>();
  }
  return spec;
}

}  // namespace

std::string serialize_network(const NetworkSpec& spec,
                              const NetworkState& state) {
  nlohmann::json j;
  j["spec"] = spec_to_json(spec);
  nlohmann::json arrs = nlohmann::json::array();
  for (const auto& t : state.tensors) arrs.push_back(util::base64_encode(t));
  j["tensors"] = arrs;
  return j.dump();
}

void deserialize_network(const std::string& text, NetworkSpec& spec,
                         NetworkState& state) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint parse error: ") +
                             e.what());
  }
  try {
    spec = spec_from_json(j.at("spec"));
    state.tensors.clear();
    for (const auto& a : j.at("tensors"))
      state.tensors.push_back(
          util::base64_decode_doubles(a.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint field error: ") +
                             e.what());
  }
  // Shape check: re-derive expected sizes.
  const NetworkState ref = init_network(spec, 0);
  if (ref.tensors.size() != state.tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ref.tensors.size(); ++i)
    if (ref.tensors[i].size() != state.tensors[i].size())
      throw std::runtime_error("checkpoint: tensor shape mismatch");
}

}  // namespace deqn
