#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "deqn/config.hpp"
#include "deqn/framework.hpp"
#include "deqn/problems.hpp"
#include "deqn/util.hpp"

namespace fs = std::filesystem;
using namespace deqn;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

Checkpoint make_checkpoint(const ModelDefinition& model,
                           const std::vector<NetworkState>& states) {
  Checkpoint ckpt;
  for (std::size_t i = 0; i < model.learnables.size(); ++i) {
    ckpt.names.push_back(model.learnables[i].name);
    ckpt.specs.push_back(model.learnables[i].spec);
    ckpt.states.push_back(states[i]);
  }
  return ckpt;
}

int cmd_run(const std::string& config_path, int epochs_override,
            long long seed_override, const std::string& out_dir,
            bool paper_scale) {
  ConfigDocument doc;
  try {
    doc = parse_config(read_file(config_path));
  } catch (const ConfigError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (paper_scale && doc.training.paper_epochs > 0)
    doc.training.epochs = doc.training.paper_epochs;
  if (epochs_override >= 0) doc.training.epochs = epochs_override;
  if (seed_override >= 0)
    doc.training.seed = static_cast<std::uint64_t>(seed_override);

  CompiledModel model;
  try {
    model = compile_model(doc.model);
  } catch (const ModelError& e) {
    std::cerr << "build error: " << e.what() << "\n";
    return 2;
  }

  fs::create_directories(out_dir);
  TrainResult result = train(model, {}, doc.training);

  write_file(fs::path(out_dir) / "best.ckpt",
             write_checkpoint(make_checkpoint(model.def, result.best)));
  write_file(fs::path(out_dir) / "final.ckpt",
             write_checkpoint(make_checkpoint(model.def, result.final)));
  write_file(fs::path(out_dir) / "losses.csv", losses_csv(result.history));

  std::ostringstream manifest;
  manifest << "{\n  \"version\": \"" << kVersion << "\",\n"
           << "  \"seed\": " << doc.training.seed << ",\n"
           << "  \"epochs\": " << doc.training.epochs << ",\n"
           << "  \"skipped_steps\": " << result.skipped_steps << ",\n"
           << "  \"best_total\": " << util::format_g17(result.best_total)
           << ",\n  \"config\": " << write_config(doc) << "}\n";
  write_file(fs::path(out_dir) / "manifest.json", manifest.str());

  if (!result.history.empty())
    std::cout << "final total loss: "
              << util::format_g17(result.history.back().total)
              << " (best " << util::format_g17(result.best_total) << ")\n";
  std::cout << "artifacts written to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
             const std::string& grid_arg, const std::string& out_path) {
  ConfigDocument doc;
  try {
    doc = parse_config(read_file(config_path));
  } catch (const ConfigError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CompiledModel model;
  Checkpoint ckpt;
  try {
    model = compile_model(doc.model);
    ckpt = read_checkpoint(read_file(ckpt_path));
  } catch (const ModelError& e) {
    std::cerr << "build error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::vector<NetworkState> states;
  for (const auto& l : model.def.learnables) {
    auto it = std::find(ckpt.names.begin(), ckpt.names.end(), l.name);
    if (it == ckpt.names.end()) {
      std::cerr << "error: checkpoint has no network for '" << l.name << "'\n";
      return 2;
    }
    states.push_back(ckpt.states[it - ckpt.names.begin()]);
  }

  std::vector<int> counts;
  if (!grid_arg.empty()) {
    std::stringstream ss(grid_arg);
    std::string part;
    while (std::getline(ss, part, ',')) counts.push_back(std::stoi(part));
  } else if (!doc.eval_grid.empty()) {
    counts = doc.eval_grid;
  } else {
    counts.assign(model.def.state_vars.size(), 101);
  }
  if (counts.size() != model.def.state_vars.size()) {
    std::cerr << "error: --grid needs one count per state variable\n";
    return 1;
  }

  GridEval grid = eval_on_grid(model, states, counts);

  std::vector<std::string> columns;
  for (const auto& s : model.def.state_vars) columns.push_back(s.name);
  for (const auto& l : model.def.learnables) columns.push_back(l.name);
  for (const auto& e : model.def.equations) columns.push_back(e.lhs_name);

  std::ostringstream csv;
  for (std::size_t i = 0; i < columns.size(); ++i)
    csv << (i ? "," : "") << columns[i];
  csv << "\n";
  for (int b = 0; b < grid.size; ++b) {
    for (std::size_t i = 0; i < columns.size(); ++i)
      csv << (i ? "," : "") << util::format_g17(grid.vars.at(columns[i])[b]);
    csv << "\n";
  }

  if (out_path.empty())
    std::cout << csv.str();
  else
    write_file(out_path, csv.str());
  return 0;
}

int cmd_examples(bool list, const std::vector<std::string>& export_args) {
  if (list) {
    for (const auto& name : problem_names()) std::cout << name << "\n";
    return 0;
  }
  if (export_args.size() != 2) {
    std::cerr << "usage: examples --list | --export <name> <dir>\n";
    return 1;
  }
  ProblemDefinition problem;
  try {
    problem = make_problem(export_args[0]);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  ConfigDocument doc;
  doc.model = problem.model;
  doc.training = problem.training;
  doc.closed_form = problem.closed_form;
  doc.eval_grid = problem.eval_grid;
  fs::create_directories(export_args[1]);
  const fs::path out = fs::path(export_args[1]) / (problem.name + ".json");
  write_file(out, write_config(doc));
  std::cout << out.string() << "\n";
  return 0;
}

int cmd_check(const std::string& config_path) {
  ConfigDocument doc;
  try {
    doc = parse_config(read_file(config_path));
  } catch (const ConfigError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  CompiledModel model;
  try {
    model = compile_model(doc.model);
  } catch (const ModelError& e) {
    std::cerr << "build error: " << e.what() << "\n";
    return 2;
  }

  std::cout << "name\tkind\tdetails\n";
  for (const auto& s : model.def.state_vars)
    std::cout << s.name << "\tstate\t[" << s.low << ", " << s.high << "]"
              << (s.sampling == Sampling::FixedGrid ? " fixed grid" : "")
              << "\n";
  for (const auto& p : model.def.params)
    std::cout << p.name << "\tparameter\t" << util::format_g17(p.value)
              << "\n";
  for (std::size_t i = 0; i < model.def.learnables.size(); ++i) {
    const auto& l = model.def.learnables[i];
    std::cout << l.name << "\t"
              << (l.role == LearnableRole::Agent ? "agent" : "endogenous")
              << "\t" << to_string(l.spec.kind) << ", "
              << param_count(l.spec) << " params, order "
              << l.derivative_order << "\n";
    for (const auto& dn : model.derivative_names[i])
      std::cout << dn << "\tderivative\tof " << l.name << "\n";
  }
  for (const auto& e : model.def.equations)
    std::cout << e.lhs_name << "\tequation\t= " << format_expr(e.rhs) << "\n";
  std::cout << "ok: " << model.def.conditions.size() << " conditions, "
            << model.def.endogenous.size() << " endogenous, "
            << model.def.hjb.size() << " hjb, "
            << model.def.constraints.size() << " constraints, "
            << model.def.systems.size() << " systems\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium model solver: train neural approximators against "
               "differential-equation residual losses"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", ckpt_path, grid_arg, out_path;
  int epochs_override = -1;
  long long seed_override = -1;
  bool paper_scale = false, list = false;
  std::vector<std::string> export_args;

  auto* run = app.add_subcommand("run", "Train a model from a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--epochs", epochs_override, "override epoch count");
  run->add_option("--seed", seed_override, "override random seed");
  run->add_option("--out-dir", out_dir, "artifact directory");
  run->add_flag("--paper-scale", paper_scale,
                "use full-scale epoch counts where configured");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a grid");
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("config", config_path, "config file")->required();
  eval->add_option("--grid", grid_arg, "points per state, comma-separated");
  eval->add_option("--out", out_path, "CSV output path (default stdout)");

  auto* examples = app.add_subcommand("examples", "Built-in example models");
  examples->add_flag("--list", list, "list example names");
  examples->add_option("--export", export_args,
                       "export one example config: <name> <dir>")
      ->expected(2);

  auto* check = app.add_subcommand("check", "Validate a config file");
  check->add_option("config", config_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, epochs_override, seed_override, out_dir,
                     paper_scale);
    if (eval->parsed())
      return cmd_eval(ckpt_path, config_path, grid_arg, out_path);
    if (examples->parsed()) return cmd_examples(list, export_args);
    if (check->parsed()) return cmd_check(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
