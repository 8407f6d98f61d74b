#pragma once

// Run configuration: a key-value text file plus command-line overrides
// (flags win). Parsing is strict; unknown keys abort before any work
// starts. The fully resolved config is serialized into the run directory.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dvrl/ddpg.hpp"
#include "dvrl/env.hpp"

namespace dvrl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  TrainerConfig trainer;
  std::string out_dir = "runs/latest";
  std::string demo_file;
  std::string checkpoint_file;

  void apply(const std::string& key, const std::string& value) {
    const auto d = [&] { return std::stod(value); };
    const auto i = [&] { return std::stoi(value); };
    const auto u = [&] { return std::stoull(value); };
    const auto b = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("boolean expected for " + key + ": " + value);
    };
    if (key == "env") env.kind = env_kind_from_string(value);
    else if (key == "center_x") env.workspace.center.x() = d();
    else if (key == "center_y") env.workspace.center.y() = d();
    else if (key == "center_z") env.workspace.center.z() = d();
    else if (key == "rho") env.workspace.rho = d();
    else if (key == "table_height") env.workspace.table_height = d();
    else if (key == "eta") env.workspace.eta = d();
    else if (key == "delta") env.delta = d();
    else if (key == "horizon") env.horizon = i();
    else if (key == "grasp_radius") env.grasp_radius = d();
    else if (key == "seed") { env.seed = u(); trainer.seed = env.seed; }
    else if (key == "gamma") trainer.gamma = d();
    else if (key == "tau") trainer.tau = d();
    else if (key == "batch_size") trainer.batch_size = i();
    else if (key == "her_k") trainer.her_k = d();
    else if (key == "eps_random") trainer.eps_random = d();
    else if (key == "sigma_noise") trainer.sigma_noise = d();
    else if (key == "epochs") trainer.epochs = i();
    else if (key == "cycles_per_epoch") trainer.cycles_per_epoch = i();
    else if (key == "n_envs") trainer.n_envs = i();
    else if (key == "rollouts_per_cycle") trainer.rollouts_per_cycle = i();
    else if (key == "updates_per_cycle") trainer.updates_per_cycle = i();
    else if (key == "bc_weight") trainer.bc_weight = d();
    else if (key == "demo_batch_size") trainer.demo_batch_size = i();
    else if (key == "q_filter") trainer.q_filter = b();
    else if (key == "action_l2") trainer.action_l2 = d();
    else if (key == "lr") trainer.lr = d();
    else if (key == "eval_episodes") trainer.eval_episodes = i();
    else if (key == "buffer_capacity_episodes")
      trainer.buffer_capacity_episodes = i();
    else if (key == "early_stop_success") trainer.early_stop_success = d();
    else if (key == "hidden") {
      trainer.hidden.clear();
      std::istringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ','))
        trainer.hidden.push_back(std::stoi(tok));
      if (trainer.hidden.empty())
        throw ConfigError("hidden must list at least one layer size");
    }
    else if (key == "out_dir") out_dir = value;
    else if (key == "demo_file") demo_file = value;
    else if (key == "checkpoint") checkpoint_file = value;
    else throw ConfigError("unknown configuration key: " + key);
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto pos = line.find('#'); pos != std::string::npos)
        line = line.substr(0, pos);
      std::istringstream ls(line);
      std::string key, eq, value;
      if (!(ls >> key)) continue;
      if (!(ls >> eq >> value) || eq != "=")
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected 'key = value'");
      try {
        apply(key, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
  }

  std::string serialize() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "env = " << to_string(env.kind) << '\n'
       << "center_x = " << env.workspace.center.x() << '\n'
       << "center_y = " << env.workspace.center.y() << '\n'
       << "center_z = " << env.workspace.center.z() << '\n'
       << "rho = " << env.workspace.rho << '\n'
       << "table_height = " << env.workspace.table_height << '\n'
       << "eta = " << env.workspace.eta << '\n'
       << "delta = " << env.delta << '\n'
       << "horizon = " << env.horizon << '\n'
       << "grasp_radius = " << env.grasp_radius << '\n'
       << "seed = " << env.seed << '\n'
       << "gamma = " << trainer.gamma << '\n'
       << "tau = " << trainer.tau << '\n'
       << "batch_size = " << trainer.batch_size << '\n'
       << "her_k = " << trainer.her_k << '\n'
       << "eps_random = " << trainer.eps_random << '\n'
       << "sigma_noise = " << trainer.sigma_noise << '\n'
       << "epochs = " << trainer.epochs << '\n'
       << "cycles_per_epoch = " << trainer.cycles_per_epoch << '\n'
       << "n_envs = " << trainer.n_envs << '\n'
       << "rollouts_per_cycle = " << trainer.rollouts_per_cycle << '\n'
       << "updates_per_cycle = " << trainer.updates_per_cycle << '\n'
       << "bc_weight = " << trainer.bc_weight << '\n'
       << "demo_batch_size = " << trainer.demo_batch_size << '\n'
       << "q_filter = " << (trainer.q_filter ? "true" : "false") << '\n'
       << "action_l2 = " << trainer.action_l2 << '\n'
       << "lr = " << trainer.lr << '\n'
       << "eval_episodes = " << trainer.eval_episodes << '\n'
       << "buffer_capacity_episodes = " << trainer.buffer_capacity_episodes
       << '\n'
       << "early_stop_success = " << trainer.early_stop_success << '\n'
       << "hidden = ";
    for (std::size_t j = 0; j < trainer.hidden.size(); ++j)
      ss << (j ? "," : "") << trainer.hidden[j];
    ss << '\n';
    if (!out_dir.empty()) ss << "out_dir = " << out_dir << '\n';
    if (!demo_file.empty()) ss << "demo_file = " << demo_file << '\n';
    if (!checkpoint_file.empty())
      ss << "checkpoint = " << checkpoint_file << '\n';
    return ss.str();
  }
};

}  // namespace dvrl
