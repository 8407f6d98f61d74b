// Operator CLI: demonstration generation, training, evaluation, the
// parallel-rollout benchmark, plotting, and FK/IK queries.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dvrl/config.hpp"
#include "dvrl/ddpg.hpp"
#include "dvrl/env.hpp"
#include "dvrl/io.hpp"
#include "dvrl/kinematics.hpp"
#include "dvrl/plot.hpp"
#include "dvrl/rollout.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

dvrl::RunConfig resolve_config(const std::string& config_path,
                               const std::vector<std::string>& sets,
                               const std::string& env_name) {
  dvrl::RunConfig rc;
  if (!env_name.empty()) {
    rc.env = dvrl::EnvConfig::defaults(dvrl::env_kind_from_string(env_name));
  }
  if (!config_path.empty()) rc.load_file(config_path);
  if (!env_name.empty() && config_path.empty()) {
    // keep defaults chosen above
  } else if (!env_name.empty()) {
    // flag wins over the file for the env kind; re-apply its defaults for
    // rho/table only when the file did not set the same kind
    rc.apply("env", env_name);
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw dvrl::ConfigError("--set expects key=value, got: " + kv);
    rc.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return rc;
}

std::vector<int> parse_n_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const int n = std::stoi(tok);
    if (n < 1) throw CLI::ValidationError("--n entries must be >= 1");
    out.push_back(n);
  }
  if (out.empty()) throw CLI::ValidationError("--n must be non-empty");
  return out;
}

Eigen::VectorXd parse_csv_vector(const std::string& s) {
  std::vector<double> vals;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  Eigen::VectorXd v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

int cmd_demo_gen(const dvrl::RunConfig& rc, int count,
                 const std::string& out_path) {
  dvrl::Environment env(rc.env);
  std::vector<dvrl::Episode> episodes;
  int attempts = 0;
  while (static_cast<int>(episodes.size()) < count) {
    ++attempts;
    dvrl::DemoResult demo = dvrl::scripted_demo(env);
    if (!demo.failed) episodes.push_back(std::move(demo.episode));
    if (attempts > 100 * count + 1000)
      throw std::runtime_error("demo generation keeps failing; check config");
  }
  dvrl::save_demo_set(episodes, rc.env, out_path);
  std::cout << "wrote " << count << " demonstration episodes to " << out_path
            << " (" << attempts - count << " failed episodes resampled)\n";
  return kExitOk;
}

int cmd_train(dvrl::RunConfig rc, const std::string& resume_path) {
  fs::create_directories(rc.out_dir);

  std::vector<dvrl::Episode> demos;
  bool use_demos = false;
  if (!rc.demo_file.empty()) {
    dvrl::DemoSet set = dvrl::load_demo_set(rc.demo_file);
    if (set.env.kind != rc.env.kind)
      throw dvrl::IoError("demo file env kind does not match --env");
    demos = std::move(set.episodes);
    use_demos = true;
  }

  {
    std::ofstream cfg(rc.out_dir + "/config.txt", std::ios::trunc);
    cfg << rc.serialize();
  }

  std::optional<dvrl::Checkpoint> resume;
  if (!resume_path.empty()) resume = dvrl::load_checkpoint(resume_path);

  std::ofstream metrics(rc.out_dir + "/metrics.csv", std::ios::trunc);
  metrics << dvrl::metrics_header() << '\n';
  double best = -1.0;
  const auto on_epoch = [&](const dvrl::EpochMetrics& m,
                            const dvrl::DdpgAgent& agent) {
    metrics << dvrl::format_metrics_row(m) << '\n';
    metrics.flush();
    dvrl::save_checkpoint(agent.checkpoint(rc.env),
                          rc.out_dir + "/ckpt_latest.bin");
    if (m.success_rate > best) {
      best = m.success_rate;
      dvrl::save_checkpoint(agent.checkpoint(rc.env),
                            rc.out_dir + "/ckpt_best.bin");
    }
    std::cout << "epoch " << m.epoch << "  success " << m.success_rate
              << "  critic " << m.critic_loss << "  actor " << m.actor_loss
              << "  bc " << m.bc_loss << "  t " << m.wall_seconds << "s\n";
  };

  dvrl::train(rc.env, rc.trainer, use_demos ? &demos : nullptr, on_epoch,
              resume ? &*resume : nullptr);
  std::cout << "best evaluation success: " << best << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, int episodes, int max_steps,
             std::uint64_t seed, const std::string& out_path) {
  const dvrl::Checkpoint ck = dvrl::load_checkpoint(ckpt_path);
  if (ck.actor.input_dim() != ck.env.observation_dim())
    throw dvrl::IntegrityError(ckpt_path +
                               ": checkpoint does not match its env config");
  dvrl::DdpgAgent agent(ck);
  const double success = dvrl::evaluate(agent.greedy_policy(), ck.env,
                                        episodes, max_steps, seed);
  std::cout << "success_rate " << success << " over " << episodes
            << " episodes at " << max_steps << " steps\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    out << "env,episodes,max_steps,seed,success_rate\n"
        << dvrl::to_string(ck.env.kind) << ',' << episodes << ',' << max_steps
        << ',' << seed << ',' << success << '\n';
  }
  return kExitOk;
}

int cmd_bench(const dvrl::RunConfig& rc, const std::vector<int>& n_list,
              int episodes_per_instance, const std::string& out_path) {
  const dvrl::Policy policy = dvrl::scripted_policy(rc.env);
  std::ostringstream table;
  table << "n_envs,seconds_per_round,episodes,steps_per_second\n";
  table.precision(9);
  for (int n : n_list) {
    dvrl::VecEnv vec = dvrl::spawn(n, rc.env, rc.env.seed);
    dvrl::TimingReport timing;
    vec.rollout(policy, episodes_per_instance, &timing);
    table << timing.n_envs << ',' << timing.seconds << ',' << timing.episodes
          << ',' << timing.steps_per_second() << '\n';
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    out << table.str();
  }
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& metrics_paths,
             std::vector<std::string> labels, const std::string& out_path) {
  std::vector<dvrl::PlotSeries> series;
  for (std::size_t i = 0; i < metrics_paths.size(); ++i) {
    dvrl::PlotSeries s;
    s.label = i < labels.size() ? labels[i]
                                : fs::path(metrics_paths[i]).stem().string();
    s.rows = dvrl::load_metrics(metrics_paths[i]);
    if (s.rows.empty())
      throw dvrl::IoError(metrics_paths[i] + ": no metrics rows");
    series.push_back(std::move(s));
  }
  dvrl::write_success_plot(series, out_path);
  std::cout << "wrote " << out_path << '\n';
  return kExitOk;
}

dvrl::ToolKinematics resolve_tool(const std::string& name,
                                  const std::string& file) {
  if (!file.empty()) return dvrl::ToolKinematics::from_file(file);
  return dvrl::ToolKinematics::by_name(name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dVRL: kinematic PSM simulator and RL suite"};
  app.require_subcommand(1);

  std::string config_path, env_name, out_path, demo_path, ckpt_path;
  std::string resume_path, tool_name = "suction", tool_file;
  std::vector<std::string> sets, metrics_paths, labels;
  int count = 100, episodes = 50, max_steps = 100, bench_episodes = 1;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  std::string n_list_str = "1,2,4,6,8";
  std::string q_str, pose_str, q_init_str;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key-value configuration file");
    sub->add_option("--env", env_name, "environment kind (reach|pick)");
    sub->add_option("--set", sets, "override: key=value (repeatable)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed_flag = s; seed_given = true; },
        "random seed");
  };

  CLI::App* demo_gen = app.add_subcommand(
      "demo-gen", "generate successful scripted demonstrations");
  add_common(demo_gen);
  demo_gen->add_option("--count", count, "episodes to keep")
      ->check(CLI::PositiveNumber);
  demo_gen->add_option("--out", out_path, "output demo file")->required();

  CLI::App* train = app.add_subcommand("train", "run the DDPG+HER trainer");
  add_common(train);
  train->add_option_function<int>(
      "--epochs",
      [&](int e) { sets.push_back("epochs=" + std::to_string(e)); },
      "training epochs");
  train->add_option("--demos", demo_path,
                    "demo file enabling behavioral cloning");
  train->add_option("--out", out_path, "run directory");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes")
      ->check(CLI::PositiveNumber);
  eval->add_option("--max-steps", max_steps, "steps per episode")
      ->check(CLI::PositiveNumber);
  eval->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { seed_flag = s; seed_given = true; },
      "evaluation seed");
  eval->add_option("--out", out_path, "result record file");

  CLI::App* bench =
      app.add_subcommand("bench", "time synchronized rollout rounds");
  add_common(bench);
  bench->add_option("--n", n_list_str, "instance counts, e.g. 1,2,4,6,8");
  bench->add_option("--episodes", bench_episodes, "episodes per instance")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", out_path, "timing table file");

  CLI::App* plot = app.add_subcommand("plot", "success-rate curves to SVG");
  plot->add_option("--metrics", metrics_paths, "metrics files")->required();
  plot->add_option("--labels", labels, "series labels");
  plot->add_option("--out", out_path, "output SVG")->required();

  CLI::App* tools = app.add_subcommand("tools", "kinematics queries");
  tools->require_subcommand(1);
  CLI::App* fk = tools->add_subcommand("fk", "forward kinematics");
  fk->add_option("--tool", tool_name, "lnd or suction");
  fk->add_option("--tool-file", tool_file, "tool definition file");
  fk->add_option("--q", q_str, "joint values, comma separated")->required();
  CLI::App* ik = tools->add_subcommand("ik", "inverse kinematics");
  ik->add_option("--tool", tool_name, "lnd or suction");
  ik->add_option("--tool-file", tool_file, "tool definition file");
  ik->add_option("--pose", pose_str, "px,py,pz,vx,vy,vz")->required();
  ik->add_option("--q-init", q_init_str, "seed joints for the numeric route");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*demo_gen) {
      dvrl::RunConfig rc = resolve_config(config_path, sets, env_name);
      if (seed_given) rc.apply("seed", std::to_string(seed_flag));
      return cmd_demo_gen(rc, count, out_path);
    }
    if (*train) {
      dvrl::RunConfig rc = resolve_config(config_path, sets, env_name);
      if (seed_given) rc.apply("seed", std::to_string(seed_flag));
      if (!demo_path.empty()) rc.demo_file = demo_path;
      if (!out_path.empty()) rc.out_dir = out_path;
      return cmd_train(std::move(rc), resume_path);
    }
    if (*eval)
      return cmd_eval(ckpt_path, episodes, max_steps,
                      seed_given ? seed_flag : 17, out_path);
    if (*bench) {
      dvrl::RunConfig rc = resolve_config(config_path, sets, env_name);
      if (seed_given) rc.apply("seed", std::to_string(seed_flag));
      return cmd_bench(rc, parse_n_list(n_list_str), bench_episodes,
                       out_path);
    }
    if (*plot) return cmd_plot(metrics_paths, labels, out_path);
    if (*tools) {
      const dvrl::ToolKinematics tool = resolve_tool(tool_name, tool_file);
      if (*fk) {
        const Eigen::VectorXd q = parse_csv_vector(q_str);
        const dvrl::ToolPose pose = tool.forward(q);
        std::cout.precision(12);
        std::cout << "position " << pose.position.transpose() << '\n'
                  << "direction " << pose.direction.transpose() << '\n';
        return kExitOk;
      }
      const Eigen::VectorXd pv = parse_csv_vector(pose_str);
      if (pv.size() != 6)
        throw CLI::ValidationError("--pose needs 6 comma-separated values");
      dvrl::ToolPose pose{pv.head<3>(), pv.tail<3>().normalized()};
      std::cout.precision(12);
      if (tool.joint_count() == 5) {
        const Eigen::VectorXd q = dvrl::ik_suction(pose, tool);
        std::cout << "joints " << q.transpose() << '\n';
      } else {
        const Eigen::VectorXd q0 = q_init_str.empty()
                                       ? tool.mid_range()
                                       : parse_csv_vector(q_init_str);
        const dvrl::NumericIkResult res = dvrl::ik_numeric(tool, pose, q0);
        std::cout << "joints " << res.joints.transpose() << '\n'
                  << "residual " << res.residual << " converged "
                  << (res.converged ? "yes" : "no") << '\n';
      }
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dvrl::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return kExitData;
  } catch (const dvrl::IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const dvrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
