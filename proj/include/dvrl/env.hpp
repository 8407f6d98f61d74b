#pragma once

// Goal-conditioned PSM environments (Reach and Pick) with the usual
// make/reset/step/render surface, sparse {-1, 0} rewards and scripted
// demonstration controllers.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dvrl/sim.hpp"

namespace dvrl {

enum class EnvKind { Reach, Pick };

inline const char* to_string(EnvKind k) {
  return k == EnvKind::Reach ? "reach" : "pick";
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "reach" || s == "Reach") return EnvKind::Reach;
  if (s == "pick" || s == "Pick") return EnvKind::Pick;
  throw std::invalid_argument("unknown environment kind: " + s);
}

struct EnvConfig {
  EnvKind kind = EnvKind::Reach;
  Workspace workspace{Eigen::Vector3d(0.0, 0.0, -0.12), 0.05, -0.17, 0.001};
  double delta = 0.003;     // success threshold, meters
  int horizon = 100;        // steps per episode, no early termination
  std::uint64_t seed = 0;
  double grasp_radius = 0.005;
  // Debug hook: Reach goal pinned to the start position (not serialized).
  bool goal_equals_start = false;

  void validate() const {
    workspace.validate();
    if (delta <= 0) throw std::invalid_argument("delta must be > 0");
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (grasp_radius <= 0)
      throw std::invalid_argument("grasp_radius must be > 0");
  }

  static EnvConfig defaults(EnvKind kind) {
    EnvConfig c;
    c.kind = kind;
    c.workspace.rho = (kind == EnvKind::Reach) ? 0.05 : 0.025;
    c.workspace.table_height = c.workspace.center.z() - c.workspace.rho;
    return c;
  }

  int observation_dim() const { return kind == EnvKind::Reach ? 6 : 10; }
  int action_dim() const { return kind == EnvKind::Reach ? 3 : 4; }
};

// Sparse reward shared by the environments and HER relabeling. Goals are
// normalized; the threshold delta is in meters, hence the rho factor.
inline double compute_reward(const Eigen::Vector3d& achieved,
                             const Eigen::Vector3d& desired, double delta,
                             double rho) {
  return rho * (achieved - desired).norm() > delta ? -1.0 : 0.0;
}

struct GoalObservation {
  Eigen::VectorXd state;
  Eigen::Vector3d achieved_goal;
  Eigen::Vector3d desired_goal;
};

struct StepInfo {
  bool is_success = false;
  bool action_clamped = false;
};

struct StepResult {
  GoalObservation observation;
  double reward = -1.0;
  bool done = false;
  StepInfo info;
};

struct Frame {
  int step = 0;
  Eigen::Vector3d position;
  double jaw = 1.0;
  std::optional<Eigen::Vector3d> object;
  bool attached = false;
  Eigen::Vector3d goal;
  double reward = -1.0;
};

inline nlohmann::json to_json(const Frame& f) {
  nlohmann::json j{{"step", f.step},
                   {"p", {f.position.x(), f.position.y(), f.position.z()}},
                   {"j", f.jaw},
                   {"attached", f.attached},
                   {"g", {f.goal.x(), f.goal.y(), f.goal.z()}},
                   {"r", f.reward}};
  if (f.object)
    j["o"] = {f.object->x(), f.object->y(), f.object->z()};
  else
    j["o"] = nullptr;
  return j;
}

inline Frame frame_from_json(const nlohmann::json& j) {
  Frame f;
  f.step = j.at("step").get<int>();
  const auto& p = j.at("p");
  f.position = Eigen::Vector3d(p[0], p[1], p[2]);
  f.jaw = j.at("j").get<double>();
  f.attached = j.at("attached").get<bool>();
  const auto& g = j.at("g");
  f.goal = Eigen::Vector3d(g[0], g[1], g[2]);
  f.reward = j.at("r").get<double>();
  if (!j.at("o").is_null()) {
    const auto& o = j.at("o");
    f.object = Eigen::Vector3d(o[0], o[1], o[2]);
  }
  return f;
}

class Environment {
 public:
  explicit Environment(EnvConfig config) : cfg_(config), rng_(config.seed) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }

  GoalObservation reset() {
    const Workspace& ws = cfg_.workspace;
    step_count_ = 0;
    arm_.attached = false;
    arm_.jaw = 1.0;
    if (cfg_.kind == EnvKind::Reach) {
      arm_.position = sample_box(ws.table_height);
      goal_ = cfg_.goal_equals_start ? arm_.position
                                     : sample_box(ws.table_height);
    } else {
      arm_.position = ws.center;
      object_.position =
          Eigen::Vector3d(ws.center.x(), ws.center.y(), ws.table_height);
      object_.grasp_radius = cfg_.grasp_radius;
      // Keep the goal at least delta above the table so a transported
      // object can satisfy the threshold without penetrating it.
      goal_ = sample_box(ws.table_height + cfg_.delta);
    }
    return observe();
  }

  StepResult step(const Eigen::VectorXd& action) {
    if (action.size() != cfg_.action_dim())
      throw std::invalid_argument("action dimension mismatch");
    bool clamped = false;
    const Eigen::Vector3d delta = action.head<3>();
    if (cfg_.kind == EnvKind::Reach) {
      arm_ = step_arm(arm_, delta, std::nullopt, cfg_.workspace, nullptr,
                      &clamped);
    } else {
      arm_ = step_arm(arm_, delta, action[3], cfg_.workspace, &object_,
                      &clamped);
      update_grasp(arm_, object_, cfg_.workspace);
    }
    ++step_count_;

    StepResult res;
    res.observation = observe();
    res.reward = compute_reward(res.observation.achieved_goal,
                                res.observation.desired_goal, cfg_.delta,
                                cfg_.workspace.rho);
    res.done = step_count_ >= cfg_.horizon;
    res.info.is_success = res.reward == 0.0;
    res.info.action_clamped = clamped;
    last_reward_ = res.reward;
    return res;
  }

  Frame render() const {
    Frame f;
    f.step = step_count_;
    f.position = arm_.position;
    f.jaw = arm_.jaw;
    f.attached = arm_.attached;
    f.goal = goal_;
    f.reward = last_reward_;
    if (cfg_.kind == EnvKind::Pick) f.object = object_.position;
    if (frame_log_) *frame_log_ << to_json(f).dump() << '\n';
    return f;
  }

  void set_frame_log(std::ostream* sink) { frame_log_ = sink; }

  // Raw-scene accessors (controllers, tests).
  const PsmState& arm() const { return arm_; }
  const SceneObject& object() const { return object_; }
  const Eigen::Vector3d& goal() const { return goal_; }
  int step_count() const { return step_count_; }

 private:
  Eigen::Vector3d sample_box(double z_min) {
    const Workspace& ws = cfg_.workspace;
    Eigen::Vector3d p;
    for (int i = 0; i < 3; ++i) {
      const double lo = i == 2 ? std::max(ws.center[i] - ws.rho, z_min)
                               : ws.center[i] - ws.rho;
      std::uniform_real_distribution<double> dist(lo, ws.center[i] + ws.rho);
      p[i] = dist(rng_);
    }
    return p;
  }

  GoalObservation observe() const {
    const Workspace& ws = cfg_.workspace;
    GoalObservation obs;
    const Eigen::Vector3d p_n = normalize(arm_.position, ws);
    const Eigen::Vector3d g_n = normalize(goal_, ws);
    obs.desired_goal = g_n;
    if (cfg_.kind == EnvKind::Reach) {
      obs.state.resize(6);
      obs.state << p_n, g_n;
      obs.achieved_goal = p_n;
    } else {
      const Eigen::Vector3d o_n = normalize(object_.position, ws);
      obs.state.resize(10);
      obs.state << p_n, 2.0 * arm_.jaw - 1.0, o_n, g_n;
      obs.achieved_goal = o_n;
    }
    return obs;
  }

  EnvConfig cfg_;
  std::mt19937_64 rng_;
  PsmState arm_;
  SceneObject object_;
  Eigen::Vector3d goal_ = Eigen::Vector3d::Zero();
  int step_count_ = 0;
  double last_reward_ = -1.0;
  std::ostream* frame_log_ = nullptr;
};

inline Environment make(const EnvConfig& config) { return Environment(config); }

// Policies map an observation to an action; the generator feeds exploration
// noise and is ignored by deterministic policies.
using Policy =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, std::mt19937_64&)>;

struct Episode {
  std::vector<Eigen::VectorXd> observations;    // horizon + 1
  std::vector<Eigen::VectorXd> actions;         // horizon
  std::vector<double> rewards;                  // horizon
  std::vector<Eigen::Vector3d> achieved_goals;  // horizon + 1
  Eigen::Vector3d desired_goal;
  std::vector<std::uint8_t> attached;           // horizon + 1, Pick only

  int length() const { return static_cast<int>(actions.size()); }
  bool success() const { return !rewards.empty() && rewards.back() == 0.0; }
};

inline Episode run_episode(Environment& env, const Policy& policy,
                           std::mt19937_64& rng) {
  Episode ep;
  GoalObservation obs = env.reset();
  ep.desired_goal = obs.desired_goal;
  ep.observations.push_back(obs.state);
  ep.achieved_goals.push_back(obs.achieved_goal);
  const bool pick = env.config().kind == EnvKind::Pick;
  if (pick) ep.attached.push_back(env.arm().attached);
  while (true) {
    const Eigen::VectorXd a = policy(ep.observations.back(), rng);
    const StepResult r = env.step(a);
    ep.actions.push_back(a);
    ep.rewards.push_back(r.reward);
    ep.observations.push_back(r.observation.state);
    ep.achieved_goals.push_back(r.observation.achieved_goal);
    if (pick) ep.attached.push_back(env.arm().attached);
    if (r.done) break;
  }
  return ep;
}

// --- Scripted demonstration controllers ------------------------------------

inline Eigen::VectorXd scripted_reach_action(const EnvConfig& cfg,
                                             const Eigen::VectorXd& obs) {
  const Eigen::Vector3d p = obs.head<3>();
  const Eigen::Vector3d g = obs.tail<3>();
  Eigen::Vector3d delta =
      (g - p) * cfg.workspace.rho / cfg.workspace.eta;
  return delta.cwiseMax(-1.0).cwiseMin(1.0);
}

// Staged pick: hover over the object with the jaw open, descend onto it,
// close, then transport to the goal. The stage is recovered from the
// observation alone so the controller stays stateless.
inline Eigen::VectorXd scripted_pick_action(const EnvConfig& cfg,
                                            const Eigen::VectorXd& obs) {
  const Workspace& ws = cfg.workspace;
  const Eigen::Vector3d p = denormalize(obs.head<3>(), ws);
  const double jaw = (obs[3] + 1.0) / 2.0;
  const Eigen::Vector3d o = denormalize(obs.segment<3>(4), ws);
  const Eigen::Vector3d g = denormalize(obs.tail<3>(), ws);

  const auto toward = [&](const Eigen::Vector3d& target) -> Eigen::Vector3d {
    return ((target - p) / ws.eta).cwiseMax(-1.0).cwiseMin(1.0);
  };

  Eigen::VectorXd a(4);
  const double dist = (p - o).norm();
  const bool gripped = jaw < 0.25 && dist <= 0.5 * cfg.grasp_radius;
  if (gripped) {
    a << toward(g), -1.0;
  } else if (dist <= 0.5 * cfg.grasp_radius) {
    a << Eigen::Vector3d::Zero(), -1.0;  // close and hold
  } else if ((p - o).head<2>().norm() > 0.25 * cfg.grasp_radius) {
    const double hover = ws.table_height + 0.01;
    a << toward(Eigen::Vector3d(o.x(), o.y(), std::max(hover, o.z()))), 1.0;
  } else {
    a << toward(o), 1.0;  // descend
  }
  return a;
}

inline Policy scripted_policy(const EnvConfig& cfg) {
  if (cfg.kind == EnvKind::Reach)
    return [cfg](const Eigen::VectorXd& obs, std::mt19937_64&) {
      return scripted_reach_action(cfg, obs);
    };
  return [cfg](const Eigen::VectorXd& obs, std::mt19937_64&) {
    return scripted_pick_action(cfg, obs);
  };
}

struct DemoResult {
  Episode episode;
  bool failed = false;  // final reward != 0; excluded from demo sets
};

inline DemoResult scripted_demo(Environment& env) {
  std::mt19937_64 unused(0);
  DemoResult res;
  res.episode = run_episode(env, scripted_policy(env.config()), unused);
  res.failed = !res.episode.success();
  return res;
}

}  // namespace dvrl
