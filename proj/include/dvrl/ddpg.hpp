#pragma once

// DDPG with hindsight relabeling and optional behavioral-cloning
// augmentation. One trainer context owns the networks and the replay
// buffer; rollout collection fans out through VecEnv with read-only policy
// snapshots.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "dvrl/env.hpp"
#include "dvrl/io.hpp"
#include "dvrl/net.hpp"
#include "dvrl/replay.hpp"
#include "dvrl/rollout.hpp"

namespace dvrl {

struct TrainerConfig {
  double gamma = 0.98;
  double tau = 0.95;              // target <- tau*target + (1-tau)*online
  int batch_size = 256;
  double her_k = 4.0;
  double eps_random = 0.3;
  double sigma_noise = 0.2;
  int epochs = 150;
  int cycles_per_epoch = 50;
  int n_envs = 6;
  int rollouts_per_cycle = 1;     // episodes per instance per cycle
  int updates_per_cycle = 40;
  double bc_weight = 1.0;         // lambda on the cloning loss
  int demo_batch_size = 128;
  bool q_filter = false;          // cloning Q-filter variant, off by default
  double action_l2 = 0.01;        // penalty on the mean squared action
  std::vector<int> hidden = {64, 64, 64};
  double lr = 1e-3;
  int eval_episodes = 50;
  int buffer_capacity_episodes = 10000;
  double early_stop_success = -1.0;  // stop once eval success >= this; <0 off
  std::uint64_t seed = 0;

  void validate() const {
    if (gamma < 0 || gamma > 1) throw std::invalid_argument("gamma in [0,1]");
    if (tau < 0 || tau > 1) throw std::invalid_argument("tau in [0,1]");
    if (her_k < 0) throw std::invalid_argument("her_k >= 0");
    if (eps_random < 0 || eps_random > 1)
      throw std::invalid_argument("eps_random in [0,1]");
    if (batch_size < 1 || epochs < 1 || cycles_per_epoch < 1 || n_envs < 1 ||
        rollouts_per_cycle < 1 || eval_episodes < 1)
      throw std::invalid_argument("counts must be positive");
  }
};

namespace detail {

inline void accumulate(MlpGrads& into, const MlpGrads& other) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += other.weights[l];
    into.biases[l] += other.biases[l];
  }
}

}  // namespace detail

class DdpgAgent {
 public:
  DdpgAgent(const EnvConfig& env_cfg, const TrainerConfig& tc,
            std::mt19937_64& rng)
      : gamma_(tc.gamma),
        tau_(tc.tau),
        action_l2_(tc.action_l2),
        bc_weight_(tc.bc_weight),
        q_filter_(tc.q_filter),
        eps_random_(tc.eps_random),
        sigma_noise_(tc.sigma_noise) {
    std::vector<int> actor_sizes{env_cfg.observation_dim()};
    actor_sizes.insert(actor_sizes.end(), tc.hidden.begin(), tc.hidden.end());
    actor_sizes.push_back(env_cfg.action_dim());
    std::vector<int> critic_sizes{env_cfg.observation_dim() +
                                  env_cfg.action_dim()};
    critic_sizes.insert(critic_sizes.end(), tc.hidden.begin(),
                        tc.hidden.end());
    critic_sizes.push_back(1);

    actor_ = Mlp::create(actor_sizes, Mlp::Output::Tanh, rng);
    critic_ = Mlp::create(critic_sizes, Mlp::Output::Linear, rng);
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = Adam(actor_, tc.lr);
    critic_opt_ = Adam(critic_, tc.lr);
  }

  explicit DdpgAgent(const Checkpoint& ck, const TrainerConfig& tc = {})
      : gamma_(tc.gamma),
        tau_(tc.tau),
        action_l2_(tc.action_l2),
        bc_weight_(tc.bc_weight),
        q_filter_(tc.q_filter),
        eps_random_(tc.eps_random),
        sigma_noise_(tc.sigma_noise),
        actor_(ck.actor),
        critic_(ck.critic),
        actor_target_(ck.actor_target),
        critic_target_(ck.critic_target),
        actor_opt_(ck.actor, tc.lr),
        critic_opt_(ck.critic, tc.lr) {}

  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }

  Eigen::VectorXd act(const Eigen::VectorXd& obs) const {
    return actor_.forward1(obs);
  }

  // epsilon-random uniform exploration, Gaussian noise otherwise; always
  // inside the action box.
  Eigen::VectorXd explore(const Eigen::VectorXd& obs,
                          std::mt19937_64& rng) const {
    const int d = actor_.output_dim();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < eps_random_) {
      std::uniform_real_distribution<double> box(-1.0, 1.0);
      Eigen::VectorXd a(d);
      for (int i = 0; i < d; ++i) a[i] = box(rng);
      return a;
    }
    Eigen::VectorXd a = act(obs);
    if (sigma_noise_ > 0) {
      std::normal_distribution<double> noise(0.0, sigma_noise_);
      for (int i = 0; i < d; ++i) a[i] += noise(rng);
    }
    return a.cwiseMax(-1.0).cwiseMin(1.0);
  }

  Policy greedy_policy() const {
    return [this](const Eigen::VectorXd& obs, std::mt19937_64&) {
      return act(obs);
    };
  }

  Policy exploration_policy() const {
    return [this](const Eigen::VectorXd& obs, std::mt19937_64& rng) {
      return explore(obs, rng);
    };
  }

  // One optimizer step on the Bellman loss; targets bootstrapped through
  // the target networks and clipped to the return range of {-1,0} rewards.
  double critic_update(const TransitionBatch& batch) {
    const int b = static_cast<int>(batch.rewards.size());
    const Eigen::MatrixXd a2 = actor_target_.forward(batch.next_obs);
    const Eigen::MatrixXd q2 =
        critic_target_.forward(stack(batch.next_obs, a2));
    Eigen::RowVectorXd y =
        batch.rewards.transpose() + gamma_ * q2.row(0);
    const double lo = -1.0 / (1.0 - gamma_);
    y = y.cwiseMax(lo).cwiseMin(0.0);

    Mlp::Cache cache;
    const Eigen::MatrixXd q =
        critic_.forward(stack(batch.obs, batch.actions), &cache);
    const Eigen::RowVectorXd err = q.row(0) - y;
    const double loss = err.squaredNorm() / b;
    if (!std::isfinite(loss))
      throw std::runtime_error("critic_update: non-finite loss");
    const Eigen::MatrixXd dq = (2.0 / b) * err;
    critic_opt_.step(critic_, critic_.backward(cache, dq));
    return loss;
  }

  // Policy loss -E[Q(s, pi(s))] plus the action-magnitude penalty, and the
  // cloning term when a demonstration batch is given. Returns
  // (actor_loss, bc_loss).
  std::pair<double, double> actor_update(const TransitionBatch& batch,
                                         const TransitionBatch* demo) {
    const int b = static_cast<int>(batch.obs.cols());
    Mlp::Cache actor_cache;
    const Eigen::MatrixXd actions = actor_.forward(batch.obs, &actor_cache);

    Mlp::Cache critic_cache;
    const Eigen::MatrixXd q =
        critic_.forward(stack(batch.obs, actions), &critic_cache);

    // quadratic magnitude penalty on the (tanh-squashed) action itself; its
    // gradient fades where the action saturates, so it regularizes without
    // forbidding full-speed motion
    const double penalty = action_l2_ * actions.array().square().mean();
    const double actor_loss = -q.row(0).mean() + penalty;
    if (!std::isfinite(actor_loss))
      throw std::runtime_error("actor_update: non-finite loss");

    Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, b, -1.0 / b);
    const MlpGrads critic_grads = critic_.backward(critic_cache, dq);
    const Eigen::MatrixXd da =
        critic_grads.input.bottomRows(actor_.output_dim()) +
        (2.0 * action_l2_ / static_cast<double>(actions.size())) * actions;
    MlpGrads grads = actor_.backward(actor_cache, da);

    double bc_loss = 0.0;
    if (demo && demo->obs.cols() > 0 && bc_weight_ > 0.0) {
      const int bd = static_cast<int>(demo->obs.cols());
      Mlp::Cache demo_cache;
      const Eigen::MatrixXd pi_d = actor_.forward(demo->obs, &demo_cache);
      Eigen::MatrixXd diff = pi_d - demo->actions;
      if (q_filter_) {
        // keep only pairs where the demo action outranks the policy's
        const Eigen::MatrixXd q_pi =
            critic_.forward(stack(demo->obs, pi_d));
        const Eigen::MatrixXd q_demo =
            critic_.forward(stack(demo->obs, demo->actions));
        for (int i = 0; i < bd; ++i)
          if (q_demo(0, i) <= q_pi(0, i)) diff.col(i).setZero();
      }
      bc_loss = diff.squaredNorm() / bd;
      const Eigen::MatrixXd dbc = (bc_weight_ * 2.0 / bd) * diff;
      detail::accumulate(grads, actor_.backward(demo_cache, dbc));
    }
    actor_opt_.step(actor_, grads);
    return {actor_loss, bc_loss};
  }

  void update_targets() {
    polyak_update(actor_target_, actor_, tau_);
    polyak_update(critic_target_, critic_, tau_);
  }

  Checkpoint checkpoint(const EnvConfig& env_cfg) const {
    return Checkpoint{env_cfg, actor_, critic_, actor_target_, critic_target_};
  }

 private:
  static Eigen::MatrixXd stack(const Eigen::MatrixXd& top,
                               const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd m(top.rows() + bottom.rows(), top.cols());
    m.topRows(top.rows()) = top;
    m.bottomRows(bottom.rows()) = bottom;
    return m;
  }

  double gamma_, tau_, action_l2_, bc_weight_;
  bool q_filter_;
  double eps_random_, sigma_noise_;
  Mlp actor_, critic_, actor_target_, critic_target_;
  Adam actor_opt_, critic_opt_;
};

// Deterministic evaluation: fraction of episodes whose final state earns
// reward 0. max_steps overrides the config horizon (the long-horizon
// evaluation mode uses 1000).
inline double evaluate(const Policy& policy, EnvConfig env_cfg,
                       int n_episodes, int max_steps,
                       std::uint64_t eval_seed) {
  if (n_episodes < 1) throw std::invalid_argument("n_episodes must be >= 1");
  env_cfg.horizon = max_steps;
  env_cfg.seed = eval_seed;
  Environment env(env_cfg);
  std::mt19937_64 unused(0);
  int successes = 0;
  for (int i = 0; i < n_episodes; ++i) {
    const Episode ep = run_episode(env, policy, unused);
    if (ep.success()) ++successes;
  }
  return static_cast<double>(successes) / n_episodes;
}

// Flattened demonstration pairs for cloning batches.
class DemoSampler {
 public:
  explicit DemoSampler(const std::vector<Episode>& episodes) {
    for (const Episode& ep : episodes) {
      for (int t = 0; t < ep.length(); ++t) {
        obs_.push_back(ep.observations[t]);
        actions_.push_back(ep.actions[t]);
      }
    }
    if (obs_.empty()) throw std::invalid_argument("empty demonstration set");
  }

  std::size_t pair_count() const { return obs_.size(); }

  TransitionBatch sample(std::mt19937_64& rng, int batch_size) const {
    TransitionBatch b;
    b.obs.resize(obs_.front().size(), batch_size);
    b.actions.resize(actions_.front().size(), batch_size);
    std::uniform_int_distribution<std::size_t> pick(0, obs_.size() - 1);
    for (int i = 0; i < batch_size; ++i) {
      const std::size_t j = pick(rng);
      b.obs.col(i) = obs_[j];
      b.actions.col(i) = actions_[j];
    }
    return b;
  }

 private:
  std::vector<Eigen::VectorXd> obs_;
  std::vector<Eigen::VectorXd> actions_;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  Checkpoint latest;
  Checkpoint best;
  double best_success = -1.0;
  int epochs_run = 0;
};

using EpochCallback =
    std::function<void(const EpochMetrics&, const DdpgAgent&)>;

// Epoch loop: cycles of (parallel exploration rollouts -> store -> update
// pairs -> Polyak), then a deterministic evaluation.
inline TrainResult train(const EnvConfig& env_cfg, const TrainerConfig& tc,
                         const std::vector<Episode>* demos = nullptr,
                         const EpochCallback& on_epoch = {},
                         const Checkpoint* resume = nullptr) {
  env_cfg.validate();
  tc.validate();

  std::mt19937_64 rng(tc.seed);
  DdpgAgent agent = resume ? DdpgAgent(*resume, tc)
                           : DdpgAgent(env_cfg, tc, rng);
  ReplayBuffer buffer =
      ReplayBuffer::for_env(env_cfg, tc.buffer_capacity_episodes);
  VecEnv vec(tc.n_envs, env_cfg, env_cfg.seed * 0x10001ULL + 1);

  std::optional<DemoSampler> demo_sampler;
  if (demos && !demos->empty()) demo_sampler.emplace(*demos);

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const Policy explore_policy = agent.exploration_policy();

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    double critic_loss = 0.0, actor_loss = 0.0, bc_loss = 0.0;
    long updates = 0;
    for (int cycle = 0; cycle < tc.cycles_per_epoch; ++cycle) {
      for (Episode& ep : vec.rollout(explore_policy, tc.rollouts_per_cycle))
        buffer.store(ep);
      for (int u = 0; u < tc.updates_per_cycle; ++u) {
        const TransitionBatch batch =
            buffer.sample(rng, tc.batch_size, tc.her_k);
        critic_loss += agent.critic_update(batch);
        TransitionBatch demo_batch;
        if (demo_sampler)
          demo_batch = demo_sampler->sample(rng, tc.demo_batch_size);
        const auto [al, bl] = agent.actor_update(
            batch, demo_sampler ? &demo_batch : nullptr);
        actor_loss += al;
        bc_loss += bl;
        ++updates;
      }
      agent.update_targets();
    }

    const double success =
        evaluate(agent.greedy_policy(), env_cfg, tc.eval_episodes,
                 env_cfg.horizon, tc.seed ^ 0xE7A1ULL ^ (std::uint64_t)epoch);

    EpochMetrics m;
    m.epoch = epoch;
    m.success_rate = success;
    m.critic_loss = updates ? critic_loss / updates : 0.0;
    m.actor_loss = updates ? actor_loss / updates : 0.0;
    m.bc_loss = updates ? bc_loss / updates : 0.0;
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.metrics.push_back(m);
    result.epochs_run = epoch;

    result.latest = agent.checkpoint(env_cfg);
    if (success > result.best_success) {
      result.best_success = success;
      result.best = result.latest;
    }
    if (on_epoch) on_epoch(m, agent);
    if (tc.early_stop_success >= 0.0 && success >= tc.early_stop_success)
      break;
  }
  return result;
}

}  // namespace dvrl
