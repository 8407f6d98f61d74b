#pragma once

// Episode-structured replay with future-goal hindsight relabeling. Episodes
// are kept whole because relabeling draws achieved goals from later
// timesteps of the same episode.

#include <deque>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "dvrl/env.hpp"

namespace dvrl {

struct TransitionBatch {
  Eigen::MatrixXd obs;       // obs_dim x batch
  Eigen::MatrixXd actions;   // act_dim x batch
  Eigen::VectorXd rewards;   // batch
  Eigen::MatrixXd next_obs;  // obs_dim x batch
};

class ReplayBuffer {
 public:
  // achieved_offset: where the achieved-goal block sits inside the
  // observation (0 for Reach, 4 for Pick). The desired goal is always the
  // trailing 3 entries.
  ReplayBuffer(int capacity_episodes, int horizon, double delta, double rho,
               int achieved_offset)
      : capacity_(capacity_episodes),
        horizon_(horizon),
        delta_(delta),
        rho_(rho),
        achieved_offset_(achieved_offset) {
    if (capacity_ < 1) throw std::invalid_argument("capacity must be >= 1");
  }

  static ReplayBuffer for_env(const EnvConfig& cfg, int capacity_episodes) {
    return ReplayBuffer(capacity_episodes, cfg.horizon, cfg.delta,
                        cfg.workspace.rho,
                        cfg.kind == EnvKind::Reach ? 0 : 4);
  }

  void store(const Episode& ep) {
    if (ep.length() != horizon_)
      throw std::invalid_argument("episode length != horizon");
    if (static_cast<int>(episodes_.size()) == capacity_)
      episodes_.pop_front();
    episodes_.push_back(ep);
  }

  std::size_t size() const { return episodes_.size(); }
  int achieved_offset() const { return achieved_offset_; }
  double delta() const { return delta_; }
  double rho() const { return rho_; }

  // Uniform transition sampling; with probability k/(k+1) the goal is
  // replaced by the achieved goal of a uniformly chosen future timestep of
  // the same episode and the reward is recomputed.
  TransitionBatch sample(std::mt19937_64& rng, int batch_size,
                         double k) const {
    if (episodes_.empty())
      throw std::runtime_error("sample from empty replay buffer");
    const int od = static_cast<int>(episodes_.front().observations[0].size());
    const int ad = static_cast<int>(episodes_.front().actions[0].size());
    TransitionBatch b;
    b.obs.resize(od, batch_size);
    b.actions.resize(ad, batch_size);
    b.rewards.resize(batch_size);
    b.next_obs.resize(od, batch_size);

    std::uniform_int_distribution<int> pick_ep(
        0, static_cast<int>(episodes_.size()) - 1);
    std::uniform_int_distribution<int> pick_t(0, horizon_ - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double relabel_p = k <= 0.0 ? 0.0 : k / (k + 1.0);

    for (int i = 0; i < batch_size; ++i) {
      const Episode& ep = episodes_[pick_ep(rng)];
      const int t = pick_t(rng);
      Eigen::VectorXd s = ep.observations[t];
      Eigen::VectorXd s2 = ep.observations[t + 1];
      double reward = ep.rewards[t];
      if (unit(rng) < relabel_p) {
        std::uniform_int_distribution<int> pick_future(t + 1, horizon_);
        const Eigen::Vector3d goal = ep.achieved_goals[pick_future(rng)];
        s.tail<3>() = goal;
        s2.tail<3>() = goal;
        reward = compute_reward(ep.achieved_goals[t + 1], goal, delta_, rho_);
      }
      b.obs.col(i) = s;
      b.actions.col(i) = ep.actions[t];
      b.rewards[i] = reward;
      b.next_obs.col(i) = s2;
    }
    return b;
  }

  // Recompute every reward in a batch from its own observations; used to
  // audit relabeling consistency.
  bool rewards_consistent(const TransitionBatch& b) const {
    for (int i = 0; i < b.rewards.size(); ++i) {
      const Eigen::Vector3d achieved =
          b.next_obs.col(i).segment<3>(achieved_offset_);
      const Eigen::Vector3d goal = b.next_obs.col(i).tail<3>();
      if (b.rewards[i] != compute_reward(achieved, goal, delta_, rho_))
        return false;
    }
    return true;
  }

 private:
  std::deque<Episode> episodes_;
  int capacity_;
  int horizon_;
  double delta_;
  double rho_;
  int achieved_offset_;
};

}  // namespace dvrl
